#include "hafrm/optim.hpp"

#include <cmath>

#include "hafrm/errors.hpp"

namespace hafrm {

AdamW::AdamW(AdamWConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
  if (!(config_.lr > 0.0)) throw ConfigError("AdamW: lr must be positive");
  for (const auto& p : params_) {
    state_.first_moment.emplace_back(p.size(), 0.0);
    state_.second_moment.emplace_back(p.size(), 0.0);
  }
}

void AdamW::set_state(OptimState state) {
  if (state.first_moment.size() != params_.size() ||
      state.second_moment.size() != params_.size()) {
    throw FormatError("optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (state.first_moment[i].size() != params_[i].size() ||
        state.second_moment[i].size() != params_[i].size()) {
      throw FormatError("optimizer moment " + std::to_string(i) + " has the wrong length");
    }
  }
  state_ = std::move(state);
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  const double decay = 1.0 - config_.lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto values = p.mutable_data();
    auto grad = p.mutable_grad();
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      if (config_.weight_decay != 0.0) values[j] *= decay;
      values[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace hafrm
