#include "hafrm/losses.hpp"

#include <cmath>

#include "hafrm/errors.hpp"
#include "hafrm/ops.hpp"

namespace hafrm {

void HybridConfig::validate(bool allow_negative_alpha) const {
  if (!std::isfinite(alpha)) throw ConfigError("alpha must be finite");
  if (alpha < 0.0 && !allow_negative_alpha) {
    throw ConfigError("alpha must be >= 0 (got " + std::to_string(alpha) + ")");
  }
  if (!std::isfinite(tau) || !(tau > 0.0)) throw ConfigError("tau must be finite and > 0");
}

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::kHybrid:
      return "hybrid";
    case Objective::kBaseline:
      return "baseline";
    case Objective::kPolicyOnly:
      return "dpo";
  }
  return "hybrid";
}

Objective objective_from_string(const std::string& name) {
  if (name == "hybrid") return Objective::kHybrid;
  if (name == "baseline") return Objective::kBaseline;
  if (name == "dpo") return Objective::kPolicyOnly;
  throw ConfigError("unknown objective '" + name + "' (expected hybrid, baseline or dpo)");
}

nlohmann::json loss_log_entry(std::int64_t step, const LossBreakdown& b) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["step"] = step;
  j["l_s"] = num(b.l_s);
  j["l_p"] = num(b.l_p);
  j["l_h"] = num(b.l_h);
  j["margin"] = num(b.margin);
  j["pd_win_mean"] = num(b.pd_win_mean);
  j["pd_lose_mean"] = num(b.pd_lose_mean);
  return j;
}

namespace {

void require_pairs(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": chosen/rejected shapes differ " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_finite(std::string_view op, std::initializer_list<const Tensor*> inputs) {
  for (const auto* t : inputs) {
    for (double v : t->data()) {
      if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

Tensor as_vector(std::span<const double> v) {
  if (v.empty()) throw ContractError("loss over an empty batch");
  return Tensor::vector(std::vector<double>(v.begin(), v.end()));
}

}  // namespace

Tensor reward_loss(const Tensor& r_w, const Tensor& r_l) {
  require_pairs("reward_loss", r_w, r_l);
  require_finite("reward_loss", {&r_w, &r_l});
  return scale(mean(log_sigmoid(sub(r_w, r_l))), -1.0);
}

double reward_loss(std::span<const double> r_w, std::span<const double> r_l) {
  NoGrad no_grad;
  return reward_loss(as_vector(r_w), as_vector(r_l)).item();
}

Tensor policy_loss_dpo(const Tensor& logp_w, const Tensor& logp_l, const Tensor& ref_w,
                       const Tensor& ref_l, double tau) {
  if (!std::isfinite(tau) || !(tau > 0.0)) throw ConfigError("tau must be finite and > 0");
  require_pairs("policy_loss_dpo", logp_w, logp_l);
  require_pairs("policy_loss_dpo", logp_w, ref_w);
  require_pairs("policy_loss_dpo", logp_w, ref_l);
  require_finite("policy_loss_dpo", {&logp_w, &logp_l, &ref_w, &ref_l});
  Tensor pd_win = sub(logp_w, ref_w);
  Tensor pd_lose = sub(logp_l, ref_l);
  return scale(mean(log_sigmoid(scale(sub(pd_win, pd_lose), tau))), -1.0);
}

double policy_loss_dpo(std::span<const double> logp_w, std::span<const double> logp_l,
                       std::span<const double> ref_w, std::span<const double> ref_l, double tau) {
  NoGrad no_grad;
  return policy_loss_dpo(as_vector(logp_w), as_vector(logp_l), as_vector(ref_w),
                         as_vector(ref_l), tau)
      .item();
}

ReferenceLogProbs reference_log_probs(const DualHeadModel& reference,
                                      const EncodedPreference& pair) {
  return {reference.sequence_log_prob_value(pair.chosen),
          reference.sequence_log_prob_value(pair.rejected)};
}

HybridLoss hybrid_loss(std::span<const EncodedPreference> batch, const DualHeadModel& model,
                       std::span<const ReferenceLogProbs> reference, const HybridConfig& cfg,
                       Objective objective) {
  if (batch.empty()) throw ContractError("hybrid_loss: empty batch");
  if (reference.size() != batch.size() && objective != Objective::kBaseline) {
    throw ContractError("hybrid_loss: reference log-probs do not match the batch");
  }
  using Mode = DualHeadModel::HeadMode;
  const Mode reward_mode = objective == Objective::kPolicyOnly ? Mode::kDetached : Mode::kTracked;
  Mode logp_mode = Mode::kTracked;
  if (objective == Objective::kBaseline) {
    logp_mode = Mode::kSkip;
  } else if (objective == Objective::kHybrid && cfg.alpha == 0.0) {
    // Reported, but kept off the tape so the graph equals the baseline graph.
    logp_mode = Mode::kDetached;
  }

  std::vector<Tensor> r_w, r_l, lp_w, lp_l;
  for (const auto& pair : batch) {
    auto w = model.forward_heads(pair.chosen, reward_mode, logp_mode);
    auto l = model.forward_heads(pair.rejected, reward_mode, logp_mode);
    r_w.push_back(*w.reward);
    r_l.push_back(*l.reward);
    if (logp_mode != Mode::kSkip) {
      lp_w.push_back(*w.log_prob);
      lp_l.push_back(*l.log_prob);
    }
  }

  HybridLoss out;
  LossBreakdown& b = out.breakdown;
  const Tensor rewards_w = stack(r_w), rewards_l = stack(r_l);
  const Tensor l_s = reward_loss(rewards_w, rewards_l);
  b.l_s = l_s.item();
  double margin = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) margin += rewards_w.at(i) - rewards_l.at(i);
  b.margin = margin / static_cast<double>(batch.size());

  std::optional<Tensor> l_p;
  if (logp_mode != Mode::kSkip) {
    std::vector<double> ref_w, ref_l;
    double pd_w = 0.0, pd_l = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ref_w.push_back(reference[i].chosen);
      ref_l.push_back(reference[i].rejected);
      pd_w += lp_w[i].item() - reference[i].chosen;
      pd_l += lp_l[i].item() - reference[i].rejected;
    }
    l_p = policy_loss_dpo(stack(lp_w), stack(lp_l), Tensor::vector(ref_w), Tensor::vector(ref_l),
                          cfg.tau);
    b.l_p = l_p->item();
    b.pd_win_mean = pd_w / static_cast<double>(batch.size());
    b.pd_lose_mean = pd_l / static_cast<double>(batch.size());
  }

  switch (objective) {
    case Objective::kBaseline:
      out.objective = l_s;
      break;
    case Objective::kPolicyOnly:
      out.objective = *l_p;
      break;
    case Objective::kHybrid:
      out.objective = cfg.alpha == 0.0 ? l_s : add(l_s, scale(*l_p, cfg.alpha));
      break;
  }
  b.l_h = out.objective.item();
  return out;
}

HybridLoss hybrid_loss(std::span<const EncodedPreference> batch, const DualHeadModel& model,
                       const DualHeadModel& reference, const HybridConfig& cfg,
                       Objective objective) {
  std::vector<ReferenceLogProbs> ref;
  if (objective != Objective::kBaseline) {
    for (const auto& pair : batch) ref.push_back(reference_log_probs(reference, pair));
  }
  return hybrid_loss(batch, model, ref, cfg, objective);
}

}  // namespace hafrm
