#include "hafrm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hafrm/errors.hpp"
#include "hafrm/rng.hpp"

namespace hafrm {

namespace {

std::optional<double> evaluate(const std::function<Tensor()>& f) {
  NoGrad no_grad;
  try {
    const double v = f().item();
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const NumericError&) {
    return std::nullopt;
  }
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw ContractError("grad_check: h must be positive");
  GradCheckReport report;

  std::vector<bool> saved_flags;
  for (auto& t : inputs) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }

  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tape::Scope scope(&tape);
    Tensor loss;
    try {
      loss = f();
    } catch (const NumericError& e) {
      report.numeric_error = e.what();
      return report;
    }
    if (!std::isfinite(loss.item())) {
      report.numeric_error = "f is non-finite at the base point";
      return report;
    }
    backward(loss, tape);
  }
  for (auto& t : inputs) analytic.push_back(t.grad());

  Rng rng(options.seed);
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    Tensor& t = inputs[idx];
    std::vector<std::size_t> coords(t.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (idx < options.coords.size() && !options.coords[idx].empty()) {
      coords = options.coords[idx];
      for (std::size_t c : coords) {
        if (c >= t.size()) throw ContractError("grad_check: coordinate out of range");
      }
    } else if (options.coords_per_input && *options.coords_per_input < coords.size()) {
      rng.shuffle(coords);
      coords.resize(*options.coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    auto values = t.mutable_data();
    for (std::size_t c : coords) {
      const double original = values[c];
      values[c] = original + options.h;
      auto plus = evaluate(f);
      values[c] = original - options.h;
      auto minus = evaluate(f);
      values[c] = original;
      if (!plus || !minus) {
        report.numeric_error = "f is non-finite near input " + std::to_string(idx) + " offset " +
                               std::to_string(c);
        report.passed = false;
        return report;
      }
      const double numeric = (*plus - *minus) / (2.0 * options.h);
      const double a = analytic[idx][c];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.coords_checked;
      if (report.coords_checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_input = idx;
        report.worst_offset = c;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) inputs[i].set_requires_grad(saved_flags[i]);
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol) {
  Tensor input = x;
  GradCheckOptions options;
  options.h = h;
  options.tol = tol;
  return grad_check([&]() { return f(input); }, {input}, options);
}

}  // namespace hafrm
