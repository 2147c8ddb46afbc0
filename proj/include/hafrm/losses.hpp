#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hafrm/model.hpp"
#include "hafrm/tensor.hpp"

namespace hafrm {

struct HybridConfig {
  double alpha = 0.2;  // policy-loss weight
  double tau = 0.1;    // scale on the log-ratio difference inside the DPO sigmoid

  // Negative alpha is rejected unless explicitly allowed (sweep experiments).
  void validate(bool allow_negative_alpha = false) const;
};

// What the training step minimises:
//   kHybrid      l_s + alpha * l_p
//   kBaseline    l_s only; the policy head is never evaluated
//   kPolicyOnly  l_p only (DPO); rewards are still reported for telemetry
enum class Objective { kHybrid, kBaseline, kPolicyOnly };

std::string to_string(Objective objective);
Objective objective_from_string(const std::string& name);

struct LossBreakdown {
  double l_s = 0.0;
  // NaN when the objective never evaluates the policy head (baseline).
  double l_p = std::numeric_limits<double>::quiet_NaN();
  // Value of the optimised objective.
  double l_h = 0.0;
  double margin = 0.0;
  double pd_win_mean = std::numeric_limits<double>::quiet_NaN();
  double pd_lose_mean = std::numeric_limits<double>::quiet_NaN();
};

// One log line: {step, l_s, l_p, l_h, margin, pd_win_mean, pd_lose_mean};
// values never computed serialise as null.
nlohmann::json loss_log_entry(std::int64_t step, const LossBreakdown& b);

// Mean over pairs of -log sigmoid(r_w - r_l).
Tensor reward_loss(const Tensor& r_w, const Tensor& r_l);
double reward_loss(std::span<const double> r_w, std::span<const double> r_l);

// Mean over pairs of -log sigmoid(tau * (pd_win - pd_lose)), where
// pd = policy log-prob - reference log-prob.
Tensor policy_loss_dpo(const Tensor& logp_w, const Tensor& logp_l, const Tensor& ref_w,
                       const Tensor& ref_l, double tau);
double policy_loss_dpo(std::span<const double> logp_w, std::span<const double> logp_l,
                       std::span<const double> ref_w, std::span<const double> ref_l, double tau);

struct EncodedPreference {
  std::string id;
  EncodedPair chosen;
  EncodedPair rejected;
};

struct ReferenceLogProbs {
  double chosen = 0.0;
  double rejected = 0.0;
};

ReferenceLogProbs reference_log_probs(const DualHeadModel& reference, const EncodedPreference& pair);

struct HybridLoss {
  Tensor objective;
  LossBreakdown breakdown;
};

// Rewards and response log-probs for both sides of every pair come from one
// backbone pass per sequence, all on the active tape.
HybridLoss hybrid_loss(std::span<const EncodedPreference> batch, const DualHeadModel& model,
                       std::span<const ReferenceLogProbs> reference, const HybridConfig& cfg,
                       Objective objective = Objective::kHybrid);
HybridLoss hybrid_loss(std::span<const EncodedPreference> batch, const DualHeadModel& model,
                       const DualHeadModel& reference, const HybridConfig& cfg,
                       Objective objective = Objective::kHybrid);

}  // namespace hafrm
