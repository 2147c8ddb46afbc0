#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hafrm/tensor.hpp"

namespace hafrm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
  double weight_decay = 0.0;
};

struct OptimState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;
};

// AdamW with bias-corrected moments and decoupled weight decay:
//   p <- p * (1 - lr * wd)
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(AdamWConfig config, std::vector<Tensor> params);

  void step();
  void zero_grad();

  const OptimState& state() const { return state_; }
  void set_state(OptimState state);
  const std::vector<Tensor>& params() const { return params_; }
  const AdamWConfig& config() const { return config_; }

 private:
  AdamWConfig config_;
  std::vector<Tensor> params_;
  OptimState state_;
};

// Scales all gradients so their global L2 norm is at most max_norm; leaves
// them untouched when already within bound. Returns the pre-clip norm.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace hafrm
