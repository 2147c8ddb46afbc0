#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hafrm/tensor.hpp"

namespace hafrm {

struct GradCheckReport {
  bool passed = false;
  // Set when an evaluation of f was non-finite or threw a NumericError.
  std::optional<std::string> numeric_error;
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  // Location of the worst coordinate: input index and flat offset.
  std::size_t worst_input = 0;
  std::size_t worst_offset = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-6;
  // When set, at most this many coordinates per input are checked, chosen
  // by a seeded draw. All coordinates are checked otherwise.
  std::optional<std::size_t> coords_per_input;
  // Explicit offsets per input; a non-empty entry overrides the draw above.
  std::vector<std::vector<std::size_t>> coords;
  std::uint64_t seed = 0;
};

// Compares the taped gradient of a scalar function against central
// differences (f(x + h e_i) - f(x - h e_i)) / 2h. The relative error of a
// coordinate is |a - n| / max(1, |a|, |n|); the check passes iff the maximum
// is <= tol. `f` reads the current values of `inputs`, which are perturbed in
// place and restored.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options);

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol);

}  // namespace hafrm
