#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hafrm/tensor.hpp"

namespace hafrm {

// [m x k] * [k x n] -> [m x n]. Each output row accumulates over k in a fixed
// order, so row i depends only on row i of `a` (bit-exact causal behaviour).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
// x[m x n] + bias[n], bias broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);

// Stable elementwise log(sigmoid(x)) = min(x, 0) - log1p(exp(-|x|)).
Tensor log_sigmoid(const Tensor& x);

// Row-wise over the last dimension, max-subtracted.
Tensor log_softmax(const Tensor& x);
// Square [T x T] scores; row i is normalised over columns j <= i and is zero
// for j > i.
Tensor causal_softmax(const Tensor& scores);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Rows of `table` selected by `ids` -> [ids.size() x cols].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Concatenates size-1 tensors into a [n] vector.
Tensor stack(const std::vector<Tensor>& scalars);
// out[i] = x[rows[i], cols[i]].
Tensor gather(const Tensor& x, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace hafrm
