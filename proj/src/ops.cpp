#include "hafrm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hafrm/errors.hpp"

namespace hafrm {

namespace {

void require_rank2(std::string_view op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n]. Every element adds its k terms in
// increasing k order so a row's result never depends on the other rows; a
// tile of C stays in registers across the k loop.
void gemm_acc(const double* __restrict a, const double* __restrict b, double* __restrict c,
              std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t kTile = 8;
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    std::size_t j = 0;
    for (; j + kTile <= n; j += kTile) {
      double acc[kTile];
      for (std::size_t t = 0; t < kTile; ++t) acc[t] = crow[j + t];
      const double* bp = b + j;
      for (std::size_t p = 0; p < k; ++p, bp += n) {
        const double aip = arow[p];
        for (std::size_t t = 0; t < kTile; ++t) acc[t] += aip * bp[t];
      }
      for (std::size_t t = 0; t < kTile; ++t) crow[j + t] = acc[t];
    }
    for (; j < n; ++j) {
      double acc = crow[j];
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

std::vector<double> transposed(std::span<const double> x, std::size_t rows, std::size_t cols) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = x[i * cols + j];
  return out;
}

Tensor finish(std::string_view op, Tensor out) {
  detail::check_finite(op, out);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor c = finish("matmul", Tensor({m, n}, std::move(out)));
  if (detail::should_record({&a, &b})) {
    detail::record("matmul", {a, b}, c, [a, b, c, m, k, n]() mutable {
      auto dc = c.mutable_grad();
      if (a.requires_grad()) {
        // dA = dC * B^T
        auto bt = transposed(b.data(), k, n);
        gemm_acc(dc.data(), bt.data(), a.mutable_grad().data(), m, n, k);
      }
      if (b.requires_grad()) {
        // dB = A^T * dC
        auto at = transposed(a.data(), m, k);
        gemm_acc(at.data(), dc.data(), b.mutable_grad().data(), k, m, n);
      }
    });
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r}, transposed(a.data(), r, c));
  if (detail::should_record({&a})) {
    detail::record("transpose", {a}, out, [a, out, r, c]() mutable {
      auto back = transposed(out.mutable_grad(), c, r);
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < back.size(); ++i) ga[i] += back[i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  Tensor c = finish("add", Tensor(a.shape(), std::move(out)));
  if (detail::should_record({&a, &b})) {
    detail::record("add", {a, b}, c, [a, b, c]() mutable {
      auto dc = c.mutable_grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
      }
    });
  }
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  Tensor c = finish("sub", Tensor(a.shape(), std::move(out)));
  if (detail::should_record({&a, &b})) {
    detail::record("sub", {a, b}, c, [a, b, c]() mutable {
      auto dc = c.mutable_grad();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= dc[i];
      }
    });
  }
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  Tensor c = finish("mul", Tensor(a.shape(), std::move(out)));
  if (detail::should_record({&a, &b})) {
    detail::record("mul", {a, b}, c, [a, b, c]() mutable {
      auto dc = c.mutable_grad();
      auto x = a.data(), y = b.data();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * y[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * x[i];
      }
    });
  }
  return c;
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  Tensor c = finish("scale", Tensor(a.shape(), std::move(out)));
  if (detail::should_record({&a})) {
    detail::record("scale", {a}, c, [a, c, factor]() mutable {
      auto dc = c.mutable_grad();
      auto g = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i] * factor;
    });
  }
  return c;
}

Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += offset;
  Tensor c = finish("add_scalar", Tensor(a.shape(), std::move(out)));
  if (detail::should_record({&a})) {
    detail::record("add_scalar", {a}, c, [a, c]() mutable {
      auto dc = c.mutable_grad();
      auto g = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
    });
  }
  return c;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.size() != x.cols()) {
    throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) +
                         " does not match rows of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += b[j];
  Tensor c = finish("add_row_bias", Tensor(x.shape(), std::move(out)));
  if (detail::should_record({&x, &bias})) {
    detail::record("add_row_bias", {x, bias}, c, [x, bias, c, rows, cols]() mutable {
      auto dc = c.mutable_grad();
      if (x.requires_grad()) {
        auto g = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dc[i];
      }
      if (bias.requires_grad()) {
        auto g = bias.mutable_grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) g[j] += dc[i * cols + j];
      }
    });
  }
  return c;
}

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  std::vector<double> tanh_u(x.size());
  auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double xi = v[i];
    tanh_u[i] = std::tanh(kSqrt2OverPi * (xi + kGeluCoeff * xi * xi * xi));
    out[i] = 0.5 * xi * (1.0 + tanh_u[i]);
  }
  Tensor c = finish("gelu", Tensor(x.shape(), std::move(out)));
  if (detail::should_record({&x})) {
    detail::record("gelu", {x}, c, [x, c, tanh_u = std::move(tanh_u)]() mutable {
      auto dc = c.mutable_grad();
      auto v = x.data();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double xi = v[i], t = tanh_u[i];
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * xi * xi);
        g[i] += dc[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du);
      }
    });
  }
  return c;
}

Tensor log_sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  auto v = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::min(v[i], 0.0) - std::log1p(std::exp(-std::abs(v[i])));
  }
  Tensor c = finish("log_sigmoid", Tensor(x.shape(), std::move(out)));
  if (detail::should_record({&x})) {
    detail::record("log_sigmoid", {x}, c, [x, c]() mutable {
      auto dc = c.mutable_grad();
      auto v = x.data();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        // d/dx log sigmoid(x) = sigmoid(-x)
        double s;
        if (v[i] >= 0) {
          const double e = std::exp(-v[i]);
          s = e / (1.0 + e);
        } else {
          s = 1.0 / (1.0 + std::exp(v[i]));
        }
        g[i] += dc[i] * s;
      }
    });
  }
  return c;
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < cols; ++j) o[j] = in[j] - lse;
  }
  Tensor c = finish("log_softmax", Tensor(x.shape(), std::move(out)));
  if (detail::should_record({&x})) {
    detail::record("log_softmax", {x}, c, [x, c, rows, cols]() mutable {
      auto dc = c.mutable_grad();
      auto y = c.data();
      auto g = x.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * cols;
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) total += dc[off + j];
        for (std::size_t j = 0; j < cols; ++j) {
          g[off + j] += dc[off + j] - std::exp(y[off + j]) * total;
        }
      }
    });
  }
  return c;
}

Tensor causal_softmax(const Tensor& scores) {
  require_rank2("causal_softmax", scores);
  const std::size_t t = scores.shape()[0];
  if (scores.shape()[1] != t) {
    throw DimensionError("causal_softmax: expected square scores, got " +
                         shape_str(scores.shape()));
  }
  std::vector<double> out(t * t, 0.0);
  auto v = scores.data();
  for (std::size_t i = 0; i < t; ++i) {
    const double* in = v.data() + i * t;
    double* o = out.data() + i * t;
    const double mx = *std::max_element(in, in + i + 1);
    double total = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j <= i; ++j) o[j] /= total;
  }
  Tensor c = finish("causal_softmax", Tensor(scores.shape(), std::move(out)));
  if (detail::should_record({&scores})) {
    detail::record("causal_softmax", {scores}, c, [scores, c, t]() mutable {
      auto dc = c.mutable_grad();
      auto p = c.data();
      auto g = scores.mutable_grad();
      for (std::size_t i = 0; i < t; ++i) {
        const std::size_t off = i * t;
        double dot = 0.0;
        for (std::size_t j = 0; j <= i; ++j) dot += p[off + j] * dc[off + j];
        for (std::size_t j = 0; j <= i; ++j) g[off + j] += p[off + j] * (dc[off + j] - dot);
      }
    });
  }
  return c;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match " + shape_str(x.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.rows();
  std::vector<double> out(x.size()), xhat(x.size()), rstd(rows);
  auto v = x.data();
  auto gv = gain.data(), bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  Tensor c = finish("layer_norm", Tensor(x.shape(), std::move(out)));
  if (detail::should_record({&x, &gain, &bias})) {
    detail::record("layer_norm", {x, gain, bias}, c,
                   [x, gain, bias, c, d, rows, xhat = std::move(xhat),
                    rstd = std::move(rstd)]() mutable {
                     auto dc = c.mutable_grad();
                     auto gv = gain.data();
                     if (gain.requires_grad()) {
                       auto gg = gain.mutable_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < d; ++j) gg[j] += dc[r * d + j] * xhat[r * d + j];
                     }
                     if (bias.requires_grad()) {
                       auto gb = bias.mutable_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < d; ++j) gb[j] += dc[r * d + j];
                     }
                     if (x.requires_grad()) {
                       auto gx = x.mutable_grad();
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const std::size_t off = r * d;
                         double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dxh = dc[off + j] * gv[j];
                           mean_dxhat += dxh;
                           mean_dxhat_xhat += dxh * xhat[off + j];
                         }
                         mean_dxhat *= inv_d;
                         mean_dxhat_xhat *= inv_d;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double dxh = dc[off + j] * gv[j];
                           gx[off + j] +=
                               rstd[r] * (dxh - mean_dxhat - xhat[off + j] * mean_dxhat_xhat);
                         }
                       }
                     }
                   });
  }
  return c;
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require_rank2("embedding", table);
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw DimensionError("embedding: empty id sequence");
  std::vector<double> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table " +
                           shape_str(table.shape()));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  Tensor c(Shape{ids.size(), d}, std::move(out));
  if (detail::should_record({&table})) {
    std::vector<std::int32_t> saved(ids.begin(), ids.end());
    detail::record("embedding", {table}, c, [table, c, d, saved = std::move(saved)]() mutable {
      auto dc = c.mutable_grad();
      auto g = table.mutable_grad();
      for (std::size_t i = 0; i < saved.size(); ++i) {
        double* row = g.data() + static_cast<std::size_t>(saved[i]) * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += dc[i * d + j];
      }
    });
  }
  return c;
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2("slice_rows", x);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (count == 0 || start + count > rows) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  auto v = x.data();
  std::vector<double> out(v.begin() + start * cols, v.begin() + (start + count) * cols);
  Tensor c(Shape{count, cols}, std::move(out));
  if (detail::should_record({&x})) {
    detail::record("slice_rows", {x}, c, [x, c, start, cols]() mutable {
      auto dc = c.mutable_grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < dc.size(); ++i) g[start * cols + i] += dc[i];
    });
  }
  return c;
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2("slice_cols", x);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (count == 0 || start + count > cols) {
    throw DimensionError("slice_cols: cols [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  auto v = x.data();
  std::vector<double> out(rows * count);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(v.data() + i * cols + start, count, out.data() + i * count);
  Tensor c(Shape{rows, count}, std::move(out));
  if (detail::should_record({&x})) {
    detail::record("slice_cols", {x}, c, [x, c, start, rows, cols, count]() mutable {
      auto dc = c.mutable_grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < count; ++j) g[i * cols + start + j] += dc[i * count + j];
    });
  }
  return c;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p);
    if (p.shape()[0] != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.shape()[1];
  }
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    auto v = p.data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  Tensor c(Shape{rows, total}, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && Tape::active() != nullptr) {
    detail::record("concat_cols", parts, c, [parts, c, rows, total]() mutable {
      auto dc = c.mutable_grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t w = p.shape()[1];
        if (p.requires_grad()) {
          auto g = p.mutable_grad();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += dc[i * total + offset + j];
        }
        offset += w;
      }
    });
  }
  return c;
}

Tensor stack(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw DimensionError("stack: no inputs");
  std::vector<double> out;
  out.reserve(scalars.size());
  bool any = false;
  for (const auto& s : scalars) {
    out.push_back(s.item());
    any = any || s.requires_grad();
  }
  Tensor c = Tensor::vector(std::move(out));
  if (any && Tape::active() != nullptr) {
    detail::record("stack", scalars, c, [scalars, c]() mutable {
      auto dc = c.mutable_grad();
      for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (scalars[i].requires_grad()) scalars[i].mutable_grad()[0] += dc[i];
      }
    });
  }
  return c;
}

Tensor gather(const Tensor& x, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols) {
  require_rank2("gather", x);
  if (rows.size() != cols.size() || rows.empty()) {
    throw DimensionError("gather: need equal, non-empty row/col index lists");
  }
  const std::size_t nr = x.shape()[0], nc = x.shape()[1];
  std::vector<std::size_t> flat(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= nr || cols[i] >= nc) {
      throw DimensionError("gather: index (" + std::to_string(rows[i]) + ", " +
                           std::to_string(cols[i]) + ") outside " + shape_str(x.shape()));
    }
    flat[i] = rows[i] * nc + cols[i];
  }
  std::vector<double> out(flat.size());
  auto v = x.data();
  for (std::size_t i = 0; i < flat.size(); ++i) out[i] = v[flat[i]];
  Tensor c = Tensor::vector(std::move(out));
  if (detail::should_record({&x})) {
    detail::record("gather", {x}, c, [x, c, flat = std::move(flat)]() mutable {
      auto dc = c.mutable_grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < flat.size(); ++i) g[flat[i]] += dc[i];
    });
  }
  return c;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor c = finish("sum", Tensor::scalar(total));
  if (detail::should_record({&x})) {
    detail::record("sum", {x}, c, [x, c]() mutable {
      const double dc = c.mutable_grad()[0];
      for (double& g : x.mutable_grad()) g += dc;
    });
  }
  return c;
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor c = finish("mean", Tensor::scalar(total / n));
  if (detail::should_record({&x})) {
    detail::record("mean", {x}, c, [x, c, n]() mutable {
      const double dc = c.mutable_grad()[0] / n;
      for (double& g : x.mutable_grad()) g += dc;
    });
  }
  return c;
}

}  // namespace hafrm
