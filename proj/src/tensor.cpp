#include "hafrm/tensor.hpp"

#include <cmath>
#include <sstream>

#include "hafrm/errors.hpp"

namespace hafrm {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
};

Tensor::Tensor() : Tensor(Shape{1}, {0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  auto n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }
std::size_t Tensor::cols() const { return impl_->shape.back(); }
std::size_t Tensor::rows() const { return size() / cols(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(size(), 0.0);
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(size(), 0.0); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, impl_->requires_grad); }

namespace {
thread_local Tape* active_tape = nullptr;
}

void Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(fn)});
}

Tape* Tape::active() { return active_tape; }

Tape::Scope::Scope(Tape* tape) : previous_(active_tape) { active_tape = tape; }
Tape::Scope::~Scope() { active_tape = previous_; }

void backward(const Tensor& loss, Tape& tape) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss does not depend on any tensor that requires a gradient");
  }
  Tensor root = loss;
  root.mutable_grad()[0] = 1.0;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    // Outputs that never received a gradient contribute nothing upstream.
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

double global_grad_norm(std::span<const Tensor> tensors) {
  double total = 0.0;
  for (const auto& t : tensors) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) total += g * g;
  }
  return std::sqrt(total);
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output,
            Tape::BackwardFn fn) {
  output.set_requires_grad(true);
  Tape::active()->record(op, std::move(inputs), output, std::move(fn));
}

void check_finite(std::string_view op, const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

}  // namespace detail

}  // namespace hafrm
