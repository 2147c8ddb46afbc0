#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hafrm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. Copies share storage (handle semantics);
// use clone() for a deep copy. Values are treated as immutable once an op has
// produced them; only leaf parameters are updated in place by the optimizer.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  // Matrix view: a tensor of shape [..., n] is treated as (size / n) rows of n.
  std::size_t cols() const;
  std::size_t rows() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  // Read access; an unallocated gradient reads as zeros of matching length.
  std::vector<double> grad() const;
  // Allocates a zero gradient on first access.
  std::span<double> mutable_grad() const;
  void zero_grad();

  Tensor clone() const;
  bool defined() const { return impl_ != nullptr; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Ordered record of executed ops. Ops append to the active tape of the
// calling thread when at least one input requires a gradient.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  static Tape* active();

  // Makes `tape` the active tape for the current thread for the lifetime of
  // the scope. Passing nullptr suspends recording (inference mode).
  class Scope {
   public:
    explicit Scope(Tape* tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

 private:
  std::vector<Node> nodes_;
};

// Suspends recording for the current thread.
class NoGrad {
 public:
  NoGrad() : scope_(nullptr) {}

 private:
  Tape::Scope scope_;
};

// Reverse traversal from a scalar loss. Gradients accumulate with += so a
// tensor consumed by several paths receives the sum of their contributions.
void backward(const Tensor& loss, Tape& tape);

// Sums squared gradients over the given tensors and returns the L2 norm.
double global_grad_norm(std::span<const Tensor> tensors);

namespace detail {

// True when an op over `inputs` should be recorded on the active tape.
bool should_record(std::initializer_list<const Tensor*> inputs);

// Records `output` on the active tape. The backward closure reads
// output.grad() and accumulates into the inputs that require gradients.
void record(std::string_view op, std::vector<Tensor> inputs, Tensor& output,
            Tape::BackwardFn fn);

// Throws NumericError if any value is NaN or infinite.
void check_finite(std::string_view op, const Tensor& t);

}  // namespace detail

}  // namespace hafrm
