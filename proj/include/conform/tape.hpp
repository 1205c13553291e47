#pragma once

// Reverse-mode differentiation over the closed set of operations the
// guidance pipeline uses. Every operation is recorded on a Tape in execution
// order; backward() replays the records in reverse, so the recording order is
// the topological order.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

#include "conform/tensor.hpp"

namespace conform {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while its Tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Adjoint accumulators indexed by node. Slots are zero-filled on first touch.
class Adjoints {
 public:
  Tensor& slot(std::size_t node);
  bool touched(std::size_t node) const { return !grads_[node].shape().empty(); }

 private:
  friend class Tape;
  explicit Adjoints(const Tape& tape);

  const Tape* tape_;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  /// Propagates the adjoint of one node into the adjoints of its parents.
  using BackwardFn = std::function<void(const Tensor& grad, Adjoints& adjoints)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf marked differentiable; backward() may return its gradient.
  Var input(Tensor value);
  /// Leaf carrying no gradient.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_[v.index()].value; }
  bool requires_grad(Var v) const { return nodes_[v.index()].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradients of the scalar `output` with respect to each of `wrt`, in order.
  /// Throws ContractError if `output` is not a one-element tensor or a `wrt`
  /// entry was not created with input().
  std::vector<Tensor> backward(Var output, std::span<const Var> wrt);
  Tensor gradient(Var output, Var wrt);

  /// Nodes visited by the most recent backward pass.
  std::size_t last_backward_visits() const noexcept { return last_visits_; }

  /// Appends a node. Used by the operations below; `parents` must already be on this tape.
  /// Throws NumericError if `value` contains NaN or Inf.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn backward);

 private:
  friend class Adjoints;

  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool is_input = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;
};

// Operations. All operands must live on the same tape.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);
/// Row-wise softmax of a matrix, max-subtracted.
Var softmax_rows(Var a);
Var reshape(Var a, Shape shape);
/// Slice at index `j` of the last axis: [..., l] -> [...].
Var slice_last(Var a, std::size_t j);
/// One element (flat index) as a scalar.
Var element(Var a, std::size_t i);
/// Concatenate scalars into a vector.
Var stack(std::span<const Var> scalars);
/// log(sum(exp(a))) over all elements, max-subtracted.
Var logsumexp(Var a);
Var dot(Var a, Var b);
/// Cosine similarity of two tensors viewed as flat vectors.
/// Throws DegenerateInputError if either has zero norm.
Var cosine_sim(Var a, Var b);

}  // namespace conform
