#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sdre/array.hpp"

// Define-by-run reverse-mode differentiation over dense arrays.
//
// A Tape records every primitive as it executes. `backward` replays the
// records in exact reverse order and returns gradients keyed by the
// parameters that were bound to the tape. A tape is rebuilt for each
// training step and is confined to the thread that built it.
namespace sdre::ad {

struct Parameter {
  std::string name;
  Array value;
};

enum class OpKind {
  Leaf,
  Constant,
  Matmul,
  Add,
  Multiply,
  Sigmoid,
  Tanh,
  B2Bsqrt,
  Relu,
  SoftmaxLast,
  Log,
  SumAxis,
  Scale,
  Concat,
  LayerNormLast,
  LogSumExpLast,
  Reshape,
  Slice,
  GatherRows,
};

std::string_view to_string(OpKind kind);

class Tape;

class Var {
 public:
  Var() = default;

  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class GradientMap {
 public:
  // Parameters bound to the tape that never reached the loss map to zeros.
  // Throws std::out_of_range for a parameter that was never bound.
  const Array& at(const Parameter& p) const;
  bool contains(const Parameter& p) const { return grads_.count(&p) != 0; }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<const Parameter*, Array> grads_;
};

class Tape {
 public:
  // Receives the gradient flowing into the node's output.
  using BackwardFn = std::function<void(Tape&, const Array& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  // Binding the same parameter twice returns the same variable.
  Var parameter(Parameter& p);
  Var record(OpKind kind, Array value, std::vector<std::size_t> inputs, BackwardFn backward);

  GradientMap backward(const Var& loss);

  const Array& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  // Gradient accumulator for a node, allocated as zeros on first use.
  Array& grad(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  // Node ids in the order the last backward pass visited them.
  const std::vector<std::size_t>& backward_trace() const noexcept { return trace_; }

 private:
  struct Node {
    OpKind kind;
    Array value;
    Array grad;
    bool has_grad = false;
    bool needs_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  // A deque keeps references to earlier values valid while the tape grows.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  std::vector<std::size_t> trace_;
};

// Primitives. Shape errors name the op kind and the offending shapes.

// a: [..., M, K]; b: [K, N] (or [N, K] with transpose_b) -> [..., M, N].
// With rank-3 a and b the product is batched over the leading axis.
Var matmul(const Var& a, const Var& b, bool transpose_b = false);
// b must equal a's shape or a suffix of it (broadcast over leading axes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var multiply(const Var& a, const Var& b);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var b2bsqrt(const Var& x, double alpha);
Var relu(const Var& x);
Var softmax_last(const Var& x);
Var log(const Var& x);
Var sum_axis(const Var& x, std::size_t axis);
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var scale(const Var& x, double c);
Var concat(const std::vector<Var>& xs, std::size_t axis);
Var layernorm_last(const Var& x, double eps = 1e-5);
Var logsumexp_last(const Var& x);
Var reshape(const Var& x, Shape shape);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length);
// Rows of x along axis 0, in index order; repeated indices accumulate.
Var gather_rows(const Var& x, const std::vector<std::size_t>& rows);

// Max over coordinates of |analytic - numeric| / max(1, |numeric|), where the
// numeric gradient is a central difference of step eps.
using ScalarGraph = std::function<Var(Tape&, const std::vector<Var>&)>;
double finite_diff_check(const ScalarGraph& f, std::vector<Parameter>& params, double eps);
// Same over parameters owned elsewhere (e.g. by a network); f may bind them itself.
double finite_diff_check(const ScalarGraph& f, const std::vector<Parameter*>& params, double eps);

}  // namespace sdre::ad
