#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "jemlab/tensor.hpp"

namespace jemlab::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of executed primitives. Nodes are appended in execution
/// order, so the record is already topologically sorted; backward walks it in
/// reverse and touches each node once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is tracked.
  Var variable(Tensor value);
  /// Leaf treated as a constant.
  Var constant(Tensor value);

  /// Appends an interior node. `inputs` are the node ids the result depends on;
  /// the node requires a gradient iff any input does.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar seed. Replaces any gradients from earlier sweeps.
  void backward(Var seed);

  /// Gradient accumulated at `v` by the last backward sweep (zeros if unreached).
  Tensor grad(Var v) const;

  bool requires_grad(Var v) const { return nodes_.at(v.id()).requires_grad; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient buffer of an input node, allocated on first use.
  Tensor& accumulator(std::size_t id);
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until reached
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::optional<std::size_t> last_seed_;
};

// ---- primitives -----------------------------------------------------------
// Every primitive accepts an optional leading batch axis.

/// weights [K×N], bias [K], input [N] or [B×N] -> [K] or [B×K].
Var affine(Var weights, Var bias, Var input);

/// kernel [O×C×k×k], input [C×H×W] or [B×C×H×W]; plain cross-correlation.
Var conv2d(Var kernel, Var input, std::size_t stride, std::size_t padding);

Var leaky_relu(Var input, double slope);

/// Log-sum-exp over the last axis: [K] -> scalar, [B×K] -> [B].
Var logsumexp(Var values);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);

/// Collapses everything after the batch axis: [B×...] -> [B×D].
Var flatten(Var a);

/// Spatial average: [B×C×H×W] -> [B×C] (or [C×H×W] -> [C]).
Var mean_pool(Var a);

// ---- eager helpers --------------------------------------------------------

/// Max-shifted log-sum-exp of a flat vector.
double logsumexp(std::span<const double> values);

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

}  // namespace jemlab::ad
