#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mtlab/tensor.hpp"

namespace mtlab {

using NodeId = std::size_t;
using ParamId = std::size_t;

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,      // elementwise
  MatMul,
  BiasAdd,  // matrix (r x c) + row vector (c), broadcast over rows
  Tanh,
  Relu,
  Square,
  Log,
  Exp,
  Sum,      // -> scalar
  Mean,     // -> scalar
  Scale,    // c * x
  Shift,    // x + c
};

const char* op_name(Op op);

// Gradients keyed by ParamId; every tracked parameter has an entry of the
// same shape as the parameter.
class GradientMap {
public:
  GradientMap() = default;
  explicit GradientMap(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

  std::size_t size() const noexcept { return grads_.size(); }
  bool contains(ParamId id) const noexcept {
    return id < grads_.size() && grads_[id].size() > 0;
  }
  const Tensor& at(ParamId id) const;
  Tensor& at(ParamId id);
  bool all_finite() const noexcept;

private:
  std::vector<Tensor> grads_;
};

// Gradient tape, rebuilt each training step (define-by-run). Operand node
// ids always precede their result, so a single reverse sweep performs the
// vector-Jacobian accumulation.
class Tape {
public:
  NodeId leaf(Tensor value);
  // Leaf tracked for backward(); each ParamId may be watched at most once.
  NodeId param(Tensor value, ParamId id);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId bias_add(NodeId m, NodeId bias);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId square(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId shift(NodeId a, double c);

  const Tensor& value(NodeId id) const;
  std::size_t node_count() const noexcept { return entries_.size(); }
  std::size_t tracked_param_count() const noexcept { return watched_.size(); }

  // d(output)/d(param) for every tracked parameter; parameters unreachable
  // from output map to zero tensors. Output must be scalar.
  GradientMap backward(NodeId output) const;

  // Same, restricted to a subset of tracked parameters. Skips every
  // vector-Jacobian product that cannot reach the subset, so a per-task
  // backward pass over a few layers costs only those layers.
  GradientMap backward(NodeId output, std::span<const ParamId> subset) const;

  // Recomputes every node value from the leaves; bit-exact against the
  // stored values by construction.
  std::vector<Tensor> replay() const;

private:
  struct Entry {
    Op op;
    NodeId a = 0;
    NodeId b = 0;
    double c = 0.0;
    Tensor value;
  };

  NodeId push(Op op, NodeId a, NodeId b, double c, Tensor value);
  NodeId unary(Op op, NodeId a);
  const Tensor& operand(NodeId id, Op op) const;

  std::vector<Entry> entries_;
  std::vector<std::pair<NodeId, ParamId>> watched_;
};

// Euclidean norm of the concatenation of the selected gradient tensors.
double global_grad_norm(const GradientMap& grads, std::span<const ParamId> subset);
double global_grad_norm(const GradientMap& grads);

}  // namespace mtlab
