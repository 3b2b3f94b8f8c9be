#include "mtlab/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mtlab {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EMat>;
using ConstMatMap = Eigen::Map<const EMat>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " +
                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::BiasAdd: return "bias_add";
    case Op::Tanh: return "tanh";
    case Op::Relu: return "relu";
    case Op::Square: return "square";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Scale: return "scale";
    case Op::Shift: return "shift";
  }
  return "?";
}

const Tensor& GradientMap::at(ParamId id) const {
  if (!contains(id)) throw std::out_of_range("GradientMap: unknown parameter id " + std::to_string(id));
  return grads_[id];
}

Tensor& GradientMap::at(ParamId id) {
  if (!contains(id)) throw std::out_of_range("GradientMap: unknown parameter id " + std::to_string(id));
  return grads_[id];
}

bool GradientMap::all_finite() const noexcept {
  for (const Tensor& g : grads_) {
    if (!g.all_finite()) return false;
  }
  return true;
}

NodeId Tape::push(Op op, NodeId a, NodeId b, double c, Tensor value) {
  entries_.push_back(Entry{op, a, b, c, std::move(value)});
  return entries_.size() - 1;
}

const Tensor& Tape::operand(NodeId id, Op op) const {
  if (id >= entries_.size()) {
    throw std::invalid_argument(std::string(op_name(op)) + ": operand id " + std::to_string(id) +
                                " not on tape");
  }
  return entries_[id].value;
}

NodeId Tape::leaf(Tensor value) { return push(Op::Leaf, 0, 0, 0.0, std::move(value)); }

NodeId Tape::param(Tensor value, ParamId id) {
  for (const auto& [node, pid] : watched_) {
    (void)node;
    if (pid == id) throw std::invalid_argument("Tape::param: parameter id " + std::to_string(id) + " already tracked");
  }
  const NodeId node = leaf(std::move(value));
  watched_.emplace_back(node, id);
  return node;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& ta = operand(a, Op::Add);
  const Tensor& tb = operand(b, Op::Add);
  if (!ta.same_shape(tb)) shape_error(Op::Add, ta, tb);
  Tensor out = Tensor::zeros(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
  return push(Op::Add, a, b, 0.0, std::move(out));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& ta = operand(a, Op::Sub);
  const Tensor& tb = operand(b, Op::Sub);
  if (!ta.same_shape(tb)) shape_error(Op::Sub, ta, tb);
  Tensor out = Tensor::zeros(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
  return push(Op::Sub, a, b, 0.0, std::move(out));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& ta = operand(a, Op::Mul);
  const Tensor& tb = operand(b, Op::Mul);
  if (!ta.same_shape(tb)) shape_error(Op::Mul, ta, tb);
  Tensor out = Tensor::zeros(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
  return push(Op::Mul, a, b, 0.0, std::move(out));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& ta = operand(a, Op::MatMul);
  const Tensor& tb = operand(b, Op::MatMul);
  if (ta.ndim() != 2 || tb.ndim() != 2 || ta.cols() != tb.rows()) shape_error(Op::MatMul, ta, tb);
  Tensor out = Tensor::zeros({ta.rows(), tb.cols()});
  as_matrix(out).noalias() = as_matrix(ta) * as_matrix(tb);
  return push(Op::MatMul, a, b, 0.0, std::move(out));
}

NodeId Tape::bias_add(NodeId m, NodeId bias) {
  const Tensor& tm = operand(m, Op::BiasAdd);
  const Tensor& tb = operand(bias, Op::BiasAdd);
  if (tm.ndim() != 2 || tb.ndim() != 1 || tm.cols() != tb.size()) shape_error(Op::BiasAdd, tm, tb);
  Tensor out = Tensor::zeros(tm.shape());
  const std::size_t r = tm.rows(), c = tm.cols();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = tm[i * c + j] + tb[j];
  }
  return push(Op::BiasAdd, m, bias, 0.0, std::move(out));
}

NodeId Tape::unary(Op op, NodeId a) {
  const Tensor& ta = operand(a, op);
  Tensor out = Tensor::zeros(ta.shape());
  switch (op) {
    case Op::Tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ta[i]);
      break;
    case Op::Relu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] > 0.0 ? ta[i] : 0.0;
      break;
    case Op::Square:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * ta[i];
      break;
    case Op::Log:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (ta[i] <= 0.0) throw std::domain_error("log: nonpositive input");
        out[i] = std::log(ta[i]);
      }
      break;
    case Op::Exp:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(ta[i]);
      break;
    default:
      throw std::logic_error("unary: bad op");
  }
  return push(op, a, 0, 0.0, std::move(out));
}

NodeId Tape::tanh(NodeId a) { return unary(Op::Tanh, a); }
NodeId Tape::relu(NodeId a) { return unary(Op::Relu, a); }
NodeId Tape::square(NodeId a) { return unary(Op::Square, a); }
NodeId Tape::log(NodeId a) { return unary(Op::Log, a); }
NodeId Tape::exp(NodeId a) { return unary(Op::Exp, a); }

NodeId Tape::sum(NodeId a) {
  const Tensor& ta = operand(a, Op::Sum);
  double acc = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
  return push(Op::Sum, a, 0, 0.0, Tensor::scalar(acc));
}

NodeId Tape::mean(NodeId a) {
  const Tensor& ta = operand(a, Op::Mean);
  double acc = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) acc += ta[i];
  return push(Op::Mean, a, 0, 0.0, Tensor::scalar(acc / static_cast<double>(ta.size())));
}

NodeId Tape::scale(NodeId a, double c) {
  const Tensor& ta = operand(a, Op::Scale);
  Tensor out = Tensor::zeros(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * ta[i];
  return push(Op::Scale, a, 0, c, std::move(out));
}

NodeId Tape::shift(NodeId a, double c) {
  const Tensor& ta = operand(a, Op::Shift);
  Tensor out = Tensor::zeros(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + c;
  return push(Op::Shift, a, 0, c, std::move(out));
}

const Tensor& Tape::value(NodeId id) const {
  if (id >= entries_.size()) throw std::out_of_range("Tape::value: id not on tape");
  return entries_[id].value;
}

GradientMap Tape::backward(NodeId output) const {
  std::vector<ParamId> all;
  all.reserve(watched_.size());
  for (const auto& [node, pid] : watched_) {
    (void)node;
    all.push_back(pid);
  }
  return backward(output, all);
}

GradientMap Tape::backward(NodeId output, std::span<const ParamId> subset) const {
  if (output >= entries_.size()) throw std::invalid_argument("backward: output id not on tape");
  if (!entries_[output].value.is_scalar()) {
    throw std::invalid_argument("backward: output must be scalar, got shape " +
                                shape_str(entries_[output].value.shape()));
  }

  const std::size_t n = entries_.size();

  // needs_grad: node can reach a selected parameter (forward closure).
  std::vector<char> selected(watched_.size(), 0);
  auto watched_index = [&](ParamId pid) -> std::size_t {
    for (std::size_t k = 0; k < watched_.size(); ++k) {
      if (watched_[k].second == pid) return k;
    }
    throw std::out_of_range("backward: parameter id " + std::to_string(pid) + " is not tracked");
  };
  for (ParamId pid : subset) selected[watched_index(pid)] = 1;

  std::vector<char> needs_grad(n, 0);
  for (std::size_t k = 0; k < watched_.size(); ++k) {
    if (selected[k]) needs_grad[watched_[k].first] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Entry& e = entries_[i];
    if (e.op == Op::Leaf) continue;
    const bool binary = e.op == Op::Add || e.op == Op::Sub || e.op == Op::Mul ||
                        e.op == Op::MatMul || e.op == Op::BiasAdd;
    if (needs_grad[e.a] || (binary && needs_grad[e.b])) needs_grad[i] = 1;
  }

  // live: node is an ancestor of output (reverse closure).
  std::vector<char> live(n, 0);
  live[output] = 1;
  for (std::size_t i = n; i-- > 0;) {
    if (!live[i]) continue;
    const Entry& e = entries_[i];
    if (e.op == Op::Leaf) continue;
    live[e.a] = 1;
    const bool binary = e.op == Op::Add || e.op == Op::Sub || e.op == Op::Mul ||
                        e.op == Op::MatMul || e.op == Op::BiasAdd;
    if (binary) live[e.b] = 1;
  }

  std::vector<Tensor> grads(n);
  auto grad_of = [&](NodeId id) -> Tensor& {
    if (grads[id].size() == 0) grads[id] = Tensor::zeros(entries_[id].value.shape());
    return grads[id];
  };
  grad_of(output)[0] = 1.0;

  for (std::size_t i = n; i-- > 0;) {
    if (!live[i] || !needs_grad[i] || grads[i].size() == 0) continue;
    const Entry& e = entries_[i];
    const Tensor& g = grads[i];
    switch (e.op) {
      case Op::Leaf:
        break;
      case Op::Add: {
        if (needs_grad[e.a]) {
          Tensor& ga = grad_of(e.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (needs_grad[e.b]) {
          Tensor& gb = grad_of(e.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k];
        }
        break;
      }
      case Op::Sub: {
        if (needs_grad[e.a]) {
          Tensor& ga = grad_of(e.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (needs_grad[e.b]) {
          Tensor& gb = grad_of(e.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& va = entries_[e.a].value;
        const Tensor& vb = entries_[e.b].value;
        if (needs_grad[e.a]) {
          Tensor& ga = grad_of(e.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * vb[k];
        }
        if (needs_grad[e.b]) {
          Tensor& gb = grad_of(e.b);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * va[k];
        }
        break;
      }
      case Op::MatMul: {
        const Tensor& va = entries_[e.a].value;
        const Tensor& vb = entries_[e.b].value;
        if (needs_grad[e.a]) {
          as_matrix(grad_of(e.a)).noalias() += as_matrix(g) * as_matrix(vb).transpose();
        }
        if (needs_grad[e.b]) {
          as_matrix(grad_of(e.b)).noalias() += as_matrix(va).transpose() * as_matrix(g);
        }
        break;
      }
      case Op::BiasAdd: {
        const std::size_t r = g.rows(), c = g.cols();
        if (needs_grad[e.a]) {
          Tensor& ga = grad_of(e.a);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        }
        if (needs_grad[e.b]) {
          Tensor& gb = grad_of(e.b);
          for (std::size_t ri = 0; ri < r; ++ri) {
            for (std::size_t ci = 0; ci < c; ++ci) gb[ci] += g[ri * c + ci];
          }
        }
        break;
      }
      case Op::Tanh: {
        Tensor& ga = grad_of(e.a);
        const Tensor& y = e.value;
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case Op::Relu: {
        Tensor& ga = grad_of(e.a);
        const Tensor& x = entries_[e.a].value;
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += x[k] > 0.0 ? g[k] : 0.0;
        break;
      }
      case Op::Square: {
        Tensor& ga = grad_of(e.a);
        const Tensor& x = entries_[e.a].value;
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * 2.0 * x[k];
        break;
      }
      case Op::Log: {
        Tensor& ga = grad_of(e.a);
        const Tensor& x = entries_[e.a].value;
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] / x[k];
        break;
      }
      case Op::Exp: {
        Tensor& ga = grad_of(e.a);
        const Tensor& y = e.value;
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * y[k];
        break;
      }
      case Op::Sum: {
        Tensor& ga = grad_of(e.a);
        const double s = g[0];
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += s;
        break;
      }
      case Op::Mean: {
        Tensor& ga = grad_of(e.a);
        const double s = g[0] / static_cast<double>(ga.size());
        for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += s;
        break;
      }
      case Op::Scale: {
        Tensor& ga = grad_of(e.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += e.c * g[k];
        break;
      }
      case Op::Shift: {
        Tensor& ga = grad_of(e.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        break;
      }
    }
  }

  ParamId max_id = 0;
  for (std::size_t k = 0; k < watched_.size(); ++k) {
    if (selected[k] && watched_[k].second + 1 > max_id) max_id = watched_[k].second + 1;
  }
  std::vector<Tensor> out(max_id);
  for (std::size_t k = 0; k < watched_.size(); ++k) {
    if (!selected[k]) continue;
    const auto [node, pid] = watched_[k];
    out[pid] = grads[node].size() > 0 ? std::move(grads[node])
                                      : Tensor::zeros(entries_[node].value.shape());
  }
  return GradientMap(std::move(out));
}

std::vector<Tensor> Tape::replay() const {
  Tape fresh;
  for (const Entry& e : entries_) {
    switch (e.op) {
      case Op::Leaf: fresh.leaf(e.value); break;
      case Op::Add: fresh.add(e.a, e.b); break;
      case Op::Sub: fresh.sub(e.a, e.b); break;
      case Op::Mul: fresh.mul(e.a, e.b); break;
      case Op::MatMul: fresh.matmul(e.a, e.b); break;
      case Op::BiasAdd: fresh.bias_add(e.a, e.b); break;
      case Op::Tanh: fresh.tanh(e.a); break;
      case Op::Relu: fresh.relu(e.a); break;
      case Op::Square: fresh.square(e.a); break;
      case Op::Log: fresh.log(e.a); break;
      case Op::Exp: fresh.exp(e.a); break;
      case Op::Sum: fresh.sum(e.a); break;
      case Op::Mean: fresh.mean(e.a); break;
      case Op::Scale: fresh.scale(e.a, e.c); break;
      case Op::Shift: fresh.shift(e.a, e.c); break;
    }
  }
  std::vector<Tensor> values;
  values.reserve(fresh.entries_.size());
  for (Entry& e : fresh.entries_) values.push_back(std::move(e.value));
  return values;
}

double global_grad_norm(const GradientMap& grads, std::span<const ParamId> subset) {
  double acc = 0.0;
  for (ParamId id : subset) acc += squared_norm(grads.at(id));
  return std::sqrt(acc);
}

double global_grad_norm(const GradientMap& grads) {
  double acc = 0.0;
  for (ParamId id = 0; id < grads.size(); ++id) {
    if (grads.contains(id)) acc += squared_norm(grads.at(id));
  }
  return std::sqrt(acc);
}

}  // namespace mtlab
