#include "mtlab/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

#include "mtlab/rng.hpp"

namespace mtlab {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EMat> as_matrix(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

// Uniform on +/- sqrt(1/fan_in), applied to both weight and bias.
Tensor init_uniform(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + s + "' (expected relu or tanh)");
}

const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

MultiTaskNet MultiTaskNet::build(const NetConfig& config) {
  if (config.input_dim == 0 || config.output_dim == 0 || config.hidden == 0 ||
      config.depth == 0 || config.n_tasks == 0) {
    throw std::invalid_argument("build_net: all dimensions must be positive");
  }

  MultiTaskNet net;
  net.config_ = config;
  Rng rng(config.init_seed);

  // Trunk: input -> hidden -> ... -> hidden (depth affine layers).
  std::size_t in = config.input_dim;
  for (std::size_t layer = 0; layer < config.depth; ++layer) {
    const std::size_t out = config.hidden;
    net.params_.push_back(init_uniform(rng, {in, out}, in));
    net.params_.push_back(init_uniform(rng, {out}, in));
    const ParamId w = net.params_.size() - 2;
    net.shared_ids_.push_back(w);
    net.shared_ids_.push_back(w + 1);
    if (layer + 1 == config.depth) net.last_shared_ids_ = {w, w + 1};
    in = out;
  }

  // One affine head per task: hidden -> output_dim, no activation.
  for (std::size_t task = 0; task < config.n_tasks; ++task) {
    net.params_.push_back(init_uniform(rng, {config.hidden, config.output_dim}, config.hidden));
    net.params_.push_back(init_uniform(rng, {config.output_dim}, config.hidden));
    const ParamId w = net.params_.size() - 2;
    net.head_ids_.push_back({w, w + 1});
  }
  return net;
}

std::size_t MultiTaskNet::scalar_param_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.size();
  return n;
}

std::size_t MultiTaskNet::shared_scalar_param_count() const {
  std::size_t n = 0;
  for (ParamId id : shared_ids_) n += params_[id].size();
  return n;
}

std::span<const ParamId> MultiTaskNet::head_ids(std::size_t task) const {
  if (task >= head_ids_.size()) throw std::out_of_range("head_ids: bad task index");
  return head_ids_[task];
}

std::vector<ParamId> MultiTaskNet::task_specific_ids() const {
  std::vector<ParamId> ids;
  for (const auto& head : head_ids_) ids.insert(ids.end(), head.begin(), head.end());
  return ids;
}

std::vector<NodeId> MultiTaskNet::forward(Tape& tape, const Tensor& x) const {
  if (x.ndim() != 2 || x.cols() != config_.input_dim) {
    throw std::invalid_argument("forward: input width " + shape_str(x.shape()) + " does not match input_dim " +
                                std::to_string(config_.input_dim));
  }

  std::vector<NodeId> param_nodes(params_.size());
  for (ParamId id = 0; id < params_.size(); ++id) param_nodes[id] = tape.param(params_[id], id);

  NodeId h = tape.leaf(x);
  for (std::size_t layer = 0; layer < config_.depth; ++layer) {
    const ParamId w = shared_ids_[2 * layer];
    h = tape.bias_add(tape.matmul(h, param_nodes[w]), param_nodes[w + 1]);
    h = config_.activation == Activation::Relu ? tape.relu(h) : tape.tanh(h);
  }

  std::vector<NodeId> outputs;
  outputs.reserve(config_.n_tasks);
  for (std::size_t task = 0; task < config_.n_tasks; ++task) {
    const ParamId w = head_ids_[task][0];
    outputs.push_back(tape.bias_add(tape.matmul(h, param_nodes[w]), param_nodes[w + 1]));
  }
  return outputs;
}

std::vector<Tensor> MultiTaskNet::predict(const Tensor& x) const {
  if (x.ndim() != 2 || x.cols() != config_.input_dim) {
    throw std::invalid_argument("predict: input width mismatch");
  }
  const std::size_t batch = x.rows();

  EMat h = as_matrix(x);
  for (std::size_t layer = 0; layer < config_.depth; ++layer) {
    const Tensor& w = params_[shared_ids_[2 * layer]];
    const Tensor& b = params_[shared_ids_[2 * layer] + 1];
    EMat z = h * as_matrix(w);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        double v = z(r, c) + b[static_cast<std::size_t>(c)];
        z(r, c) = config_.activation == Activation::Relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
      }
    }
    h = std::move(z);
  }

  std::vector<Tensor> outputs;
  outputs.reserve(config_.n_tasks);
  for (std::size_t task = 0; task < config_.n_tasks; ++task) {
    const Tensor& w = params_[head_ids_[task][0]];
    const Tensor& b = params_[head_ids_[task][0] + 1];
    EMat z = h * as_matrix(w);
    Tensor out = Tensor::zeros({batch, config_.output_dim});
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
            z(r, c) + b[static_cast<std::size_t>(c)];
      }
    }
    outputs.push_back(std::move(out));
  }
  return outputs;
}

Adam::Adam(const std::vector<Tensor>& params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.push_back(Tensor::zeros(p.shape()));
    v_.push_back(Tensor::zeros(p.shape()));
  }
}

void Adam::step(std::vector<Tensor>& params, const GradientMap& grads) {
  if (params.size() != m_.size()) throw std::invalid_argument("Adam::step: parameter count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (ParamId id = 0; id < params.size(); ++id) {
    const Tensor& g = grads.at(id);
    Tensor& p = params[id];
    if (!g.same_shape(p)) {
      throw std::invalid_argument("Adam::step: gradient shape " + shape_str(g.shape()) +
                                  " does not match parameter " + shape_str(p.shape()));
    }
    Tensor& m = m_[id];
    Tensor& v = v_[id];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Sgd::step(std::vector<Tensor>& params, const GradientMap& grads) {
  for (ParamId id = 0; id < params.size(); ++id) {
    const Tensor& g = grads.at(id);
    Tensor& p = params[id];
    if (!g.same_shape(p)) throw std::invalid_argument("Sgd::step: gradient shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr_ * g[k];
  }
}

GradientMap clip_global_norm(GradientMap grads, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(grads);
  if (norm <= max_norm) return grads;
  const double factor = max_norm / norm;
  for (ParamId id = 0; id < grads.size(); ++id) {
    if (!grads.contains(id)) continue;
    Tensor& g = grads.at(id);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= factor;
  }
  return grads;
}

}  // namespace mtlab
