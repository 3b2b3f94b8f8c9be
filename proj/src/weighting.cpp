#include "mtlab/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mtlab {

namespace {

constexpr double kSlawScaleFloor = 1e-5;
constexpr double kGradNormWeightFloor = 1e-4;
constexpr double kGradNormLossFloor = 1e-8;

void check_losses(std::span<const double> losses, const char* what) {
  if (losses.empty()) throw std::invalid_argument(std::string(what) + ": no losses");
  for (double l : losses) {
    if (!std::isfinite(l) || l < 0.0) {
      throw std::invalid_argument(std::string(what) + ": losses must be finite and nonnegative");
    }
  }
}

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

// --------------------------------- SLAW -----------------------------------

SlawState::SlawState(std::size_t n_tasks, double beta)
    : a(n_tasks, 0.0), b(n_tasks, 0.0), s(n_tasks, 0.0), beta(beta) {
  if (n_tasks == 0) throw std::invalid_argument("SlawState: n_tasks must be >= 1");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("SlawState: beta must be in (0,1)");
}

std::vector<double> inverse_scale_weights(std::span<const double> scales) {
  const std::size_t n = scales.size();
  double inv_sum = 0.0;
  for (double s : scales) {
    if (!(s > 0.0)) throw std::invalid_argument("inverse_scale_weights: scales must be positive");
    inv_sum += 1.0 / s;
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = (static_cast<double>(n) / scales[i]) / inv_sum;
  return w;
}

std::vector<double> slaw_update(SlawState& state, std::span<const double> losses) {
  check_losses(losses, "slaw_update");
  if (losses.size() != state.a.size()) throw std::invalid_argument("slaw_update: task count mismatch");
  for (std::size_t i = 0; i < losses.size(); ++i) {
    state.a[i] = state.beta * state.a[i] + (1.0 - state.beta) * losses[i] * losses[i];
    state.b[i] = state.beta * state.b[i] + (1.0 - state.beta) * losses[i];
    const double var = state.a[i] - state.b[i] * state.b[i];
    state.s[i] = std::max(var > 0.0 ? std::sqrt(var) : 0.0, kSlawScaleFloor);
  }
  return inverse_scale_weights(state.s);
}

// ------------------------------- Constant ---------------------------------

std::vector<double> constant_weights(std::size_t n_tasks) {
  return std::vector<double>(n_tasks, 1.0);
}

std::vector<double> ideal_constant_weights(std::span<const double> sigma) {
  std::vector<double> w(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) throw std::invalid_argument("ideal_constant_weights: sigma must be positive");
    w[i] = 1.0 / (sigma[i] * sigma[i]);
  }
  return w;
}

// --------------------------------- DWA ------------------------------------

DwaState::DwaState(std::size_t n_tasks, double temperature)
    : prev1(n_tasks, 0.0), prev2(n_tasks, 0.0), temperature(temperature) {
  if (n_tasks == 0) throw std::invalid_argument("DwaState: n_tasks must be >= 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("DwaState: temperature must be positive");
}

std::vector<double> dwa_update(DwaState& state, std::span<const double> losses) {
  check_losses(losses, "dwa_update");
  const std::size_t n = state.prev1.size();
  if (losses.size() != n) throw std::invalid_argument("dwa_update: task count mismatch");

  std::vector<double> w(n, 1.0);
  if (state.observed >= 2) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = state.prev2[i] == 0.0 ? 1.0 : state.prev1[i] / state.prev2[i];
    }
    const double r_max = *std::max_element(r.begin(), r.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) denom += std::exp((r[i] - r_max) / state.temperature);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = static_cast<double>(n) * std::exp((r[i] - r_max) / state.temperature) / denom;
    }
  }

  state.prev2 = state.prev1;
  state.prev1.assign(losses.begin(), losses.end());
  ++state.observed;
  return w;
}

// ------------------------------ Uncertainty -------------------------------

std::vector<double> UncertaintyState::effective_weights() const {
  std::vector<double> w(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) w[i] = 0.5 * std::exp(-eta[i]);
  return w;
}

NodeId uncertainty_total(Tape& tape, std::span<const NodeId> loss_nodes,
                         std::span<const NodeId> eta_nodes) {
  if (loss_nodes.size() != eta_nodes.size() || loss_nodes.empty()) {
    throw std::invalid_argument("uncertainty_total: need one eta per loss");
  }
  NodeId total = 0;
  bool first = true;
  for (std::size_t i = 0; i < loss_nodes.size(); ++i) {
    const NodeId precision = tape.exp(tape.scale(eta_nodes[i], -1.0));
    const NodeId term = tape.add(tape.scale(tape.mul(precision, loss_nodes[i]), 0.5),
                                 tape.scale(eta_nodes[i], 0.5));
    total = first ? term : tape.add(total, term);
    first = false;
  }
  return total;
}

double uncertainty_total_value(std::span<const double> losses, std::span<const double> eta) {
  if (losses.size() != eta.size()) throw std::invalid_argument("uncertainty_total_value: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    total += 0.5 * std::exp(-eta[i]) * losses[i] + 0.5 * eta[i];
  }
  return total;
}

// -------------------------------- GradNorm --------------------------------

GradNormState::GradNormState(std::size_t n_tasks, double alpha, double weight_lr)
    : w(n_tasks, 1.0),
      initial_losses(n_tasks, 0.0),
      alpha(alpha),
      optimizer(std::vector<Tensor>{Tensor::zeros({n_tasks})}, AdamConfig{weight_lr, 0.9, 0.999, 1e-8}) {
  if (n_tasks == 0) throw std::invalid_argument("GradNormState: n_tasks must be >= 1");
}

std::vector<double> gradnorm_rates(std::span<const double> losses,
                                   std::span<const double> initial_losses) {
  const std::size_t n = losses.size();
  std::vector<double> rel(n);
  for (std::size_t i = 0; i < n; ++i) rel[i] = losses[i] / initial_losses[i];
  const double rel_mean = mean(rel);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = rel[i] / rel_mean;
  return r;
}

double gradnorm_loss(std::span<const double> w, std::span<const double> grad_norms,
                     std::span<const double> rates, double alpha) {
  const double g_mean = mean(grad_norms);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += std::abs(w[i] * grad_norms[i] - g_mean * std::pow(rates[i], alpha));
  }
  return total;
}

std::vector<double> gradnorm_loss_subgradient(std::span<const double> w,
                                              std::span<const double> grad_norms,
                                              std::span<const double> rates, double alpha) {
  const double g_mean = mean(grad_norms);
  std::vector<double> grad(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double residual = w[i] * grad_norms[i] - g_mean * std::pow(rates[i], alpha);
    if (residual > 0.0) grad[i] = grad_norms[i];
    else if (residual < 0.0) grad[i] = -grad_norms[i];
  }
  return grad;
}

std::vector<double> gradnorm_update(GradNormState& state, std::span<const double> losses,
                                    std::span<const double> grad_norms) {
  check_losses(losses, "gradnorm_update");
  const std::size_t n = state.w.size();
  if (losses.size() != n || grad_norms.size() != n) {
    throw std::invalid_argument("gradnorm_update: task count mismatch");
  }
  for (double g : grad_norms) {
    if (!(g >= 0.0)) throw std::invalid_argument("gradnorm_update: norms must be nonnegative");
  }

  if (!state.initial_captured) {
    for (std::size_t i = 0; i < n; ++i) {
      state.initial_losses[i] = losses[i] > 0.0 ? losses[i] : kGradNormLossFloor;
    }
    state.initial_captured = true;
  }

  const std::vector<double> rates = gradnorm_rates(losses, state.initial_losses);
  const std::vector<double> grad = gradnorm_loss_subgradient(state.w, grad_norms, rates, state.alpha);

  // One Adam step on the weight vector.
  std::vector<Tensor> w_param{Tensor::zeros({n})};
  for (std::size_t i = 0; i < n; ++i) w_param[0][i] = state.w[i];
  Tensor g_tensor = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) g_tensor[i] = grad[i];
  state.optimizer.step(w_param, GradientMap(std::vector<Tensor>{std::move(g_tensor)}));
  for (std::size_t i = 0; i < n; ++i) state.w[i] = w_param[0][i];

  // Renormalize to mean 1; the floor guards against nonpositive weights.
  for (double& wi : state.w) wi = std::max(wi, kGradNormWeightFloor);
  const double w_mean = mean(state.w);
  for (double& wi : state.w) wi /= w_mean;
  for (double& wi : state.w) wi = std::max(wi, kGradNormWeightFloor);

  return state.w;
}

std::vector<double> gradnorm_raw_solution(std::span<const double> grad_norms,
                                          std::span<const double> rates, double alpha) {
  const double g_mean = mean(grad_norms);
  std::vector<double> w(grad_norms.size());
  for (std::size_t i = 0; i < grad_norms.size(); ++i) {
    if (!(grad_norms[i] > 0.0)) throw std::invalid_argument("gradnorm_raw_solution: norms must be positive");
    w[i] = g_mean * std::pow(rates[i], alpha) / grad_norms[i];
  }
  return w;
}

std::vector<double> gradnorm_closed_form(std::span<const double> grad_norms,
                                         std::span<const double> rates, double alpha) {
  const std::size_t n = grad_norms.size();
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(grad_norms[i] > 0.0)) throw std::invalid_argument("gradnorm_closed_form: norms must be positive");
    scaled[i] = grad_norms[i] / std::pow(rates[i], alpha);
  }
  return inverse_scale_weights(scaled);
}

// --------------------------------- PCGrad ---------------------------------

namespace {

std::vector<double> flatten_subset(const GradientMap& grads, std::span<const ParamId> ids) {
  std::vector<double> flat;
  for (ParamId id : ids) {
    const Tensor& g = grads.at(id);
    flat.insert(flat.end(), g.values().begin(), g.values().end());
  }
  return flat;
}

double dot_flat(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

GradientMap pcgrad_combine(std::span<const GradientMap> task_grads,
                           std::span<const ParamId> shared_ids, Rng& rng,
                           std::vector<double>* projection_dots) {
  if (task_grads.empty()) throw std::invalid_argument("pcgrad_combine: no task gradients");
  const std::size_t n = task_grads.size();

  std::vector<std::vector<double>> original(n);
  std::vector<double> norms_sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    original[i] = flatten_subset(task_grads[i], shared_ids);
    if (original[i].size() != original[0].size()) {
      throw std::invalid_argument("pcgrad_combine: task gradients cover different shared sets");
    }
    norms_sq[i] = dot_flat(original[i], original[i]);
  }

  std::vector<std::size_t> task_order(n);
  std::iota(task_order.begin(), task_order.end(), 0);
  rng.shuffle(task_order);

  std::vector<double> combined(original[0].size(), 0.0);
  std::vector<std::size_t> other(n);
  for (std::size_t i : task_order) {
    std::vector<double> projected = original[i];
    std::iota(other.begin(), other.end(), 0);
    rng.shuffle(other);
    for (std::size_t j : other) {
      if (j == i || norms_sq[j] == 0.0) continue;
      const double inner = dot_flat(projected, original[j]);
      if (inner < 0.0) {
        const double coeff = inner / norms_sq[j];
        for (std::size_t k = 0; k < projected.size(); ++k) projected[k] -= coeff * original[j][k];
        if (projection_dots) projection_dots->push_back(dot_flat(projected, original[j]));
      }
    }
    for (std::size_t k = 0; k < combined.size(); ++k) combined[k] += projected[k];
  }

  // Unflatten into a map covering the same id space; non-shared entries zero.
  const std::size_t max_id = task_grads[0].size();
  std::vector<Tensor> out(max_id);
  for (ParamId id = 0; id < max_id; ++id) {
    if (task_grads[0].contains(id)) out[id] = Tensor::zeros(task_grads[0].at(id).shape());
  }
  std::size_t offset = 0;
  for (ParamId id : shared_ids) {
    Tensor& g = out[id];
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = combined[offset + k];
    offset += g.size();
  }
  return GradientMap(std::move(out));
}

}  // namespace mtlab
