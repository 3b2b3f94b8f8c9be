#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mtlab/nn.hpp"
#include "mtlab/rng.hpp"
#include "mtlab/tape.hpp"

namespace mtlab {

// ---------------------------------------------------------------------------
// SLAW: estimates each task's gradient norm by the running standard deviation
// of its loss (EMA first and second moments) and sets w_i proportional to
// 1/s_i, normalized so the weights sum to n.
// ---------------------------------------------------------------------------

struct SlawState {
  std::vector<double> a;  // EMA of L^2
  std::vector<double> b;  // EMA of L
  std::vector<double> s;  // clamped std estimate
  double beta;

  explicit SlawState(std::size_t n_tasks, double beta = 0.99);
};

// w_i = (n / s_i) / sum_j (1 / s_j); the shared core of SLAW and the
// closed-form gradient-norm solution.
std::vector<double> inverse_scale_weights(std::span<const double> scales);

std::vector<double> slaw_update(SlawState& state, std::span<const double> losses);

// ---------------------------------------------------------------------------
// Constant baselines
// ---------------------------------------------------------------------------

std::vector<double> constant_weights(std::size_t n_tasks);

// Raw 1/sigma_i^2, no renormalization; the oracle weighting on the synthetic
// regression suite.
std::vector<double> ideal_constant_weights(std::span<const double> sigma);

// ---------------------------------------------------------------------------
// Dynamic Weight Averaging: softmax over the loss ratio of the two most
// recent steps, temperature T, scaled so the weights sum to n.
// ---------------------------------------------------------------------------

struct DwaState {
  std::vector<double> prev1;  // L(t-1)
  std::vector<double> prev2;  // L(t-2)
  std::size_t observed = 0;
  double temperature;

  explicit DwaState(std::size_t n_tasks, double temperature = 2.0);
};

std::vector<double> dwa_update(DwaState& state, std::span<const double> losses);

// ---------------------------------------------------------------------------
// Weighting by Uncertainty: per-task log-variances eta_i trained jointly with
// the model. Total loss sum_i (1/2 exp(-eta_i) L_i + 1/2 eta_i).
// ---------------------------------------------------------------------------

struct UncertaintyState {
  std::vector<double> eta;

  explicit UncertaintyState(std::size_t n_tasks) : eta(n_tasks, 0.0) {}

  // The effective coefficient on L_i.
  std::vector<double> effective_weights() const;
};

// Builds the total on the tape so eta participates in backward().
NodeId uncertainty_total(Tape& tape, std::span<const NodeId> loss_nodes,
                         std::span<const NodeId> eta_nodes);

double uncertainty_total_value(std::span<const double> losses, std::span<const double> eta);

// ---------------------------------------------------------------------------
// GradNorm: learns w_i by gradient steps on
//   L_grad = sum_i | w_i ||g_i|| - G r_i^alpha |,
// with G the mean task-gradient norm and r_i the relative inverse training
// rate. Weights are renormalized to mean 1 after every step.
// ---------------------------------------------------------------------------

struct GradNormState {
  std::vector<double> w;
  std::vector<double> initial_losses;  // L_0i, captured on the first update
  bool initial_captured = false;
  double alpha;
  Adam optimizer;

  GradNormState(std::size_t n_tasks, double alpha = 0.12, double weight_lr = 0.025);
};

// Relative inverse training rates r_i = (L_i/L_0i) / mean_j(L_j/L_0j).
std::vector<double> gradnorm_rates(std::span<const double> losses,
                                   std::span<const double> initial_losses);

// L_grad evaluated at the given weights.
double gradnorm_loss(std::span<const double> w, std::span<const double> grad_norms,
                     std::span<const double> rates, double alpha);

// Subgradient of L_grad in w (0 at the kinks).
std::vector<double> gradnorm_loss_subgradient(std::span<const double> w,
                                              std::span<const double> grad_norms,
                                              std::span<const double> rates, double alpha);

// One optimizer step on w, then renormalization to mean 1 with a 1e-4 floor.
std::vector<double> gradnorm_update(GradNormState& state, std::span<const double> losses,
                                    std::span<const double> grad_norms);

// The exact minimizer of L_grad: w_i = G r_i^alpha / ||g_i||.
std::vector<double> gradnorm_raw_solution(std::span<const double> grad_norms,
                                          std::span<const double> rates, double alpha);

// The minimizer rescaled to mean 1: w_i = n (r_i^alpha/||g_i||) / sum_j (...).
std::vector<double> gradnorm_closed_form(std::span<const double> grad_norms,
                                         std::span<const double> rates, double alpha);

// ---------------------------------------------------------------------------
// PCGrad: projects each task gradient off every other task gradient it
// conflicts with (negative inner product), then sums. Operates on the shared
// parameter subset only.
// ---------------------------------------------------------------------------

// task_grads must all cover shared_ids. Visits tasks in a fresh random order,
// projecting against the original gradients of the other tasks, also in
// random order. Returns the sum of the projected gradients over shared_ids
// (other entries zero). projection_dots, when given, receives the inner
// product <g_i', g_j> recomputed immediately after every applied projection.
GradientMap pcgrad_combine(std::span<const GradientMap> task_grads,
                           std::span<const ParamId> shared_ids, Rng& rng,
                           std::vector<double>* projection_dots = nullptr);

}  // namespace mtlab
