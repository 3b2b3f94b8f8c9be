#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlab/harness.hpp"
#include "mtlab/rng.hpp"

namespace mtlab {

// One sampled (true-norm weight, estimated weight) pair. x applies the
// inverse-norm weighting to measured per-task gradient norms over the shared
// parameters; y is the weight the estimator actually produced on that step.
struct ScatterPoint {
  std::uint64_t run_seed = 0;
  std::size_t step = 0;
  std::size_t task = 0;
  double x = 0.0;
  double y = 0.0;
};

struct ScatterConfig {
  ExperimentConfig train;      // method forced to Slaw
  std::size_t runs = 12;       // independent training runs, disjoint seeds
  std::uint64_t seed_base = 1000;
  std::size_t min_step = 10;   // sampled step drawn uniformly in [min, max]
  std::size_t max_step = 1000;
  bool all_tasks = true;       // one point per task, or a single random task
  std::size_t jobs = 1;
};

std::vector<ScatterPoint> estimator_scatter(const ScatterConfig& config);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

void write_scatter_csv(const std::string& path, std::span<const ScatterPoint> points);

// ---------------------------------------------------------------------------
// Neighborhood-variance check: for X uniform on the delta-ball around x0,
// Var[f(X)] of a smooth f approaches ||grad f(x0)||^2 * delta^2 / (d + 2).
// ---------------------------------------------------------------------------

enum class TestFn { Constant, Linear, TanhDot };

TestFn test_fn_from_string(const std::string& s);
const char* to_string(TestFn fn);

struct BallSampleReport {
  std::string fn;
  std::vector<double> x0;
  double delta = 0.0;
  std::size_t samples = 0;
  double var_f = 0.0;          // empirical Var[f(X)]
  double grad_norm = 0.0;      // ||grad f(x0)||
  double k1_empirical = 0.0;   // var_f / grad_norm^2 (0 when grad_norm == 0)
  double k1_closed_form = 0.0; // delta^2 / (d + 2)
};

// f is parameterized by coeffs: Constant ignores them and returns coeffs[0];
// Linear is coeffs . x; TanhDot is sum_k coeffs_k tanh(x_k).
BallSampleReport theorem_check(TestFn fn, std::span<const double> coeffs,
                               std::span<const double> x0, double delta,
                               std::size_t n_samples, std::uint64_t seed);

void write_ball_report_json(const std::string& path, const BallSampleReport& report);

// Uniform sample from {x0 + d : ||d|| < delta}; direction uniform on the
// sphere, radius delta * u^(1/d).
void sample_uniform_ball(Rng& rng, std::span<const double> x0, double delta,
                         std::span<double> out);

}  // namespace mtlab
