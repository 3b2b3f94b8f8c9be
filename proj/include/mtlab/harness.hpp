#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtlab/mtregression.hpp"
#include "mtlab/nn.hpp"
#include "mtlab/weighting.hpp"

namespace mtlab {

enum class Method { Constant, IdealConstant, Uncertainty, GradNorm, Dwa, PcGrad, Slaw };

Method method_from_string(const std::string& s);
const char* to_string(Method m);
std::vector<Method> all_methods();

struct ExperimentConfig {
  Method method = Method::Slaw;

  // training
  std::size_t epochs = 300;
  std::size_t batch_size = 304;
  double lr = 7e-4;
  double clip_norm = 0.5;

  // method hyperparameters
  double slaw_beta = 0.99;
  double dwa_temperature = 2.0;
  double gradnorm_alpha = 0.12;
  double gradnorm_weight_lr = 0.025;

  // dataset
  std::size_t n_tasks = 10;
  std::size_t input_dim = 250;
  std::size_t output_dim = 100;
  std::size_t m_train = 9000;
  std::size_t m_test = 1000;
  double b_stddev = 10.0;
  double eps_stddev = 3.5;

  // network; tanh is the benchmark table's activation for this experiment
  std::size_t hidden = 100;
  std::size_t depth = 4;
  Activation activation = Activation::Tanh;

  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  std::size_t jobs = 1;

  void validate() const;
  std::size_t steps_per_epoch() const;  // final partial batch kept
  std::size_t total_steps() const;
};

struct MetricsRecord {
  std::size_t step = 0;  // 1-based
  std::vector<double> task_losses;
  std::vector<double> weights;
  double normalized_loss = 0.0;
  double loss_weight_error = 0.0;
  double step_time_s = 0.0;
  double cumulative_time_s = 0.0;
};

enum class RunStatus { Ok, Diverged };

struct RunResult {
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::Ok;
  std::size_t steps_completed = 0;
  double final_train_nl = 0.0;  // NaN when diverged
  double final_test_nl = 0.0;   // NaN when diverged
  double mean_step_time_s = 0.0;
  std::vector<MetricsRecord> metrics;
};

struct ExperimentSummary {
  Method method = Method::Slaw;
  std::vector<std::uint64_t> seeds;
  std::vector<RunStatus> statuses;        // parallel to seeds
  std::vector<double> final_train_nl;     // parallel to seeds, NaN when diverged
  std::vector<double> final_test_nl;
  double mean_train_nl = 0.0;             // over completed seeds
  double ci95_train_nl = 0.0;             // 1.96 * sd / sqrt(k); 0 when k == 1
  double mean_test_nl = 0.0;
  double ci95_test_nl = 0.0;
  double mean_step_time_s = 0.0;
  std::size_t diverged_count = 0;
  RunStatus status = RunStatus::Ok;       // Diverged when every seed diverged
};

// One training run. Steps are two-phase so callers can probe the live tape
// between the forward pass and the parameter update (per-task gradient
// norms for GradNorm and for the estimator validation).
class Trainer {
public:
  Trainer(const ExperimentConfig& config, std::uint64_t seed);
  ~Trainer();
  Trainer(Trainer&&) noexcept;
  Trainer& operator=(Trainer&&) noexcept;

  // Samples a batch, runs the forward pass, computes per-task losses and the
  // method's weights. Returns false when the run has diverged (non-finite
  // loss or weight); the step is then abandoned.
  bool prepare_step();
  // Backward, clip, optimizer update; records the step's metrics.
  void finish_step();

  bool done() const;
  bool diverged() const;
  std::size_t steps_completed() const;

  // Valid between prepare_step() and finish_step().
  const std::vector<double>& current_losses() const;
  const std::vector<double>& current_weights() const;
  // Per-task gradient norms over the given parameter subset, one backward
  // pass per task on the live tape.
  std::vector<double> task_grad_norms(std::span<const ParamId> subset) const;

  const MultiTaskNet& net() const;
  const TaskSuite& suite() const;
  const std::vector<MetricsRecord>& metrics() const;

  double evaluate_train_normalized_loss() const;
  double evaluate_test_normalized_loss() const;

  RunResult take_result();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

RunResult train(const ExperimentConfig& config, std::uint64_t seed);

// Runs every seed (config.jobs in parallel), aggregates completed runs, and
// hands each finished RunResult to on_run (serialized, arbitrary order)
// before its metrics are discarded.
ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const std::function<void(const RunResult&)>& on_run = {});

struct ScalePoint {
  std::size_t n_tasks = 0;
  Method method = Method::Constant;
  double mean_step_time_s = 0.0;
};

// Steady-state mean step time per (task count, method) on freshly generated
// suites; the first warmup_steps are discarded.
std::vector<ScalePoint> scaling_benchmark(const ExperimentConfig& base,
                                          std::span<const std::size_t> task_counts,
                                          std::span<const Method> methods,
                                          std::size_t measured_steps = 100,
                                          std::size_t warmup_steps = 10);

// step,loss_1..n,weight_1..n,normalized_loss,loss_weight_error,step_time_s
void write_metrics_csv(const std::string& path, const RunResult& run);
void write_summary_json(const std::string& path, const ExperimentSummary& summary,
                        const ExperimentConfig& config);
std::string format_compare_table(std::span<const ExperimentSummary> summaries);
void write_scaling_csv(const std::string& path, std::span<const ScalePoint> points);

}  // namespace mtlab
