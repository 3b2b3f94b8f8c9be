#include "mtlab/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "mtlab/rng.hpp"

namespace mtlab {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double vector_mean(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// 1.96 * sd / sqrt(k), sample standard deviation; 0 when k <= 1.
double ci95_half_width(std::span<const double> v) {
  const std::size_t k = v.size();
  if (k <= 1) return 0.0;
  const double m = vector_mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  const double sd = std::sqrt(acc / static_cast<double>(k - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(k));
}

}  // namespace

Method method_from_string(const std::string& s) {
  if (s == "constant") return Method::Constant;
  if (s == "ideal") return Method::IdealConstant;
  if (s == "uncertainty") return Method::Uncertainty;
  if (s == "gradnorm") return Method::GradNorm;
  if (s == "dwa") return Method::Dwa;
  if (s == "pcgrad") return Method::PcGrad;
  if (s == "slaw") return Method::Slaw;
  throw std::invalid_argument("unknown method '" + s +
                              "' (expected constant|ideal|uncertainty|gradnorm|dwa|pcgrad|slaw)");
}

const char* to_string(Method m) {
  switch (m) {
    case Method::Constant: return "constant";
    case Method::IdealConstant: return "ideal";
    case Method::Uncertainty: return "uncertainty";
    case Method::GradNorm: return "gradnorm";
    case Method::Dwa: return "dwa";
    case Method::PcGrad: return "pcgrad";
    case Method::Slaw: return "slaw";
  }
  return "?";
}

std::vector<Method> all_methods() {
  return {Method::Constant, Method::IdealConstant, Method::Uncertainty, Method::GradNorm,
          Method::Dwa,      Method::PcGrad,        Method::Slaw};
}

void ExperimentConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("config: epochs and batch_size must be positive");
  if (!(lr > 0.0) || !(clip_norm > 0.0)) throw std::invalid_argument("config: lr and clip must be positive");
  if (!(slaw_beta > 0.0 && slaw_beta < 1.0)) throw std::invalid_argument("config: slaw_beta must be in (0,1)");
  if (!(dwa_temperature > 0.0)) throw std::invalid_argument("config: dwa_T must be positive");
  if (!(gradnorm_weight_lr > 0.0)) throw std::invalid_argument("config: gradnorm_weight_lr must be positive");
  if (n_tasks == 0 || input_dim == 0 || output_dim == 0 || m_train == 0 || m_test == 0) {
    throw std::invalid_argument("config: dataset dimensions must be positive");
  }
  if (hidden == 0 || depth == 0) throw std::invalid_argument("config: network dimensions must be positive");
  if (seeds.empty()) throw std::invalid_argument("config: at least one seed required");
}

std::size_t ExperimentConfig::steps_per_epoch() const {
  return (m_train + batch_size - 1) / batch_size;
}

std::size_t ExperimentConfig::total_steps() const { return epochs * steps_per_epoch(); }

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct Trainer::Impl {
  ExperimentConfig config;
  std::uint64_t seed;

  TaskSuite task_suite;
  MultiTaskDataset dataset;
  MultiTaskNet network;
  std::vector<Tensor> eta;  // Uncertainty log-variances, ParamIds after the net's
  Adam net_optimizer;
  Adam eta_optimizer;
  Rng batch_rng;
  Rng pcgrad_rng;

  SlawState slaw;
  DwaState dwa;
  GradNormState gradnorm;

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  std::size_t steps_done = 0;
  std::size_t total_steps = 0;
  bool is_diverged = false;
  bool prepared = false;

  Tape tape;
  std::vector<NodeId> loss_nodes;
  std::vector<NodeId> eta_nodes;
  std::vector<double> losses;
  std::vector<double> weights;
  Clock::time_point step_start;
  double cumulative_s = 0.0;
  std::vector<MetricsRecord> metrics;

  Impl(const ExperimentConfig& cfg, std::uint64_t run_seed)
      : config(cfg),
        seed(run_seed),
        task_suite(TaskSuite::generate(
            run_seed, SuiteConfig{cfg.n_tasks, cfg.input_dim, cfg.output_dim, cfg.b_stddev, cfg.eps_stddev})),
        dataset(MultiTaskDataset::generate(task_suite, cfg.m_train, cfg.m_test, run_seed)),
        network(MultiTaskNet::build(NetConfig{cfg.input_dim, cfg.output_dim, cfg.hidden, cfg.depth,
                                              cfg.n_tasks, cfg.activation, derive_seed(run_seed, 2)})),
        net_optimizer(network.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}),
        eta_optimizer(make_eta_shapes(cfg.n_tasks), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8}),
        batch_rng(derive_seed(run_seed, 3)),
        pcgrad_rng(derive_seed(run_seed, 4)),
        slaw(cfg.n_tasks, cfg.slaw_beta),
        dwa(cfg.n_tasks, cfg.dwa_temperature),
        gradnorm(cfg.n_tasks, cfg.gradnorm_alpha, cfg.gradnorm_weight_lr) {
    for (std::size_t i = 0; i < cfg.n_tasks; ++i) eta.push_back(Tensor::scalar(0.0));
    total_steps = cfg.total_steps();
    order.resize(cfg.m_train);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    cursor = order.size();  // force a shuffle on the first step
  }

  static std::vector<Tensor> make_eta_shapes(std::size_t n) {
    return std::vector<Tensor>(n, Tensor::scalar(0.0));
  }

  std::size_t next_batch(std::vector<std::size_t>& batch_rows) {
    if (cursor >= order.size()) {
      batch_rng.shuffle(order);
      cursor = 0;
    }
    const std::size_t take = std::min(config.batch_size, order.size() - cursor);
    batch_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                      order.begin() + static_cast<std::ptrdiff_t>(cursor + take));
    cursor += take;
    return take;
  }

  bool prepare() {
    if (is_diverged || steps_done >= total_steps) return false;
    step_start = Clock::now();

    std::vector<std::size_t> batch_rows;
    const std::size_t bs = next_batch(batch_rows);
    const std::size_t d = config.input_dim;
    const std::size_t o = config.output_dim;
    const std::size_t n = config.n_tasks;

    Tensor x = Tensor::zeros({bs, d});
    for (std::size_t r = 0; r < bs; ++r) {
      const double* src = dataset.train_inputs.data() + batch_rows[r] * d;
      std::copy(src, src + d, x.data() + r * d);
    }

    tape = Tape();
    const std::vector<NodeId> outputs = network.forward(tape, x);

    loss_nodes.clear();
    losses.clear();
    for (std::size_t i = 0; i < n; ++i) {
      Tensor label = Tensor::zeros({bs, o});
      for (std::size_t r = 0; r < bs; ++r) {
        const double* src = dataset.train_labels[i].data() + batch_rows[r] * o;
        std::copy(src, src + o, label.data() + r * o);
      }
      // squared error summed over output dims, averaged over the batch
      const NodeId diff = tape.sub(outputs[i], tape.leaf(std::move(label)));
      const NodeId l = tape.scale(tape.sum(tape.square(diff)), 1.0 / static_cast<double>(bs));
      loss_nodes.push_back(l);
      losses.push_back(tape.value(l)[0]);
    }

    if (!all_finite(losses)) {
      is_diverged = true;
      return false;
    }

    eta_nodes.clear();
    if (config.method == Method::Uncertainty) {
      for (std::size_t i = 0; i < n; ++i) {
        eta_nodes.push_back(tape.param(eta[i], network.param_count() + i));
      }
    }

    switch (config.method) {
      case Method::Constant:
        weights = constant_weights(n);
        break;
      case Method::IdealConstant:
        weights = ideal_constant_weights(task_suite.sigma);
        break;
      case Method::Slaw:
        weights = slaw_update(slaw, losses);
        break;
      case Method::Dwa:
        weights = dwa_update(dwa, losses);
        break;
      case Method::GradNorm: {
        const std::vector<double> norms = grad_norms(network.last_shared_ids());
        if (!all_finite(norms)) {
          is_diverged = true;
          return false;
        }
        weights = gradnorm_update(gradnorm, losses, norms);
        break;
      }
      case Method::PcGrad:
        // no explicit loss weights; recorded as ones
        weights = constant_weights(n);
        break;
      case Method::Uncertainty: {
        weights.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) weights[i] = 0.5 * std::exp(-eta[i][0]);
        break;
      }
    }

    if (!all_finite(weights)) {
      is_diverged = true;
      return false;
    }

    prepared = true;
    return true;
  }

  std::vector<double> grad_norms(std::span<const ParamId> subset) const {
    std::vector<double> norms;
    norms.reserve(loss_nodes.size());
    for (NodeId l : loss_nodes) {
      norms.push_back(global_grad_norm(tape.backward(l, subset), subset));
    }
    return norms;
  }

  void finish() {
    if (!prepared) throw std::logic_error("finish_step called without a prepared step");
    prepared = false;

    if (config.method == Method::PcGrad) {
      std::vector<GradientMap> task_grads;
      task_grads.reserve(loss_nodes.size());
      for (NodeId l : loss_nodes) task_grads.push_back(tape.backward(l));
      GradientMap combined = pcgrad_combine(task_grads, network.shared_ids(), pcgrad_rng);
      for (std::size_t i = 0; i < task_grads.size(); ++i) {
        for (ParamId id : network.head_ids(i)) combined.at(id) = std::move(task_grads[i].at(id));
      }
      combined = clip_global_norm(std::move(combined), config.clip_norm);
      net_optimizer.step(network.params(), combined);
    } else {
      NodeId total;
      if (config.method == Method::Uncertainty) {
        total = uncertainty_total(tape, loss_nodes, eta_nodes);
      } else {
        // weights enter as constants: no gradient flows through them
        total = tape.scale(loss_nodes[0], weights[0]);
        for (std::size_t i = 1; i < loss_nodes.size(); ++i) {
          total = tape.add(total, tape.scale(loss_nodes[i], weights[i]));
        }
      }
      GradientMap grads = clip_global_norm(tape.backward(total), config.clip_norm);
      net_optimizer.step(network.params(), grads);
      if (config.method == Method::Uncertainty) {
        std::vector<Tensor> eta_grads;
        for (std::size_t i = 0; i < eta.size(); ++i) {
          eta_grads.push_back(grads.at(network.param_count() + i));
        }
        eta_optimizer.step(eta, GradientMap(std::move(eta_grads)));
      }
    }

    ++steps_done;
    const double step_s = std::chrono::duration<double>(Clock::now() - step_start).count();
    cumulative_s += step_s;

    MetricsRecord rec;
    rec.step = steps_done;
    rec.task_losses = losses;
    rec.weights = weights;
    rec.normalized_loss = normalized_loss(losses, task_suite.sigma);
    rec.loss_weight_error = loss_weight_error(weights, task_suite.sigma);
    rec.step_time_s = step_s;
    rec.cumulative_time_s = cumulative_s;
    metrics.push_back(std::move(rec));
  }

  double evaluate_split(const Tensor& inputs, const std::vector<Tensor>& labels) const {
    const std::size_t m = inputs.rows();
    const std::size_t d = config.input_dim;
    const std::size_t o = config.output_dim;
    const std::size_t n = config.n_tasks;
    std::vector<double> sq_sum(n, 0.0);

    const std::size_t chunk = 1024;
    for (std::size_t start = 0; start < m; start += chunk) {
      const std::size_t rows = std::min(chunk, m - start);
      Tensor x = Tensor::zeros({rows, d});
      std::copy(inputs.data() + start * d, inputs.data() + (start + rows) * d, x.data());
      const std::vector<Tensor> preds = network.predict(x);
      for (std::size_t i = 0; i < n; ++i) {
        const double* lbl = labels[i].data() + start * o;
        const Tensor& p = preds[i];
        for (std::size_t k = 0; k < rows * o; ++k) {
          const double diff = p[k] - lbl[k];
          sq_sum[i] += diff * diff;
        }
      }
    }

    std::vector<double> task_losses(n);
    for (std::size_t i = 0; i < n; ++i) task_losses[i] = sq_sum[i] / static_cast<double>(m);
    return normalized_loss(task_losses, task_suite.sigma);
  }
};

Trainer::Trainer(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  impl_ = std::make_unique<Impl>(config, seed);
}

Trainer::~Trainer() = default;
Trainer::Trainer(Trainer&&) noexcept = default;
Trainer& Trainer::operator=(Trainer&&) noexcept = default;

bool Trainer::prepare_step() { return impl_->prepare(); }
void Trainer::finish_step() { impl_->finish(); }
bool Trainer::done() const { return impl_->is_diverged || impl_->steps_done >= impl_->total_steps; }
bool Trainer::diverged() const { return impl_->is_diverged; }
std::size_t Trainer::steps_completed() const { return impl_->steps_done; }
const std::vector<double>& Trainer::current_losses() const { return impl_->losses; }
const std::vector<double>& Trainer::current_weights() const { return impl_->weights; }

std::vector<double> Trainer::task_grad_norms(std::span<const ParamId> subset) const {
  if (!impl_->prepared) throw std::logic_error("task_grad_norms: no live step");
  return impl_->grad_norms(subset);
}

const MultiTaskNet& Trainer::net() const { return impl_->network; }
const TaskSuite& Trainer::suite() const { return impl_->task_suite; }
const std::vector<MetricsRecord>& Trainer::metrics() const { return impl_->metrics; }

double Trainer::evaluate_train_normalized_loss() const {
  return impl_->evaluate_split(impl_->dataset.train_inputs, impl_->dataset.train_labels);
}

double Trainer::evaluate_test_normalized_loss() const {
  return impl_->evaluate_split(impl_->dataset.test_inputs, impl_->dataset.test_labels);
}

RunResult Trainer::take_result() {
  RunResult r;
  r.seed = impl_->seed;
  r.status = impl_->is_diverged ? RunStatus::Diverged : RunStatus::Ok;
  r.steps_completed = impl_->steps_done;
  if (r.status == RunStatus::Ok) {
    r.final_train_nl = evaluate_train_normalized_loss();
    r.final_test_nl = evaluate_test_normalized_loss();
  } else {
    r.final_train_nl = kNan;
    r.final_test_nl = kNan;
  }
  double acc = 0.0;
  for (const MetricsRecord& m : impl_->metrics) acc += m.step_time_s;
  r.mean_step_time_s = impl_->metrics.empty() ? 0.0 : acc / static_cast<double>(impl_->metrics.size());
  r.metrics = std::move(impl_->metrics);
  return r;
}

RunResult train(const ExperimentConfig& config, std::uint64_t seed) {
  Trainer trainer(config, seed);
  while (!trainer.done()) {
    if (!trainer.prepare_step()) break;
    trainer.finish_step();
  }
  return trainer.take_result();
}

ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const std::function<void(const RunResult&)>& on_run) {
  config.validate();
  const std::size_t n_seeds = config.seeds.size();

  ExperimentSummary summary;
  summary.method = config.method;
  summary.seeds = config.seeds;
  summary.statuses.assign(n_seeds, RunStatus::Ok);
  summary.final_train_nl.assign(n_seeds, kNan);
  summary.final_test_nl.assign(n_seeds, kNan);
  std::vector<double> step_times(n_seeds, 0.0);

  std::atomic<std::size_t> next{0};
  std::mutex sink_mutex;
  std::exception_ptr error;

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n_seeds) break;
      try {
        RunResult r = train(config, config.seeds[i]);
        std::lock_guard<std::mutex> lock(sink_mutex);
        summary.statuses[i] = r.status;
        summary.final_train_nl[i] = r.final_train_nl;
        summary.final_test_nl[i] = r.final_test_nl;
        step_times[i] = r.mean_step_time_s;
        if (on_run) on_run(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(sink_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, n_seeds));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<double> train_ok, test_ok, time_ok;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    if (summary.statuses[i] == RunStatus::Ok) {
      train_ok.push_back(summary.final_train_nl[i]);
      test_ok.push_back(summary.final_test_nl[i]);
      time_ok.push_back(step_times[i]);
    } else {
      ++summary.diverged_count;
    }
  }
  if (train_ok.empty()) {
    summary.status = RunStatus::Diverged;
    summary.mean_train_nl = kNan;
    summary.mean_test_nl = kNan;
    summary.ci95_train_nl = 0.0;
    summary.ci95_test_nl = 0.0;
    summary.mean_step_time_s =
        step_times.empty() ? 0.0 : vector_mean(step_times);
  } else {
    summary.status = RunStatus::Ok;
    summary.mean_train_nl = vector_mean(train_ok);
    summary.ci95_train_nl = ci95_half_width(train_ok);
    summary.mean_test_nl = vector_mean(test_ok);
    summary.ci95_test_nl = ci95_half_width(test_ok);
    summary.mean_step_time_s = vector_mean(time_ok);
  }
  return summary;
}

std::vector<ScalePoint> scaling_benchmark(const ExperimentConfig& base,
                                          std::span<const std::size_t> task_counts,
                                          std::span<const Method> methods,
                                          std::size_t measured_steps, std::size_t warmup_steps) {
  for (std::size_t i = 1; i < task_counts.size(); ++i) {
    if (task_counts[i] <= task_counts[i - 1]) {
      throw std::invalid_argument("scaling_benchmark: task counts must be ascending");
    }
  }
  const std::size_t total = warmup_steps + measured_steps;

  std::vector<ScalePoint> points;
  for (std::size_t n : task_counts) {
    ExperimentConfig cfg = base;
    cfg.n_tasks = n;
    cfg.epochs = (total + cfg.steps_per_epoch() - 1) / cfg.steps_per_epoch();
    for (Method m : methods) {
      cfg.method = m;
      Trainer trainer(cfg, base.seeds.empty() ? 1 : base.seeds[0]);
      for (std::size_t s = 0; s < total && !trainer.done(); ++s) {
        if (!trainer.prepare_step()) break;
        trainer.finish_step();
      }
      const std::vector<MetricsRecord>& recs = trainer.metrics();
      double acc = 0.0;
      std::size_t count = 0;
      for (std::size_t s = warmup_steps; s < recs.size(); ++s) {
        acc += recs[s].step_time_s;
        ++count;
      }
      points.push_back({n, m, count == 0 ? 0.0 : acc / static_cast<double>(count)});
    }
  }
  return points;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

void write_metrics_csv(const std::string& path, const RunResult& run) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  const std::size_t n = run.metrics.empty() ? 0 : run.metrics.front().task_losses.size();
  os << "step";
  for (std::size_t i = 1; i <= n; ++i) os << ",loss_" << i;
  for (std::size_t i = 1; i <= n; ++i) os << ",weight_" << i;
  os << ",normalized_loss,loss_weight_error,step_time_s\n";
  for (const MetricsRecord& m : run.metrics) {
    os << m.step;
    for (double l : m.task_losses) os << ',' << g17(l);
    for (double w : m.weights) os << ',' << g17(w);
    os << ',' << g17(m.normalized_loss) << ',' << g17(m.loss_weight_error) << ','
       << g17(m.step_time_s) << "\n";
  }
}

namespace {

nlohmann::json config_to_json(const ExperimentConfig& c) {
  return nlohmann::json{{"method", to_string(c.method)},
                        {"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"lr", c.lr},
                        {"clip", c.clip_norm},
                        {"slaw_beta", c.slaw_beta},
                        {"dwa_T", c.dwa_temperature},
                        {"gradnorm_alpha", c.gradnorm_alpha},
                        {"gradnorm_weight_lr", c.gradnorm_weight_lr},
                        {"n_tasks", c.n_tasks},
                        {"input_dim", c.input_dim},
                        {"output_dim", c.output_dim},
                        {"m_train", c.m_train},
                        {"m_test", c.m_test},
                        {"b_stddev", c.b_stddev},
                        {"eps_stddev", c.eps_stddev},
                        {"hidden", c.hidden},
                        {"depth", c.depth},
                        {"activation", to_string(c.activation)},
                        {"seeds", c.seeds},
                        {"jobs", c.jobs},
                        {"out_dir", c.out_dir}};
}

nlohmann::json nan_safe(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

void write_summary_json(const std::string& path, const ExperimentSummary& summary,
                        const ExperimentConfig& config) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (std::size_t i = 0; i < summary.seeds.size(); ++i) {
    per_seed.push_back({{"seed", summary.seeds[i]},
                        {"status", summary.statuses[i] == RunStatus::Ok ? "ok" : "diverged"},
                        {"final_train_nl", nan_safe(summary.final_train_nl[i])},
                        {"final_test_nl", nan_safe(summary.final_test_nl[i])}});
  }
  nlohmann::json j{{"method", to_string(summary.method)},
                   {"config", config_to_json(config)},
                   {"per_seed", per_seed},
                   {"mean_train_nl", nan_safe(summary.mean_train_nl)},
                   {"ci95_train_nl", summary.ci95_train_nl},
                   {"mean_test_nl", nan_safe(summary.mean_test_nl)},
                   {"ci95_test_nl", summary.ci95_test_nl},
                   {"mean_step_time_s", summary.mean_step_time_s},
                   {"diverged_count", summary.diverged_count},
                   {"status", summary.status == RunStatus::Ok ? "ok" : "diverged"}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_summary_json: cannot open " + path);
  os << j.dump(2) << "\n";
}

namespace {

const char* display_name(Method m) {
  switch (m) {
    case Method::Constant: return "Constant";
    case Method::IdealConstant: return "IdealConstant";
    case Method::Uncertainty: return "Uncertainty";
    case Method::GradNorm: return "GradNorm";
    case Method::Dwa: return "DWA";
    case Method::PcGrad: return "PCGrad";
    case Method::Slaw: return "SLAW";
  }
  return "?";
}

std::string cell(double mean, double ci, RunStatus status) {
  if (status == RunStatus::Diverged) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f +/- %.3f", mean, ci);
  return buf;
}

}  // namespace

std::string format_compare_table(std::span<const ExperimentSummary> summaries) {
  // best = lowest test mean; '*' also marks rows whose CI overlaps the best's
  double best_mean = std::numeric_limits<double>::infinity();
  double best_ci = 0.0;
  for (const ExperimentSummary& s : summaries) {
    if (s.status == RunStatus::Ok && s.mean_test_nl < best_mean) {
      best_mean = s.mean_test_nl;
      best_ci = s.ci95_test_nl;
    }
  }

  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-15s %-22s %-22s %s\n", "method", "train_nl", "test_nl", " ");
  os << buf;
  os << std::string(64, '-') << "\n";
  for (const ExperimentSummary& s : summaries) {
    const bool starred = s.status == RunStatus::Ok &&
                         s.mean_test_nl - s.ci95_test_nl <= best_mean + best_ci;
    std::snprintf(buf, sizeof buf, "%-15s %-22s %-22s %s\n", display_name(s.method),
                  cell(s.mean_train_nl, s.ci95_train_nl, s.status).c_str(),
                  cell(s.mean_test_nl, s.ci95_test_nl, s.status).c_str(), starred ? "*" : " ");
    os << buf;
    if (s.diverged_count > 0 && s.status == RunStatus::Ok) {
      os << "  (" << s.diverged_count << " diverged seed(s) excluded)\n";
    }
  }
  os << "* best test mean and methods whose 95% CI overlaps it\n";
  return os.str();
}

void write_scaling_csv(const std::string& path, std::span<const ScalePoint> points) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_scaling_csv: cannot open " + path);
  os << "n_tasks,method,mean_step_time_s\n";
  for (const ScalePoint& p : points) {
    os << p.n_tasks << ',' << to_string(p.method) << ',' << g17(p.mean_step_time_s) << "\n";
  }
}

}  // namespace mtlab
