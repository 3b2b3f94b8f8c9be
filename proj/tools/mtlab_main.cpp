#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "mtlab/harness.hpp"
#include "mtlab/validation.hpp"

namespace fs = std::filesystem;
using namespace mtlab;

namespace {

struct OptionBinding {
  std::string key;
  CLI::Option* opt;
  std::function<void(const std::string&)> set;
};

struct CommonOpts {
  std::string method = "slaw";
  std::size_t seeds = 1;
  std::uint64_t seed_base = 1;
  std::string out_dir = "out";
  std::size_t jobs = 1;
  std::string activation = "relu";
  ExperimentConfig cfg;  // numeric defaults live here

  std::string config_path;
  std::vector<OptionBinding> bindings;
};

template <typename T>
void parse_value(const std::string& key, const std::string& text, T& out) {
  try {
    std::size_t pos = 0;
    if constexpr (std::is_same_v<T, std::string>) {
      out = text;
      return;
    } else if constexpr (std::is_floating_point_v<T>) {
      out = std::stod(text, &pos);
    } else {
      out = static_cast<T>(std::stoull(text, &pos));
    }
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
  } catch (...) {
    throw std::invalid_argument("config: bad value '" + text + "' for key '" + key + "'");
  }
}

template <typename T>
CLI::Option* bind_option(CLI::App* cmd, CommonOpts& o, const char* flag, T& target,
                         const char* desc) {
  CLI::Option* opt = cmd->add_option(flag, target, desc);
  const std::string key = flag + 2;  // strip the leading dashes
  o.bindings.push_back({key, opt, [key, &target](const std::string& v) {
                          parse_value(key, v, target);
                        }});
  return opt;
}

// Shared training/dataset flags. Every option can also come from a flat
// key=value config file (--config); command-line flags take precedence.
void add_common_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "flat key=value config file; flags override file values");
  bind_option(cmd, o, "--method", o.method, "constant|ideal|uncertainty|gradnorm|dwa|pcgrad|slaw")
      ->check(CLI::IsMember({"constant", "ideal", "uncertainty", "gradnorm", "dwa", "pcgrad", "slaw"}));
  bind_option(cmd, o, "--seeds", o.seeds, "number of seeds (seed_base, seed_base+1, ...)");
  bind_option(cmd, o, "--seed-base", o.seed_base, "first seed value");
  bind_option(cmd, o, "--epochs", o.cfg.epochs, "training epochs");
  bind_option(cmd, o, "--batch-size", o.cfg.batch_size, "minibatch size");
  bind_option(cmd, o, "--lr", o.cfg.lr, "Adam learning rate");
  bind_option(cmd, o, "--clip", o.cfg.clip_norm, "max global gradient norm");
  bind_option(cmd, o, "--beta", o.cfg.slaw_beta, "moving average coefficient");
  bind_option(cmd, o, "--alpha", o.cfg.gradnorm_alpha, "gradient-norm asymmetry");
  bind_option(cmd, o, "--weight-lr", o.cfg.gradnorm_weight_lr, "loss weight learning rate");
  bind_option(cmd, o, "--dwa-T", o.cfg.dwa_temperature, "loss weight temperature");
  bind_option(cmd, o, "--n-tasks", o.cfg.n_tasks, "number of tasks");
  bind_option(cmd, o, "--input-dim", o.cfg.input_dim, "task input dimension");
  bind_option(cmd, o, "--output-dim", o.cfg.output_dim, "task output dimension");
  bind_option(cmd, o, "--m-train", o.cfg.m_train, "training samples");
  bind_option(cmd, o, "--m-test", o.cfg.m_test, "test samples");
  bind_option(cmd, o, "--hidden", o.cfg.hidden, "trunk hidden width");
  bind_option(cmd, o, "--depth", o.cfg.depth, "trunk layers");
  bind_option(cmd, o, "--activation", o.activation, "relu|tanh")
      ->check(CLI::IsMember({"relu", "tanh"}));
  bind_option(cmd, o, "--out", o.out_dir, "output directory");
  bind_option(cmd, o, "--jobs", o.jobs, "concurrent seeds");
}

std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Flat key=value lines, '#' comments. Keys are the long flag names without
// the dashes; values set on the command line win over file values.
void apply_config_file(CommonOpts& o) {
  if (o.config_path.empty()) return;
  std::ifstream is(o.config_path);
  if (!is) throw std::invalid_argument("config: cannot open " + o.config_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string text = trimmed(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value");
    }
    const std::string key = trimmed(text.substr(0, eq));
    const std::string value = trimmed(text.substr(eq + 1));
    const auto binding =
        std::find_if(o.bindings.begin(), o.bindings.end(),
                     [&](const OptionBinding& b) { return b.key == key; });
    if (binding == o.bindings.end()) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    if (binding->opt->count() == 0) binding->set(value);
  }
}

ExperimentConfig resolve(const CommonOpts& o) {
  ExperimentConfig cfg = o.cfg;
  cfg.method = method_from_string(o.method);
  cfg.activation = activation_from_string(o.activation);
  cfg.out_dir = o.out_dir;
  cfg.jobs = o.jobs;
  cfg.seeds.clear();
  for (std::size_t k = 0; k < o.seeds; ++k) cfg.seeds.push_back(o.seed_base + k);
  cfg.validate();
  return cfg;
}

std::string metrics_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return (fs::path(cfg.out_dir) /
          (std::string(to_string(cfg.method)) + "_seed" + std::to_string(seed) + "_metrics.csv"))
      .string();
}

ExperimentSummary run_and_write(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  const ExperimentSummary summary = run_experiment(
      cfg, [&](const RunResult& r) { write_metrics_csv(metrics_path(cfg, r.seed), r); });
  const std::string summary_path =
      (fs::path(cfg.out_dir) / (std::string(to_string(cfg.method)) + "_summary.json")).string();
  write_summary_json(summary_path, summary, cfg);
  return summary;
}

int cmd_train(const CommonOpts& o) {
  const ExperimentConfig cfg = resolve(o);
  const ExperimentSummary s = run_and_write(cfg);
  if (s.status == RunStatus::Diverged) {
    std::printf("%s: all %zu seed(s) diverged; summary written to %s\n", to_string(cfg.method),
                cfg.seeds.size(), cfg.out_dir.c_str());
    return 3;
  }
  std::printf("%s: train NL %.3f +/- %.3f, test NL %.3f +/- %.3f (%zu seed(s), %zu diverged)\n",
              to_string(cfg.method), s.mean_train_nl, s.ci95_train_nl, s.mean_test_nl,
              s.ci95_test_nl, cfg.seeds.size(), s.diverged_count);
  return 0;
}

int cmd_compare(const CommonOpts& o) {
  std::vector<ExperimentSummary> summaries;
  for (Method m : all_methods()) {
    CommonOpts per = o;
    per.method = to_string(m);
    const ExperimentConfig cfg = resolve(per);
    std::printf("running %s on %zu seed(s)...\n", to_string(m), cfg.seeds.size());
    std::fflush(stdout);
    summaries.push_back(run_and_write(cfg));
  }
  const std::string table = format_compare_table(summaries);
  std::printf("\n%s", table.c_str());
  const std::string table_path = (fs::path(o.out_dir) / "compare_table.txt").string();
  std::ofstream(table_path) << table;

  bool any_ok = false;
  for (const ExperimentSummary& s : summaries) any_ok = any_ok || s.status == RunStatus::Ok;
  return any_ok ? 0 : 3;
}

int cmd_scale(const CommonOpts& o, const std::vector<std::size_t>& task_counts,
              const std::vector<std::string>& method_names, std::size_t steps, std::size_t warmup) {
  CommonOpts base = o;
  base.method = "constant";
  base.seeds = 1;
  const ExperimentConfig cfg = resolve(base);

  std::vector<Method> methods;
  for (const std::string& name : method_names) methods.push_back(method_from_string(name));

  const std::vector<ScalePoint> points = scaling_benchmark(cfg, task_counts, methods, steps, warmup);
  fs::create_directories(o.out_dir);
  write_scaling_csv((fs::path(o.out_dir) / "scaling.csv").string(), points);

  std::printf("%8s", "n_tasks");
  for (Method m : methods) std::printf(" %12s", to_string(m));
  std::printf("\n");
  for (std::size_t i = 0; i < task_counts.size(); ++i) {
    std::printf("%8zu", task_counts[i]);
    for (std::size_t j = 0; j < methods.size(); ++j) {
      std::printf(" %10.2fms", points[i * methods.size() + j].mean_step_time_s * 1e3);
    }
    std::printf("\n");
  }
  return 0;
}

int cmd_validate_estimator(const CommonOpts& o, std::size_t samples, std::size_t min_step,
                           std::size_t max_step, bool one_task) {
  CommonOpts base = o;
  base.method = "slaw";
  base.seeds = 1;
  ScatterConfig sc;
  sc.train = resolve(base);
  sc.runs = samples;
  sc.seed_base = o.seed_base * 1000;
  sc.min_step = min_step;
  sc.max_step = max_step;
  sc.all_tasks = !one_task;
  sc.jobs = o.jobs;

  const std::vector<ScatterPoint> points = estimator_scatter(sc);
  fs::create_directories(o.out_dir);
  write_scatter_csv((fs::path(o.out_dir) / "scatter.csv").string(), points);

  std::vector<double> xs, ys;
  for (const ScatterPoint& p : points) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  const double r = pearson_correlation(xs, ys);
  std::printf("%zu scatter points from %zu runs; pearson r = %.4f\n", points.size(), samples, r);
  return 0;
}

int cmd_validate_theorem(const CommonOpts& o, const std::string& fn_name, std::size_t d,
                         double delta, std::size_t samples, std::uint64_t seed, double a_norm,
                         double x0_fill) {
  const TestFn fn = test_fn_from_string(fn_name);

  // coefficient vector: seeded random direction scaled to a_norm
  Rng rng(derive_seed(seed, 7));
  std::vector<double> coeffs(d);
  double sq = 0.0;
  for (double& c : coeffs) {
    c = rng.normal();
    sq += c * c;
  }
  for (double& c : coeffs) c *= a_norm / std::sqrt(sq);
  const std::vector<double> x0(d, x0_fill);

  const BallSampleReport report = theorem_check(fn, coeffs, x0, delta, samples, seed);
  fs::create_directories(o.out_dir);
  write_ball_report_json((fs::path(o.out_dir) / "ball_report.json").string(), report);

  std::printf("fn=%s d=%zu delta=%g samples=%zu\n", report.fn.c_str(), d, delta, samples);
  std::printf("Var[f(X)] = %.6g   ||grad f(x0)||^2 * delta^2/(d+2) = %.6g\n", report.var_f,
              report.grad_norm * report.grad_norm * report.k1_closed_form);
  std::printf("K1 empirical = %.6g   K1 closed form = %.6g\n", report.k1_empirical,
              report.k1_closed_form);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task loss weighting lab: training, baselines, and validation"};
  app.require_subcommand(1);

  CommonOpts train_opts, compare_opts, scale_opts, est_opts, thm_opts;

  CLI::App* train_cmd = app.add_subcommand("train", "train one weighting method over seeds");
  add_common_options(train_cmd, train_opts);

  CLI::App* compare_cmd = app.add_subcommand("compare", "run all weighting methods and tabulate");
  add_common_options(compare_cmd, compare_opts);

  CLI::App* scale_cmd = app.add_subcommand("scale", "step-time scaling across task counts");
  // trunk-heavy defaults so per-task head cost stays small
  scale_opts.cfg.output_dim = 1;
  scale_opts.cfg.hidden = 256;
  scale_opts.cfg.depth = 3;
  scale_opts.cfg.batch_size = 32;
  scale_opts.cfg.m_train = 512;
  scale_opts.cfg.m_test = 64;
  add_common_options(scale_cmd, scale_opts);
  std::vector<std::size_t> task_counts = {16, 32, 64, 128};
  std::vector<std::string> scale_methods = {"constant", "slaw", "gradnorm", "pcgrad"};
  std::size_t scale_steps = 100, scale_warmup = 10;
  scale_cmd->add_option("--task-counts", task_counts, "ascending task counts")->delimiter(',');
  scale_cmd->add_option("--scale-methods", scale_methods, "methods to time")->delimiter(',');
  scale_cmd->add_option("--steps", scale_steps, "measured steps per point");
  scale_cmd->add_option("--warmup", scale_warmup, "discarded warmup steps");

  CLI::App* est_cmd = app.add_subcommand("validate-estimator",
                                         "scatter of true-norm weights vs estimated weights");
  add_common_options(est_cmd, est_opts);
  std::size_t est_samples = 12, est_min_step = 10, est_max_step = 1000;
  bool est_one_task = false;
  est_cmd->add_option("--samples", est_samples, "independent training runs");
  est_cmd->add_option("--min-step", est_min_step, "earliest sampled step");
  est_cmd->add_option("--max-step", est_max_step, "latest sampled step");
  est_cmd->add_flag("--one-task", est_one_task, "sample a single random task per run");

  CLI::App* thm_cmd = app.add_subcommand("validate-theorem",
                                         "neighborhood-variance check on a ball sample");
  std::string thm_fn = "linear";
  std::size_t thm_d = 3, thm_samples = 100000;
  double thm_delta = 0.1, thm_a_norm = 2.0, thm_x0 = 0.0;
  std::uint64_t thm_seed = 1;
  thm_cmd->add_option("--fn", thm_fn, "constant|linear|tanh")
      ->check(CLI::IsMember({"constant", "linear", "tanh"}));
  thm_cmd->add_option("--d", thm_d, "dimension");
  thm_cmd->add_option("--delta", thm_delta, "ball radius");
  thm_cmd->add_option("--samples", thm_samples, "Monte Carlo samples");
  thm_cmd->add_option("--seed", thm_seed, "sampler seed");
  thm_cmd->add_option("--a-norm", thm_a_norm, "norm of the coefficient vector");
  thm_cmd->add_option("--x0", thm_x0, "fill value of the center point");
  thm_cmd->add_option("--out", thm_opts.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    for (CommonOpts* o : {&train_opts, &compare_opts, &scale_opts, &est_opts}) {
      apply_config_file(*o);
    }
    if (train_cmd->parsed()) return cmd_train(train_opts);
    if (compare_cmd->parsed()) return cmd_compare(compare_opts);
    if (scale_cmd->parsed()) {
      return cmd_scale(scale_opts, task_counts, scale_methods, scale_steps, scale_warmup);
    }
    if (est_cmd->parsed()) {
      return cmd_validate_estimator(est_opts, est_samples, est_min_step, est_max_step, est_one_task);
    }
    if (thm_cmd->parsed()) {
      return cmd_validate_theorem(thm_opts, thm_fn, thm_d, thm_delta, thm_samples, thm_seed,
                                  thm_a_norm, thm_x0);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
