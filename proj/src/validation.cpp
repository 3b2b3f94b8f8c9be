#include "mtlab/validation.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace mtlab {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<ScatterPoint> estimator_scatter(const ScatterConfig& config) {
  if (config.runs == 0) throw std::invalid_argument("estimator_scatter: need at least one run");
  if (config.min_step < 1 || config.max_step < config.min_step) {
    throw std::invalid_argument("estimator_scatter: bad step range");
  }

  ExperimentConfig train_cfg = config.train;
  train_cfg.method = Method::Slaw;
  // only the first max_step steps are ever executed
  const std::size_t spe = train_cfg.steps_per_epoch();
  train_cfg.epochs = (config.max_step + spe - 1) / spe;
  train_cfg.seeds = {1};
  train_cfg.validate();

  std::vector<std::vector<ScatterPoint>> per_run(config.runs);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= config.runs) break;
      try {
        const std::uint64_t run_seed = config.seed_base + k;
        // the probe step and (if used) probe task come from a side stream
        Rng probe_rng(derive_seed(run_seed, 99));
        const std::size_t probe_step = probe_rng.uniform_int(config.min_step, config.max_step);

        Trainer trainer(train_cfg, run_seed);
        std::vector<ScatterPoint> points;
        while (!trainer.done()) {
          if (!trainer.prepare_step()) break;
          if (trainer.steps_completed() + 1 == probe_step) {
            const std::vector<double> norms = trainer.task_grad_norms(trainer.net().shared_ids());
            for (double g : norms) {
              if (!(g > 0.0)) throw std::runtime_error("estimator_scatter: zero task gradient norm");
            }
            const std::vector<double> x = inverse_scale_weights(norms);
            const std::vector<double>& y = trainer.current_weights();
            if (config.all_tasks) {
              for (std::size_t i = 0; i < x.size(); ++i) {
                points.push_back({run_seed, probe_step, i, x[i], y[i]});
              }
            } else {
              const std::size_t i = probe_rng.uniform_index(x.size());
              points.push_back({run_seed, probe_step, i, x[i], y[i]});
            }
            trainer.finish_step();
            break;
          }
          trainer.finish_step();
        }
        per_run[k] = std::move(points);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, config.runs));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::vector<ScatterPoint> all;
  for (auto& run_points : per_run) {
    all.insert(all.end(), run_points.begin(), run_points.end());
  }
  return all;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("pearson_correlation: need two equal-length samples");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson_correlation: degenerate sample");
  return sxy / std::sqrt(sxx * syy);
}

void write_scatter_csv(const std::string& path, std::span<const ScatterPoint> points) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_scatter_csv: cannot open " + path);
  os << "run_seed,step,task,x,y\n";
  for (const ScatterPoint& p : points) {
    os << p.run_seed << ',' << p.step << ',' << p.task << ',' << g17(p.x) << ',' << g17(p.y) << "\n";
  }
}

// ---------------------------------------------------------------------------

TestFn test_fn_from_string(const std::string& s) {
  if (s == "constant") return TestFn::Constant;
  if (s == "linear") return TestFn::Linear;
  if (s == "tanh") return TestFn::TanhDot;
  throw std::invalid_argument("unknown test function '" + s + "' (expected constant|linear|tanh)");
}

const char* to_string(TestFn fn) {
  switch (fn) {
    case TestFn::Constant: return "constant";
    case TestFn::Linear: return "linear";
    case TestFn::TanhDot: return "tanh";
  }
  return "?";
}

void sample_uniform_ball(Rng& rng, std::span<const double> x0, double delta,
                         std::span<double> out) {
  const std::size_t d = x0.size();
  if (out.size() != d) throw std::invalid_argument("sample_uniform_ball: size mismatch");
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      out[i] = rng.normal();
      norm_sq += out[i] * out[i];
    }
  } while (norm_sq == 0.0);
  const double radius = delta * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  const double f = radius / std::sqrt(norm_sq);
  for (std::size_t i = 0; i < d; ++i) out[i] = x0[i] + f * out[i];
}

namespace {

double eval_fn(TestFn fn, std::span<const double> coeffs, std::span<const double> x) {
  switch (fn) {
    case TestFn::Constant:
      return coeffs.empty() ? 0.0 : coeffs[0];
    case TestFn::Linear: {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += coeffs[i] * x[i];
      return acc;
    }
    case TestFn::TanhDot: {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += coeffs[i] * std::tanh(x[i]);
      return acc;
    }
  }
  return 0.0;
}

double grad_norm_at(TestFn fn, std::span<const double> coeffs, std::span<const double> x0) {
  switch (fn) {
    case TestFn::Constant:
      return 0.0;
    case TestFn::Linear: {
      double acc = 0.0;
      for (double c : coeffs) acc += c * c;
      return std::sqrt(acc);
    }
    case TestFn::TanhDot: {
      double acc = 0.0;
      for (std::size_t i = 0; i < x0.size(); ++i) {
        const double t = std::tanh(x0[i]);
        const double dk = coeffs[i] * (1.0 - t * t);
        acc += dk * dk;
      }
      return std::sqrt(acc);
    }
  }
  return 0.0;
}

}  // namespace

BallSampleReport theorem_check(TestFn fn, std::span<const double> coeffs,
                               std::span<const double> x0, double delta,
                               std::size_t n_samples, std::uint64_t seed) {
  if (!(delta > 0.0)) throw std::invalid_argument("theorem_check: delta must be positive");
  if (n_samples < 1000) throw std::invalid_argument("theorem_check: need at least 1000 samples");
  if (fn != TestFn::Constant && coeffs.size() != x0.size()) {
    throw std::invalid_argument("theorem_check: coeffs/x0 size mismatch");
  }

  Rng rng(seed);
  std::vector<double> x(x0.size());

  // Welford, single pass
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    sample_uniform_ball(rng, x0, delta, x);
    const double v = eval_fn(fn, coeffs, x);
    const double d1 = v - mean;
    mean += d1 / static_cast<double>(k + 1);
    m2 += d1 * (v - mean);
  }
  const double var = m2 / static_cast<double>(n_samples);

  BallSampleReport report;
  report.fn = to_string(fn);
  report.x0.assign(x0.begin(), x0.end());
  report.delta = delta;
  report.samples = n_samples;
  report.var_f = var;
  report.grad_norm = grad_norm_at(fn, coeffs, x0);
  report.k1_empirical = report.grad_norm > 0.0 ? var / (report.grad_norm * report.grad_norm) : 0.0;
  report.k1_closed_form = delta * delta / (static_cast<double>(x0.size()) + 2.0);
  return report;
}

void write_ball_report_json(const std::string& path, const BallSampleReport& report) {
  nlohmann::json j{{"fn", report.fn},
                   {"x0", report.x0},
                   {"delta", report.delta},
                   {"samples", report.samples},
                   {"var_f", report.var_f},
                   {"grad_norm", report.grad_norm},
                   {"k1_empirical", report.k1_empirical},
                   {"k1_closed_form", report.k1_closed_form}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_ball_report_json: cannot open " + path);
  os << j.dump(2) << "\n";
}

}  // namespace mtlab
