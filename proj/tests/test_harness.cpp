#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mtlab/harness.hpp"

using namespace mtlab;

namespace {

// small enough that a full run takes milliseconds
ExperimentConfig tiny_config(Method method) {
  ExperimentConfig cfg;
  cfg.method = method;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.n_tasks = 3;
  cfg.input_dim = 12;
  cfg.output_dim = 5;
  cfg.m_train = 40;
  cfg.m_test = 10;
  cfg.hidden = 8;
  cfg.depth = 2;
  cfg.seeds = {1};
  return cfg;
}

bool metrics_equal_ignoring_time(const std::vector<MetricsRecord>& a,
                                 const std::vector<MetricsRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].step != b[i].step) return false;
    if (a[i].task_losses != b[i].task_losses) return false;
    if (a[i].weights != b[i].weights) return false;
    if (a[i].normalized_loss != b[i].normalized_loss) return false;
    if (a[i].loss_weight_error != b[i].loss_weight_error) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("steps per epoch keeps the final partial batch") {
  ExperimentConfig cfg;
  cfg.m_train = 9000;
  cfg.batch_size = 304;
  cfg.epochs = 300;
  CHECK(cfg.steps_per_epoch() == 30);  // 29 full + 1 partial
  CHECK(cfg.total_steps() == 9000);

  cfg.m_train = 10;
  cfg.batch_size = 4;
  CHECK(cfg.steps_per_epoch() == 3);

  cfg.m_train = 8;
  CHECK(cfg.steps_per_epoch() == 2);
}

TEST_CASE("config validation") {
  ExperimentConfig cfg = tiny_config(Method::Slaw);
  CHECK_NOTHROW(cfg.validate());
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config(Method::Slaw);
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("method name round trip") {
  for (Method m : all_methods()) CHECK(method_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(method_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("constant method records all-one weights at every step") {
  const RunResult r = train(tiny_config(Method::Constant), 3);
  CHECK(r.status == RunStatus::Ok);
  CHECK(r.steps_completed == 9);  // 3 epochs x ceil(40/16)
  for (const MetricsRecord& m : r.metrics) {
    for (double w : m.weights) CHECK(w == 1.0);
  }
}

TEST_CASE("identical config and seed give bit-identical metrics") {
  for (Method m : {Method::Slaw, Method::GradNorm, Method::PcGrad, Method::Uncertainty}) {
    const RunResult a = train(tiny_config(m), 7);
    const RunResult b = train(tiny_config(m), 7);
    CHECK(metrics_equal_ignoring_time(a.metrics, b.metrics));
    CHECK(a.final_train_nl == b.final_train_nl);
    CHECK(a.final_test_nl == b.final_test_nl);
  }
}

TEST_CASE("different seeds give different trajectories") {
  const RunResult a = train(tiny_config(Method::Slaw), 1);
  const RunResult b = train(tiny_config(Method::Slaw), 2);
  CHECK_FALSE(metrics_equal_ignoring_time(a.metrics, b.metrics));
}

TEST_CASE("recorded weights are exactly what the weighting module returned") {
  const ExperimentConfig cfg = tiny_config(Method::Slaw);
  const RunResult r = train(cfg, 5);
  // replay the recorded losses through a fresh state
  SlawState state(cfg.n_tasks, cfg.slaw_beta);
  for (const MetricsRecord& m : r.metrics) {
    const std::vector<double> expected = slaw_update(state, m.task_losses);
    CHECK(m.weights == expected);
  }

  const ExperimentConfig dcfg = tiny_config(Method::Dwa);
  const RunResult rd = train(dcfg, 5);
  DwaState dstate(dcfg.n_tasks, dcfg.dwa_temperature);
  for (const MetricsRecord& m : rd.metrics) {
    const std::vector<double> expected = dwa_update(dstate, m.task_losses);
    CHECK(m.weights == expected);
  }
}

TEST_CASE("ideal constant weighting has zero loss-weight error at every step") {
  const RunResult r = train(tiny_config(Method::IdealConstant), 11);
  for (const MetricsRecord& m : r.metrics) CHECK(m.loss_weight_error < 1e-15);
}

TEST_CASE("pcgrad with a single task tracks the constant path") {
  ExperimentConfig base = tiny_config(Method::Constant);
  base.n_tasks = 1;
  base.epochs = 4;
  ExperimentConfig pc = base;
  pc.method = Method::PcGrad;

  const RunResult a = train(base, 9);
  const RunResult b = train(pc, 9);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(std::abs(a.metrics[i].task_losses[0] - b.metrics[i].task_losses[0]) <= 1e-9);
  }
  CHECK(std::abs(a.final_test_nl - b.final_test_nl) <= 1e-9);
}

TEST_CASE("gradnorm and uncertainty paths run and stay finite on the tiny suite") {
  for (Method m : {Method::GradNorm, Method::Uncertainty, Method::Dwa}) {
    const RunResult r = train(tiny_config(m), 2);
    CHECK(r.status == RunStatus::Ok);
    CHECK(std::isfinite(r.final_test_nl));
    for (const MetricsRecord& rec : r.metrics) {
      CHECK(std::isfinite(rec.normalized_loss));
    }
  }
}

TEST_CASE("runaway learning rate is reported as divergence, not a crash") {
  ExperimentConfig cfg = tiny_config(Method::Constant);
  cfg.lr = 1e18;
  cfg.epochs = 40;
  const RunResult r = train(cfg, 1);
  if (r.status == RunStatus::Diverged) {
    CHECK(std::isnan(r.final_test_nl));
    CHECK(r.steps_completed < cfg.total_steps());
  }
  const ExperimentSummary s = run_experiment(cfg);
  CHECK((s.status == RunStatus::Ok || s.status == RunStatus::Diverged));
}

TEST_CASE("cumulative time is monotone and steps strictly increase") {
  const RunResult r = train(tiny_config(Method::Slaw), 4);
  for (std::size_t i = 1; i < r.metrics.size(); ++i) {
    CHECK(r.metrics[i].step == r.metrics[i - 1].step + 1);
    CHECK(r.metrics[i].cumulative_time_s >= r.metrics[i - 1].cumulative_time_s);
    CHECK(r.metrics[i].step_time_s >= 0.0);
  }
}

TEST_CASE("run_experiment aggregates seeds with the stated confidence interval") {
  ExperimentConfig cfg = tiny_config(Method::Constant);
  cfg.seeds = {1, 2};
  const ExperimentSummary s = run_experiment(cfg);
  REQUIRE(s.final_test_nl.size() == 2);
  const double mean = (s.final_test_nl[0] + s.final_test_nl[1]) / 2.0;
  CHECK(s.mean_test_nl == doctest::Approx(mean).epsilon(1e-12));
  const double sd = std::sqrt(((s.final_test_nl[0] - mean) * (s.final_test_nl[0] - mean) +
                               (s.final_test_nl[1] - mean) * (s.final_test_nl[1] - mean)) /
                              1.0);
  CHECK(s.ci95_test_nl == doctest::Approx(1.96 * sd / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(s.diverged_count == 0);
}

TEST_CASE("single seed gives zero confidence half-width by convention") {
  const ExperimentSummary s = run_experiment(tiny_config(Method::Constant));
  CHECK(s.ci95_test_nl == 0.0);
  CHECK(s.ci95_train_nl == 0.0);
}

TEST_CASE("parallel seed execution matches sequential results") {
  ExperimentConfig cfg = tiny_config(Method::Slaw);
  cfg.seeds = {1, 2, 3, 4};
  const ExperimentSummary seq = run_experiment(cfg);
  cfg.jobs = 4;
  const ExperimentSummary par = run_experiment(cfg);
  CHECK(seq.final_test_nl == par.final_test_nl);
  CHECK(seq.final_train_nl == par.final_train_nl);
}

TEST_CASE("run_experiment hands each finished run to the sink") {
  ExperimentConfig cfg = tiny_config(Method::Constant);
  cfg.seeds = {1, 2, 3};
  std::vector<std::uint64_t> seen;
  run_experiment(cfg, [&](const RunResult& r) { seen.push_back(r.seed); });
  CHECK(seen.size() == 3);
}

TEST_CASE("metrics csv layout") {
  const ExperimentConfig cfg = tiny_config(Method::Slaw);
  const RunResult r = train(cfg, 6);
  const std::string path = (std::filesystem::temp_directory_path() / "mtlab_metrics_test.csv").string();
  write_metrics_csv(path, r);

  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "step,loss_1,loss_2,loss_3,weight_1,weight_2,weight_3,normalized_loss,loss_weight_error,"
        "step_time_s");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == r.metrics.size());

  // 17 significant digits round-trip: parse the first loss back
  std::ifstream is2(path);
  std::getline(is2, line);
  std::getline(is2, line);
  std::istringstream first_row(line);
  std::string cell;
  std::getline(first_row, cell, ',');
  std::getline(first_row, cell, ',');
  CHECK(std::stod(cell) == r.metrics[0].task_losses[0]);
  std::filesystem::remove(path);
}

TEST_CASE("summary json echoes the resolved config") {
  ExperimentConfig cfg = tiny_config(Method::Dwa);
  cfg.seeds = {1, 2};
  const ExperimentSummary s = run_experiment(cfg);
  const std::string path = (std::filesystem::temp_directory_path() / "mtlab_summary_test.json").string();
  write_summary_json(path, s, cfg);

  std::ifstream is(path);
  nlohmann::json j;
  is >> j;
  CHECK(j["method"] == "dwa");
  CHECK(j["config"]["epochs"] == cfg.epochs);
  CHECK(j["config"]["batch_size"] == cfg.batch_size);
  CHECK(j["config"]["n_tasks"] == cfg.n_tasks);
  CHECK(j["per_seed"].size() == 2);
  CHECK(j["diverged_count"] == 0);
  CHECK(j["mean_test_nl"].is_number());
  std::filesystem::remove(path);
}

TEST_CASE("compare table shape") {
  std::vector<ExperimentSummary> summaries;
  for (Method m : all_methods()) {
    ExperimentSummary s;
    s.method = m;
    s.mean_train_nl = 13.0;
    s.mean_test_nl = m == Method::Slaw ? 12.3 : 13.6;
    s.ci95_train_nl = 0.03;
    s.ci95_test_nl = 0.04;
    if (m == Method::Uncertainty) {
      s.status = RunStatus::Diverged;
      s.diverged_count = 10;
    }
    summaries.push_back(s);
  }
  const std::string table = format_compare_table(summaries);
  CHECK(table.find("Constant") != std::string::npos);
  CHECK(table.find("IdealConstant") != std::string::npos);
  CHECK(table.find("Uncertainty") != std::string::npos);
  CHECK(table.find("GradNorm") != std::string::npos);
  CHECK(table.find("DWA") != std::string::npos);
  CHECK(table.find("PCGrad") != std::string::npos);
  CHECK(table.find("SLAW") != std::string::npos);
  CHECK(table.find("-") != std::string::npos);  // diverged row
}

TEST_CASE("scaling benchmark on a micro config") {
  ExperimentConfig base = tiny_config(Method::Constant);
  base.m_train = 64;
  base.batch_size = 16;
  const std::vector<std::size_t> counts = {2, 4};
  const std::vector<Method> methods = {Method::Constant, Method::Slaw};
  const std::vector<ScalePoint> points = scaling_benchmark(base, counts, methods, 5, 2);
  REQUIRE(points.size() == 4);
  for (const ScalePoint& p : points) {
    CHECK(p.mean_step_time_s > 0.0);
  }
  CHECK(points[0].n_tasks == 2);
  CHECK(points[3].n_tasks == 4);

  const std::vector<std::size_t> bad = {4, 2};
  CHECK_THROWS_AS(scaling_benchmark(base, bad, methods, 5, 2), std::invalid_argument);
}

TEST_CASE("trainer exposes per-task gradient norms on the live tape") {
  const ExperimentConfig cfg = tiny_config(Method::Constant);
  Trainer t(cfg, 3);
  REQUIRE(t.prepare_step());
  const std::vector<double> shared = t.task_grad_norms(t.net().shared_ids());
  const std::vector<double> last = t.task_grad_norms(t.net().last_shared_ids());
  REQUIRE(shared.size() == cfg.n_tasks);
  for (std::size_t i = 0; i < cfg.n_tasks; ++i) {
    CHECK(shared[i] > 0.0);
    CHECK(last[i] > 0.0);
    CHECK(last[i] <= shared[i] + 1e-12);  // subset of the shared coordinates
  }
  t.finish_step();
}
