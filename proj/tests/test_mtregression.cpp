#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "mtlab/mtregression.hpp"
#include "mtlab/nn.hpp"
#include "mtlab/rng.hpp"
#include "mtlab/tape.hpp"
#include "mtlab/weighting.hpp"

using namespace mtlab;

TEST_CASE("suite defaults: sigma_i = i, n = 10") {
  const TaskSuite suite = TaskSuite::generate(1);
  REQUIRE(suite.sigma.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(suite.sigma[i] == static_cast<double>(i + 1));
  CHECK(suite.b.shape() == std::vector<std::size_t>{100, 250});
  CHECK(suite.eps.size() == 10);
}

TEST_CASE("suite generation is seed deterministic") {
  const TaskSuite a = TaskSuite::generate(7);
  const TaskSuite b = TaskSuite::generate(7);
  CHECK(a.b == b.b);
  for (std::size_t i = 0; i < a.eps.size(); ++i) CHECK(a.eps[i] == b.eps[i]);
  const TaskSuite c = TaskSuite::generate(8);
  CHECK_FALSE(a.b == c.b);
}

TEST_CASE("suite rejects empty task lists") {
  SuiteConfig cfg;
  cfg.n_tasks = 0;
  CHECK_THROWS_AS(TaskSuite::generate(1, cfg), std::invalid_argument);
}

TEST_CASE("B sample standard deviation near its configured value") {
  const TaskSuite suite = TaskSuite::generate(3);
  double mean = 0.0;
  for (std::size_t k = 0; k < suite.b.size(); ++k) mean += suite.b[k];
  mean /= static_cast<double>(suite.b.size());
  double var = 0.0;
  for (std::size_t k = 0; k < suite.b.size(); ++k) var += (suite.b[k] - mean) * (suite.b[k] - mean);
  var /= static_cast<double>(suite.b.size() - 1);
  const double sd = std::sqrt(var);
  CHECK(sd > 10.0 * 0.95);
  CHECK(sd < 10.0 * 1.05);
}

TEST_CASE("zero input maps to zero labels for every task") {
  SuiteConfig cfg;
  cfg.input_dim = 20;
  cfg.output_dim = 5;
  cfg.n_tasks = 3;
  const TaskSuite suite = TaskSuite::generate(2, cfg);
  const std::vector<Tensor> labels = suite.labels_for(Tensor::zeros({4, 20}));
  for (const Tensor& l : labels) {
    for (std::size_t k = 0; k < l.size(); ++k) CHECK(l[k] == 0.0);
  }
}

TEST_CASE("labels are bounded by sigma_i elementwise") {
  SuiteConfig cfg;
  cfg.input_dim = 30;
  cfg.output_dim = 8;
  cfg.n_tasks = 4;
  const TaskSuite suite = TaskSuite::generate(5, cfg);
  const MultiTaskDataset ds = MultiTaskDataset::generate(suite, 50, 20, 5);
  // tanh is strictly inside (-1,1) but rounds to exactly 1.0 in double
  // precision once the pre-activation exceeds ~19, which the N(0,10) scale
  // of B makes routine; the attainable bound is therefore non-strict.
  for (std::size_t i = 0; i < cfg.n_tasks; ++i) {
    for (std::size_t k = 0; k < ds.train_labels[i].size(); ++k) {
      CHECK(std::abs(ds.train_labels[i][k]) <= suite.sigma[i]);
    }
  }
}

TEST_CASE("recomputing labels from stored inputs is bit-exact") {
  SuiteConfig cfg;
  cfg.input_dim = 25;
  cfg.output_dim = 6;
  cfg.n_tasks = 3;
  const TaskSuite suite = TaskSuite::generate(11, cfg);
  const MultiTaskDataset ds = MultiTaskDataset::generate(suite, 40, 10, 11);
  const std::vector<Tensor> again = suite.labels_for(ds.train_inputs);
  for (std::size_t i = 0; i < cfg.n_tasks; ++i) CHECK(again[i] == ds.train_labels[i]);
}

TEST_CASE("dataset rejects empty splits") {
  const TaskSuite suite = TaskSuite::generate(1, {2, 4, 3, 10.0, 3.5});
  CHECK_THROWS_AS(MultiTaskDataset::generate(suite, 0, 1, 1), std::invalid_argument);
}

TEST_CASE("normalized_loss") {
  {
    // L_i = sigma_i^2 -> 1
    const std::vector<double> sigma = {1, 2, 3};
    const std::vector<double> losses = {1, 4, 9};
    CHECK(normalized_loss(losses, sigma) == doctest::Approx(1.0));
  }
  {
    const std::vector<double> sigma = {1, 2};
    const std::vector<double> losses = {2, 8};
    CHECK(normalized_loss(losses, sigma) == doctest::Approx(2.0));
  }
}

TEST_CASE("loss_weight_error") {
  const std::vector<double> sigma = {1, 2};
  {
    // hand computation: ideal [1, 0.25] -> mean-1 [1.6, 0.4]; candidate ones
    const std::vector<double> w = {1, 1};
    CHECK(loss_weight_error(w, sigma) == doctest::Approx(0.36));
  }
  {
    // proportional to the ideal weights at any positive scale
    const std::vector<double> w = {5.0, 1.25};
    CHECK(loss_weight_error(w, sigma) == doctest::Approx(0.0));
  }
  {
    // invariant to rescaling the candidates
    const std::vector<double> w = {0.9, 0.4};
    std::vector<double> w3;
    for (double x : w) w3.push_back(3.7 * x);
    CHECK(loss_weight_error(w, sigma) == doctest::Approx(loss_weight_error(w3, sigma)));
  }
}

TEST_CASE("ideal-weight fixpoint: zero error at every scale") {
  const std::vector<double> sigma = {1, 2, 3, 4, 5};
  const std::vector<double> ideal = ideal_constant_weights(sigma);
  CHECK(loss_weight_error(ideal, sigma) < 1e-15);
}

TEST_CASE("untrained per-task losses grow with sigma") {
  // premise of the benchmark: raw losses are imbalanced by sigma_i^2
  const std::size_t n = 10;
  std::vector<double> mean_losses(n, 0.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SuiteConfig cfg;
    const TaskSuite suite = TaskSuite::generate(seed, cfg);
    const MultiTaskDataset ds = MultiTaskDataset::generate(suite, 64, 8, seed);
    const MultiTaskNet net = MultiTaskNet::build(
        {cfg.input_dim, cfg.output_dim, 100, 4, n, Activation::Relu, derive_seed(seed, 2)});
    const std::vector<Tensor> preds = net.predict(ds.train_inputs);
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0.0;
      for (std::size_t k = 0; k < preds[i].size(); ++k) {
        const double diff = preds[i][k] - ds.train_labels[i][k];
        sq += diff * diff;
      }
      mean_losses[i] += sq / 64.0;
    }
  }
  for (std::size_t i = 1; i < n; ++i) CHECK(mean_losses[i] > mean_losses[i - 1]);
}

TEST_CASE("dataset csv round-trips bit-exactly") {
  SuiteConfig cfg;
  cfg.input_dim = 7;
  cfg.output_dim = 3;
  cfg.n_tasks = 2;
  const TaskSuite suite = TaskSuite::generate(9, cfg);
  const MultiTaskDataset ds = MultiTaskDataset::generate(suite, 12, 5, 9);

  const std::string path = (std::filesystem::temp_directory_path() / "mtlab_dataset_test.csv").string();
  write_dataset_csv(path, suite, ds);
  const MultiTaskDataset back = read_dataset_csv(path);
  CHECK(back.train_inputs == ds.train_inputs);
  CHECK(back.test_inputs == ds.test_inputs);
  for (std::size_t i = 0; i < cfg.n_tasks; ++i) {
    CHECK(back.train_labels[i] == ds.train_labels[i]);
    CHECK(back.test_labels[i] == ds.test_labels[i]);
  }
  std::filesystem::remove(path);
}
