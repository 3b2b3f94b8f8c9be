#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlab/tensor.hpp"

namespace mtlab {

struct SuiteConfig {
  std::size_t n_tasks = 10;
  std::size_t input_dim = 250;
  std::size_t output_dim = 100;
  double b_stddev = 10.0;    // element distribution of the shared matrix
  double eps_stddev = 3.5;   // element distribution of the per-task offsets
};

// Synthetic regression tasks f_i(x) = sigma_i * tanh((B + eps_i) x) with a
// shared B and per-task eps_i, sigma_i = i. Losses of different tasks then
// differ in scale by sigma_i^2, with known ideal weights 1/sigma_i^2.
struct TaskSuite {
  SuiteConfig config;
  Tensor b;                   // output_dim x input_dim
  std::vector<Tensor> eps;    // n_tasks matrices, same shape as b
  std::vector<double> sigma;  // sigma_i = i (1-based)

  static TaskSuite generate(std::uint64_t seed, const SuiteConfig& config = {});

  // Exact labels for a batch of inputs (m x input_dim): one (m x output_dim)
  // tensor per task.
  std::vector<Tensor> labels_for(const Tensor& inputs) const;
};

struct MultiTaskDataset {
  Tensor train_inputs;               // m_train x input_dim
  Tensor test_inputs;                // m_test x input_dim
  std::vector<Tensor> train_labels;  // per task
  std::vector<Tensor> test_labels;   // per task

  static MultiTaskDataset generate(const TaskSuite& suite, std::size_t m_train,
                                   std::size_t m_test, std::uint64_t seed);
};

// Mean over tasks of L_i / sigma_i^2.
double normalized_loss(std::span<const double> per_task_losses, std::span<const double> sigma);

// MSE between the candidate weights and the ideal weights 1/sigma_i^2, both
// rescaled to mean 1 first. Zero exactly when the candidates are proportional
// to the ideal weights.
double loss_weight_error(std::span<const double> weights, std::span<const double> sigma);

// CSV interchange: one metadata comment line, a header, then one row per
// sample (train rows first): x_0..x_{D-1}, then task1 y_0..y_{O-1}, task2 ...
void write_dataset_csv(const std::string& path, const TaskSuite& suite, const MultiTaskDataset& dataset);
MultiTaskDataset read_dataset_csv(const std::string& path);

}  // namespace mtlab
