#include "mtlab/mtregression.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mtlab/rng.hpp"

namespace mtlab {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const EMat> as_matrix(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Tensor gaussian_tensor(Rng& rng, std::vector<std::size_t> shape, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

double checked_mean(std::span<const double> v, const char* what) {
  if (v.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

TaskSuite TaskSuite::generate(std::uint64_t seed, const SuiteConfig& config) {
  if (config.n_tasks == 0) throw std::invalid_argument("TaskSuite: n_tasks must be >= 1");
  if (config.input_dim == 0 || config.output_dim == 0) {
    throw std::invalid_argument("TaskSuite: dimensions must be positive");
  }

  TaskSuite suite;
  suite.config = config;
  Rng rng(derive_seed(seed, 0));
  suite.b = gaussian_tensor(rng, {config.output_dim, config.input_dim}, config.b_stddev);
  suite.eps.reserve(config.n_tasks);
  for (std::size_t i = 0; i < config.n_tasks; ++i) {
    suite.eps.push_back(gaussian_tensor(rng, {config.output_dim, config.input_dim}, config.eps_stddev));
    suite.sigma.push_back(static_cast<double>(i + 1));
  }
  return suite;
}

std::vector<Tensor> TaskSuite::labels_for(const Tensor& inputs) const {
  if (inputs.ndim() != 2 || inputs.cols() != config.input_dim) {
    throw std::invalid_argument("labels_for: inputs must be m x input_dim");
  }
  const std::size_t m = inputs.rows();
  std::vector<Tensor> labels;
  labels.reserve(config.n_tasks);
  for (std::size_t i = 0; i < config.n_tasks; ++i) {
    // row-wise: sigma_i * tanh(x (B + eps_i)^T)
    EMat coeff = as_matrix(b) + as_matrix(eps[i]);
    EMat z = as_matrix(inputs) * coeff.transpose();
    Tensor y = Tensor::zeros({m, config.output_dim});
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        y.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = sigma[i] * std::tanh(z(r, c));
      }
    }
    labels.push_back(std::move(y));
  }
  return labels;
}

MultiTaskDataset MultiTaskDataset::generate(const TaskSuite& suite, std::size_t m_train,
                                            std::size_t m_test, std::uint64_t seed) {
  if (m_train == 0 || m_test == 0) throw std::invalid_argument("dataset: split sizes must be >= 1");
  Rng rng(derive_seed(seed, 1));
  MultiTaskDataset ds;
  ds.train_inputs = gaussian_tensor(rng, {m_train, suite.config.input_dim}, 1.0);
  ds.test_inputs = gaussian_tensor(rng, {m_test, suite.config.input_dim}, 1.0);
  ds.train_labels = suite.labels_for(ds.train_inputs);
  ds.test_labels = suite.labels_for(ds.test_inputs);
  return ds;
}

double normalized_loss(std::span<const double> per_task_losses, std::span<const double> sigma) {
  if (per_task_losses.size() != sigma.size()) {
    throw std::invalid_argument("normalized_loss: losses and sigma differ in length");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) acc += per_task_losses[i] / (sigma[i] * sigma[i]);
  return acc / static_cast<double>(sigma.size());
}

double loss_weight_error(std::span<const double> weights, std::span<const double> sigma) {
  if (weights.size() != sigma.size()) {
    throw std::invalid_argument("loss_weight_error: weights and sigma differ in length");
  }
  const std::size_t n = sigma.size();
  std::vector<double> ideal(n);
  for (std::size_t i = 0; i < n; ++i) ideal[i] = 1.0 / (sigma[i] * sigma[i]);
  const double w_mean = checked_mean(weights, "loss_weight_error");
  const double ideal_mean = checked_mean(ideal, "loss_weight_error");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = weights[i] / w_mean - ideal[i] / ideal_mean;
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

void write_dataset_csv(const std::string& path, const TaskSuite& suite, const MultiTaskDataset& dataset) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_dataset_csv: cannot open " + path);

  const std::size_t d = suite.config.input_dim;
  const std::size_t o = suite.config.output_dim;
  const std::size_t n = suite.config.n_tasks;
  const std::size_t m_train = dataset.train_inputs.rows();
  const std::size_t m_test = dataset.test_inputs.rows();

  os << "# mtregression n_tasks=" << n << " input_dim=" << d << " output_dim=" << o
     << " m_train=" << m_train << " m_test=" << m_test << "\n";
  os << "split";
  for (std::size_t j = 0; j < d; ++j) os << ",x_" << j;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < o; ++j) os << ",task" << (i + 1) << "_y_" << j;
  }
  os << "\n";

  char buf[40];
  auto emit = [&](const Tensor& inputs, const std::vector<Tensor>& labels, const char* split) {
    for (std::size_t r = 0; r < inputs.rows(); ++r) {
      os << split;
      for (std::size_t j = 0; j < d; ++j) {
        std::snprintf(buf, sizeof buf, ",%.17g", inputs.at(r, j));
        os << buf;
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < o; ++j) {
          std::snprintf(buf, sizeof buf, ",%.17g", labels[i].at(r, j));
          os << buf;
        }
      }
      os << "\n";
    }
  };
  emit(dataset.train_inputs, dataset.train_labels, "train");
  emit(dataset.test_inputs, dataset.test_labels, "test");
}

MultiTaskDataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_dataset_csv: cannot open " + path);

  std::string line;
  if (!std::getline(is, line) || line.rfind("# mtregression", 0) != 0) {
    throw std::runtime_error("read_dataset_csv: missing metadata line");
  }
  std::size_t n = 0, d = 0, o = 0, m_train = 0, m_test = 0;
  {
    std::istringstream meta(line);
    std::string tok;
    while (meta >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::size_t val = std::stoul(tok.substr(eq + 1));
      if (key == "n_tasks") n = val;
      else if (key == "input_dim") d = val;
      else if (key == "output_dim") o = val;
      else if (key == "m_train") m_train = val;
      else if (key == "m_test") m_test = val;
    }
  }
  if (n == 0 || d == 0 || o == 0 || m_train == 0 || m_test == 0) {
    throw std::runtime_error("read_dataset_csv: incomplete metadata");
  }
  std::getline(is, line);  // header

  MultiTaskDataset ds;
  ds.train_inputs = Tensor::zeros({m_train, d});
  ds.test_inputs = Tensor::zeros({m_test, d});
  for (std::size_t i = 0; i < n; ++i) {
    ds.train_labels.push_back(Tensor::zeros({m_train, o}));
    ds.test_labels.push_back(Tensor::zeros({m_test, o}));
  }

  std::size_t train_row = 0, test_row = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    const bool is_train = cell == "train";
    if (!is_train && cell != "test") throw std::runtime_error("read_dataset_csv: bad split tag '" + cell + "'");
    Tensor& inputs = is_train ? ds.train_inputs : ds.test_inputs;
    std::vector<Tensor>& labels = is_train ? ds.train_labels : ds.test_labels;
    const std::size_t r = is_train ? train_row++ : test_row++;
    if (r >= inputs.rows()) throw std::runtime_error("read_dataset_csv: too many rows");
    for (std::size_t j = 0; j < d; ++j) {
      std::getline(row, cell, ',');
      inputs.at(r, j) = std::stod(cell);
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < o; ++j) {
        std::getline(row, cell, ',');
        labels[i].at(r, j) = std::stod(cell);
      }
    }
  }
  if (train_row != m_train || test_row != m_test) {
    throw std::runtime_error("read_dataset_csv: row count mismatch");
  }
  return ds;
}

}  // namespace mtlab
