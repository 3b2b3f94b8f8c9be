#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlab/tape.hpp"
#include "mtlab/tensor.hpp"

namespace mtlab {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& s);
const char* to_string(Activation a);

struct NetConfig {
  std::size_t input_dim = 250;
  std::size_t output_dim = 100;
  std::size_t hidden = 100;
  std::size_t depth = 4;      // trunk layers
  std::size_t n_tasks = 10;
  Activation activation = Activation::Relu;
  std::uint64_t init_seed = 0;
};

// Shared trunk of affine layers with activation, plus one affine head per
// task. Parameters are stored outside any tape and re-registered on a fresh
// tape every step.
class MultiTaskNet {
public:
  static MultiTaskNet build(const NetConfig& config);

  const NetConfig& config() const noexcept { return config_; }
  std::size_t n_tasks() const noexcept { return config_.n_tasks; }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::size_t scalar_param_count() const;         // total number of reals
  std::size_t shared_scalar_param_count() const;  // reals in the trunk

  std::vector<Tensor>& params() noexcept { return params_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }

  std::span<const ParamId> shared_ids() const noexcept { return shared_ids_; }
  std::span<const ParamId> last_shared_ids() const noexcept { return last_shared_ids_; }
  std::span<const ParamId> head_ids(std::size_t task) const;
  std::vector<ParamId> task_specific_ids() const;

  // Registers every parameter on the tape, runs the trunk once, and returns
  // one output node per task. x must be (batch x input_dim).
  std::vector<NodeId> forward(Tape& tape, const Tensor& x) const;

  // Per-task outputs without a tape, for evaluation.
  std::vector<Tensor> predict(const Tensor& x) const;

private:
  NetConfig config_;
  std::vector<Tensor> params_;            // indexed by ParamId
  std::vector<ParamId> shared_ids_;
  std::vector<ParamId> last_shared_ids_;  // final trunk layer (weight, bias)
  std::vector<std::vector<ParamId>> head_ids_;
};

struct AdamConfig {
  double lr = 7e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moments are laid out parallel to the parameter
// vector passed at construction.
class Adam {
public:
  Adam(const std::vector<Tensor>& params, AdamConfig config);

  void step(std::vector<Tensor>& params, const GradientMap& grads);
  std::size_t step_count() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return config_; }

private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

class Sgd {
public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::vector<Tensor>& params, const GradientMap& grads);

private:
  double lr_;
};

// Identity when the global norm is within max_norm, otherwise uniform
// rescaling to max_norm.
GradientMap clip_global_norm(GradientMap grads, double max_norm);

}  // namespace mtlab
