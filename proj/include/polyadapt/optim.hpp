#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "polyadapt/tape.hpp"

namespace polyadapt {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Sums per-parameter gradients over several tapes (one tape per sentence).
class GradAccumulator {
 public:
  void add(const ParamGrads& grads, double weight = 1.0);
  // Gradient aligned with `params`; zeros for parameters that received none.
  std::vector<Tensor> aligned(std::span<Parameter* const> params) const;
  void clear() { grads_.clear(); }
  bool empty() const { return grads_.empty(); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

// First-order optimizer with per-parameter state keyed by parameter name.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Applies one update. Frozen parameters are skipped and stay bit-identical.
  void step(std::span<Parameter* const> params, std::span<const Tensor> grads);

  const OptimizerConfig& config() const { return config_; }
  long steps() const { return step_count_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  OptimizerConfig config_;
  long step_count_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace polyadapt
