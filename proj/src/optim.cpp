#include "polyadapt/optim.hpp"

#include <cmath>

#include "polyadapt/error.hpp"

namespace polyadapt {

void GradAccumulator::add(const ParamGrads& grads, double weight) {
  for (const auto& [param, g] : grads) {
    auto [it, inserted] = grads_.try_emplace(param, Tensor(g.shape()));
    auto d = it->second.data();
    auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += weight * s[i];
  }
}

std::vector<Tensor> GradAccumulator::aligned(std::span<Parameter* const> params) const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) {
    if (auto it = grads_.find(p); it != grads_.end()) {
      out.push_back(it->second);
    } else {
      out.emplace_back(p->value.shape());
    }
  }
  return out;
}

void Optimizer::step(std::span<Parameter* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw Error("optimizer: gradient count does not match parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.size() != grads[i].size()) {
      throw Error("optimizer: gradient shape " + shape_string(grads[i].shape()) + " does not match parameter " +
                  params[i]->name + " " + shape_string(params[i]->value.shape()));
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    auto w = p.value.data();
    auto g = grads[i].data();
    if (config_.kind == OptimizerKind::sgd) {
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= config_.lr * g[k];
      continue;
    }
    auto [it, inserted] = moments_.try_emplace(p.name);
    Moments& mom = it->second;
    if (inserted) {
      mom.m = Tensor(p.value.shape());
      mom.v = Tensor(p.value.shape());
    }
    auto m = mom.m.data();
    auto v = mom.v.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace polyadapt
