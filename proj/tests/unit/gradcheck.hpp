#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "polyadapt/tape.hpp"

namespace polyadapt::testing {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst;
};

// Relative error with an absolute floor so near-zero gradients compare sanely.
inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-3, std::abs(a), std::abs(b)});
}

// Compares the tape's parameter gradients of `loss_fn` against central finite
// differences. `loss_fn` must build a fresh tape each call and return the loss.
inline GradcheckResult gradcheck(const std::vector<Parameter*>& params,
                                 const std::function<Var(Tape&)>& loss_fn, double eps = 1e-5) {
  ParamGrads analytic;
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
    analytic = tape.param_grads();
  }
  auto eval = [&] {
    Tape tape;
    return loss_fn(tape).value().item();
  };
  GradcheckResult out;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const Tensor* g = nullptr;
    for (const auto& [param, grad] : analytic)
      if (param == p) g = &grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double up = eval();
      p->value[i] = orig - eps;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = g ? (*g)[i] : 0.0;
      const double e = rel_error(a, numeric);
      if (e > out.max_rel_error) {
        out.max_rel_error = e;
        out.worst = p->name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace polyadapt::testing
