#pragma once

#include <string>

#include "polyadapt/rng.hpp"
#include "polyadapt/tape.hpp"

namespace polyadapt {

// Each parameter draws from its own stream keyed by its name, so adding or
// reordering parameters never changes another parameter's initial value.
inline Parameter normal_param(const std::string& name, std::size_t rows, std::size_t cols, double stddev,
                              const Rng& root) {
  Rng rng = root.fork(name);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = stddev * rng.normal();
  return Parameter{name, std::move(t), true};
}

inline Parameter const_param(const std::string& name, std::size_t rows, std::size_t cols, double value) {
  return Parameter{name, Tensor::filled(rows, cols, value), true};
}

// identity (rows == cols) plus N(0, noise^2)
inline Parameter near_identity_param(const std::string& name, std::size_t n, double noise, const Rng& root) {
  Parameter p = normal_param(name, n, n, noise, root);
  for (std::size_t i = 0; i < n; ++i) p.value.at(i, i) += 1.0;
  return p;
}

}  // namespace polyadapt
