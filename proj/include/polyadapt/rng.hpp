#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace polyadapt {

// Counter-based generator: draw i of stream s under seed k is a pure function
// mix(k, s, i), so independent consumers never perturb each other's draws and
// results are identical on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  // Child generator with its own stream; the parent counter is untouched.
  Rng fork(std::uint64_t stream) const;
  Rng fork(std::string_view name) const;

  std::uint64_t next_u64();
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);
  std::uint64_t below(std::uint64_t bound);  // [0, bound), unbiased
  double normal();                          // N(0, 1), Box-Muller without caching
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices from [0, n) in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_string(std::string_view s);

}  // namespace polyadapt
