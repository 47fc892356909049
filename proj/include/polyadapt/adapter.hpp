#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/rng.hpp"
#include "polyadapt/tape.hpp"

namespace polyadapt {

struct AdapterLayerParams {
  Parameter w_down, b_down, w_up, b_up;
};

// Per-layer residual bottleneck: h + W_up * gelu(W_down * h + b_down) + b_up.
// The up-projection starts at zero, so a fresh adapter is the identity.
class BottleneckAdapter {
 public:
  BottleneckAdapter() = default;
  BottleneckAdapter(const std::string& prefix, std::size_t hidden, std::size_t n_layers, std::size_t reduction_factor,
                    const Rng& rng);

  Var forward(Tape& tape, Var h, std::size_t layer) const;
  std::vector<double> forward(std::span<const double> h, std::size_t layer) const;

  std::size_t hidden() const { return hidden_; }
  std::size_t n_layers() const { return layers_.size(); }
  std::size_t reduction_factor() const { return reduction_factor_; }
  std::size_t bottleneck() const { return bottleneck_; }

  AdapterLayerParams& layer(std::size_t l);
  const AdapterLayerParams& layer(std::size_t l) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void set_trainable(bool trainable);

 private:
  std::size_t hidden_ = 0;
  std::size_t reduction_factor_ = 1;
  std::size_t bottleneck_ = 0;
  std::vector<AdapterLayerParams> layers_;
};

std::size_t bottleneck_width(std::size_t hidden, std::size_t reduction_factor);

struct LanguageAdapter {
  std::string code;
  BottleneckAdapter adapter;
};

LanguageAdapter make_language_adapter(const std::string& code, std::size_t hidden, std::size_t n_layers,
                                      std::size_t reduction_factor, std::uint64_t seed);

// Ordered source language adapters plus an optional target slot. Every
// member shares (hidden, n_layers); codes are unique.
class AdapterBank {
 public:
  void add_source(LanguageAdapter la);
  void set_target(LanguageAdapter la);
  void clear_target() { target_.reset(); }

  // Sources in order, then the target adapter if present.
  std::vector<const LanguageAdapter*> members() const;
  std::vector<LanguageAdapter*> members();
  std::vector<std::string> codes() const;
  std::size_t size() const { return sources_.size() + (target_ ? 1 : 0); }
  bool empty() const { return size() == 0; }
  bool has_target() const { return target_.has_value(); }

  const LanguageAdapter& find(const std::string& code) const;
  std::optional<std::size_t> index_of(const std::string& code) const;

  std::vector<Parameter*> parameters();
  void set_trainable(bool trainable);

 private:
  void check_compatible(const LanguageAdapter& la) const;
  std::vector<LanguageAdapter> sources_;
  std::optional<LanguageAdapter> target_;
};

}  // namespace polyadapt
