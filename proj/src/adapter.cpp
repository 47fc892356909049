#include "polyadapt/adapter.hpp"

#include <cmath>

#include "polyadapt/error.hpp"
#include "polyadapt/init.hpp"

namespace polyadapt {

std::size_t bottleneck_width(std::size_t hidden, std::size_t reduction_factor) {
  if (reduction_factor == 0) throw Error("reduction factor must be positive");
  const std::size_t w = hidden / reduction_factor;
  if (w == 0) {
    throw Error("reduction factor " + std::to_string(reduction_factor) + " leaves no bottleneck for hidden size " +
                std::to_string(hidden));
  }
  return w;
}

BottleneckAdapter::BottleneckAdapter(const std::string& prefix, std::size_t hidden, std::size_t n_layers,
                                     std::size_t reduction_factor, const Rng& rng)
    : hidden_(hidden), reduction_factor_(reduction_factor), bottleneck_(bottleneck_width(hidden, reduction_factor)) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l) + ".";
    AdapterLayerParams L;
    L.w_down = normal_param(p + "Wdown", hidden, bottleneck_, sd, rng);
    L.b_down = const_param(p + "bdown", 1, bottleneck_, 0.0);
    L.w_up = const_param(p + "Wup", bottleneck_, hidden, 0.0);
    L.b_up = const_param(p + "bup", 1, hidden, 0.0);
    layers_.push_back(std::move(L));
  }
}

AdapterLayerParams& BottleneckAdapter::layer(std::size_t l) {
  if (l >= layers_.size()) throw Error("adapter layer " + std::to_string(l) + " out of range");
  return layers_[l];
}

const AdapterLayerParams& BottleneckAdapter::layer(std::size_t l) const {
  if (l >= layers_.size()) throw Error("adapter layer " + std::to_string(l) + " out of range");
  return layers_[l];
}

Var BottleneckAdapter::forward(Tape& tape, Var h, std::size_t layer_index) const {
  const AdapterLayerParams& L = layer(layer_index);
  if (h.cols() != hidden_) throw Error("adapter input width does not match hidden size");
  const Var down = ad::gelu(ad::linear(h, tape.param(L.w_down), tape.param(L.b_down)));
  return ad::add(h, ad::linear(down, tape.param(L.w_up), tape.param(L.b_up)));
}

std::vector<double> BottleneckAdapter::forward(std::span<const double> h, std::size_t layer_index) const {
  if (h.size() != hidden_) throw Error("adapter input width does not match hidden size");
  Tape tape;
  const Var out = forward(tape, tape.constant(Tensor::row(h)), layer_index);
  return {out.value().data().begin(), out.value().data().end()};
}

std::vector<Parameter*> BottleneckAdapter::parameters() {
  std::vector<Parameter*> out;
  for (auto& L : layers_)
    for (Parameter* p : {&L.w_down, &L.b_down, &L.w_up, &L.b_up}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> BottleneckAdapter::parameters() const {
  auto mut = const_cast<BottleneckAdapter*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void BottleneckAdapter::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) p->trainable = trainable;
}

LanguageAdapter make_language_adapter(const std::string& code, std::size_t hidden, std::size_t n_layers,
                                      std::size_t reduction_factor, std::uint64_t seed) {
  return {code, BottleneckAdapter("la." + code, hidden, n_layers, reduction_factor, Rng(seed).fork("la." + code))};
}

void AdapterBank::check_compatible(const LanguageAdapter& la) const {
  if (index_of(la.code)) throw Error("duplicate language adapter '" + la.code + "'");
  const auto all = members();
  if (!all.empty()) {
    const auto& ref = all.front()->adapter;
    if (ref.hidden() != la.adapter.hidden() || ref.n_layers() != la.adapter.n_layers()) {
      throw Error("language adapter '" + la.code + "' does not match the bank's (hidden, layers)");
    }
  }
}

void AdapterBank::add_source(LanguageAdapter la) {
  check_compatible(la);
  sources_.push_back(std::move(la));
}

void AdapterBank::set_target(LanguageAdapter la) {
  if (target_ && target_->code == la.code) target_.reset();
  check_compatible(la);
  target_ = std::move(la);
}

std::vector<const LanguageAdapter*> AdapterBank::members() const {
  std::vector<const LanguageAdapter*> out;
  for (const auto& s : sources_) out.push_back(&s);
  if (target_) out.push_back(&*target_);
  return out;
}

std::vector<LanguageAdapter*> AdapterBank::members() {
  std::vector<LanguageAdapter*> out;
  for (auto& s : sources_) out.push_back(&s);
  if (target_) out.push_back(&*target_);
  return out;
}

std::vector<std::string> AdapterBank::codes() const {
  std::vector<std::string> out;
  for (const auto* m : members()) out.push_back(m->code);
  return out;
}

std::optional<std::size_t> AdapterBank::index_of(const std::string& code) const {
  const auto all = members();
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i]->code == code) return i;
  return std::nullopt;
}

const LanguageAdapter& AdapterBank::find(const std::string& code) const {
  const auto idx = index_of(code);
  if (!idx) throw Error("no language adapter for '" + code + "' in the bank");
  return *members()[*idx];
}

std::vector<Parameter*> AdapterBank::parameters() {
  std::vector<Parameter*> out;
  for (auto* m : members())
    for (Parameter* p : m->adapter.parameters()) out.push_back(p);
  return out;
}

void AdapterBank::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) p->trainable = trainable;
}

}  // namespace polyadapt
