#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "polyadapt/init.hpp"
#include "polyadapt/model.hpp"
#include "polyadapt/rng.hpp"

namespace polyadapt::testing {

inline EncoderConfig tiny_encoder_config(std::size_t hidden = 8, std::size_t layers = 2) {
  EncoderConfig c;
  c.n_layers = layers;
  c.hidden = hidden;
  c.heads = 2;
  c.ff = 2 * hidden;
  c.vocab_size = 24;
  c.max_len = 16;
  return c;
}

inline void perturb(const std::vector<Parameter*>& params, double sd, std::uint64_t seed) {
  Rng rng(seed, 77);
  for (Parameter* p : params)
    for (double& v : p->value.data()) v += sd * rng.normal();
}

// An adapter with a nonzero up-projection, so it is not the identity.
inline LanguageAdapter random_adapter(const std::string& code, std::size_t hidden, std::size_t layers,
                                      std::uint64_t seed, double sd = 0.3) {
  LanguageAdapter la = make_language_adapter(code, hidden, layers, 2, seed);
  perturb(la.adapter.parameters(), sd, seed + 1);
  return la;
}

inline LanguageProfile random_profile(const std::string& code, std::uint64_t seed) {
  Rng rng(seed, 5);
  LanguageProfile p{code, std::vector<double>(kTypologyDim)};
  for (double& v : p.features) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return p;
}

inline std::vector<std::string> source_codes(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

struct TinyModelOptions {
  std::size_t hidden = 8;
  std::size_t layers = 2;
  std::size_t n_labels = 4;
  std::size_t lang_dim = 4;
  ModelMode mode = ModelMode::zgul;
  std::uint64_t seed = 1;
  double head_noise = 0.0;  // extra noise on the trainable head, including the TA up-projection
};

// Frozen random encoder and bank over `codes` (each adapter seeded by its code),
// profiles for every code plus "tgt", and a fresh head.
inline TaskModel tiny_model(const std::vector<std::string>& codes, const TinyModelOptions& o = {}) {
  Encoder enc(tiny_encoder_config(o.hidden, o.layers), o.seed);
  enc.set_trainable(false);
  AdapterBank bank;
  ProfileMap profiles;
  for (const auto& c : codes) {
    const std::uint64_t s = hash_string(c) ^ o.seed;
    bank.add_source(random_adapter(c, o.hidden, o.layers, s));
    profiles[c] = random_profile(c, s);
  }
  profiles["tgt"] = random_profile("tgt", o.seed + 99);
  bank.set_trainable(false);
  std::vector<std::string> words{"<unk>", "<mask>"};
  for (int i = 0; i < 20; ++i) words.push_back("w" + std::to_string(i));
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < o.n_labels; ++i) tags.push_back("T" + std::to_string(i));
  ModelConfig mc;
  mc.mode = o.mode;
  mc.reduction_factor = 2;
  mc.lang_dim = o.lang_dim;
  mc.seed = o.seed;
  TaskModel m = make_task_model(mc, std::move(enc), std::move(bank), std::move(profiles),
                                Vocab::from_words(words), LabelMap(tags, TagScheme::token));
  if (o.head_noise > 0.0) perturb(m.trainable_parameters(), o.head_noise, o.seed + 3);
  return m;
}

inline TaskModel tiny_model(std::size_t n_sources, const TinyModelOptions& o = {}) {
  return tiny_model(source_codes(n_sources), o);
}

inline std::vector<int> sentence(std::size_t length, std::uint64_t seed = 0) {
  Rng rng(seed, 9);
  std::vector<int> ids(length);
  for (int& id : ids) id = 2 + static_cast<int>(rng.below(20));
  return ids;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<Tensor> snapshot(const std::vector<const Parameter*>& params) {
  std::vector<Tensor> out;
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

}  // namespace polyadapt::testing
