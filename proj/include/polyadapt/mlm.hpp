#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/adapter.hpp"
#include "polyadapt/encoder.hpp"
#include "polyadapt/rng.hpp"

namespace polyadapt {

struct MlmConfig {
  double mask_rate = 0.15;
  std::size_t steps = 200;
  double lr = 1e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

struct MlmReport {
  std::vector<double> step_losses;
  // Mean loss over the first / last `window` steps.
  double head_mean(std::size_t window = 10) const;
  double tail_mean(std::size_t window = 10) const;
};

struct MaskedSentence {
  std::vector<int> input;      // with replacements applied
  std::vector<int> positions;  // selected positions
  std::vector<int> targets;    // original ids at those positions
};

// Each position is selected independently with probability mask_rate; a
// selected token becomes <mask> 80% of the time, a random non-special token
// 10%, and is kept 10%.
MaskedSentence mask_sentence(std::span<const int> ids, double mask_rate, std::size_t vocab_size, Rng& rng);

// Fresh encoder initialized from config.seed and trained with MLM on `corpus`.
Encoder mlm_pretrain(const EncoderConfig& encoder_config, std::span<const std::vector<int>> corpus,
                     const MlmConfig& config, MlmReport* report = nullptr);

// Continues MLM training of an existing encoder (every tensor trainable).
Encoder continued_pretrain(Encoder encoder, std::span<const std::vector<int>> corpus, const MlmConfig& config,
                           MlmReport* report = nullptr);

struct AdapterTrainConfig {
  MlmConfig mlm;
  std::size_t reduction_factor = 3;
};

// Trains a language adapter with MLM on `corpus`. The encoder (including the
// MLM head) must be fully frozen and is never modified.
LanguageAdapter train_language_adapter(const Encoder& encoder, const std::string& code,
                                       std::span<const std::vector<int>> corpus, const AdapterTrainConfig& config,
                                       MlmReport* report = nullptr);

// Continues training an existing adapter.
LanguageAdapter train_language_adapter(const Encoder& encoder, LanguageAdapter adapter,
                                       std::span<const std::vector<int>> corpus, const MlmConfig& config,
                                       MlmReport* report = nullptr);

// Mean masked-token loss over the corpus with a fixed masking draw.
double mlm_eval_loss(const Encoder& encoder, const BottleneckAdapter* adapter,
                     std::span<const std::vector<int>> corpus, double mask_rate, std::uint64_t seed);

}  // namespace polyadapt
