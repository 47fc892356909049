#include "polyadapt/mlm.hpp"

#include <algorithm>
#include <numeric>

#include "polyadapt/data.hpp"
#include "polyadapt/error.hpp"
#include "polyadapt/optim.hpp"

namespace polyadapt {

namespace {

void check_corpus(std::span<const std::vector<int>> corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw DataError("empty corpus");
  for (const auto& s : corpus) {
    for (int id : s) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
        throw DataError("vocabulary of corpus exceeds vocab_size " + std::to_string(vocab_size) + " (token id " +
                        std::to_string(id) + ")");
      }
    }
  }
}

void check_config(const MlmConfig& c) {
  if (c.mask_rate <= 0.0) throw Error("nothing to predict: mask_rate must be positive");
  if (c.mask_rate > 1.0) throw Error("mask_rate must be at most 1");
  if (c.batch_size == 0) throw Error("batch_size must be positive");
}

std::span<const int> clip(const std::vector<int>& s, std::size_t max_len) {
  return {s.data(), std::min(s.size(), max_len)};
}

// Forward + backward of the MLM loss on one masked sentence; returns the loss.
double mlm_sentence_step(const Encoder& encoder, const BottleneckAdapter* adapter, const MaskedSentence& ms,
                         double weight, GradAccumulator* grads) {
  Tape tape;
  LayerHook hook;
  if (adapter != nullptr) {
    hook = [adapter](Tape& t, std::size_t layer, Var f) { return adapter->forward(t, f, layer); };
  }
  const EncodeOutput enc = encoder.encode(tape, ms.input, hook);
  const Var rows = ad::gather_rows(enc.top, ms.positions);
  const Var logits = encoder.mlm_logits(tape, rows);
  const std::vector<bool> mask(ms.targets.size(), true);
  const Var loss = ad::cross_entropy(logits, ms.targets, mask);
  if (grads != nullptr) {
    tape.backward(loss, weight);
    grads->add(tape.param_grads());
  }
  return loss.value().item();
}

void run_mlm(const Encoder& encoder, const BottleneckAdapter* adapter, std::span<Parameter* const> trainable,
             std::span<const std::vector<int>> corpus, const MlmConfig& config, MlmReport* report) {
  check_config(config);
  check_corpus(corpus, encoder.config().vocab_size);
  Optimizer opt({OptimizerKind::adam, config.lr});
  const Rng root = Rng(config.seed).fork("mlm");
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng rng = root.fork(step);
    std::vector<MaskedSentence> batch;
    std::size_t total_targets = 0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& sent = corpus[static_cast<std::size_t>(rng.below(corpus.size()))];
      MaskedSentence ms = mask_sentence(clip(sent, encoder.config().max_len), config.mask_rate,
                                        encoder.config().vocab_size, rng);
      if (ms.positions.empty()) continue;
      total_targets += ms.positions.size();
      batch.push_back(std::move(ms));
    }
    if (batch.empty()) {
      if (report) report->step_losses.push_back(report->step_losses.empty() ? 0.0 : report->step_losses.back());
      continue;
    }
    GradAccumulator grads;
    double loss = 0.0;
    for (const auto& ms : batch) {
      const double w = static_cast<double>(ms.positions.size()) / static_cast<double>(total_targets);
      loss += w * mlm_sentence_step(encoder, adapter, ms, w, &grads);
    }
    const auto aligned = grads.aligned(trainable);
    opt.step(trainable, aligned);
    if (report) report->step_losses.push_back(loss);
  }
}

}  // namespace

double MlmReport::head_mean(std::size_t window) const {
  const std::size_t n = std::min(window, step_losses.size());
  if (n == 0) return 0.0;
  return std::accumulate(step_losses.begin(), step_losses.begin() + static_cast<long>(n), 0.0) /
         static_cast<double>(n);
}

double MlmReport::tail_mean(std::size_t window) const {
  const std::size_t n = std::min(window, step_losses.size());
  if (n == 0) return 0.0;
  return std::accumulate(step_losses.end() - static_cast<long>(n), step_losses.end(), 0.0) / static_cast<double>(n);
}

MaskedSentence mask_sentence(std::span<const int> ids, double mask_rate, std::size_t vocab_size, Rng& rng) {
  MaskedSentence ms;
  ms.input.assign(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!rng.bernoulli(mask_rate)) continue;
    ms.positions.push_back(static_cast<int>(i));
    ms.targets.push_back(ids[i]);
    const double r = rng.uniform();
    if (r < 0.8) {
      ms.input[i] = Vocab::kMask;
    } else if (r < 0.9 && vocab_size > static_cast<std::size_t>(Vocab::kNumSpecial)) {
      ms.input[i] = Vocab::kNumSpecial + static_cast<int>(rng.below(vocab_size - Vocab::kNumSpecial));
    }
  }
  return ms;
}

Encoder mlm_pretrain(const EncoderConfig& encoder_config, std::span<const std::vector<int>> corpus,
                     const MlmConfig& config, MlmReport* report) {
  return continued_pretrain(Encoder(encoder_config, config.seed), corpus, config, report);
}

Encoder continued_pretrain(Encoder encoder, std::span<const std::vector<int>> corpus, const MlmConfig& config,
                           MlmReport* report) {
  check_config(config);
  check_corpus(corpus, encoder.config().vocab_size);
  if (config.steps == 0) return encoder;
  encoder.set_trainable(true);
  const auto params = encoder.parameters();
  run_mlm(encoder, nullptr, params, corpus, config, report);
  return encoder;
}

LanguageAdapter train_language_adapter(const Encoder& encoder, const std::string& code,
                                       std::span<const std::vector<int>> corpus, const AdapterTrainConfig& config,
                                       MlmReport* report) {
  LanguageAdapter la = make_language_adapter(code, encoder.config().hidden, encoder.config().n_layers,
                                             config.reduction_factor, config.mlm.seed);
  return train_language_adapter(encoder, std::move(la), corpus, config.mlm, report);
}

LanguageAdapter train_language_adapter(const Encoder& encoder, LanguageAdapter adapter,
                                       std::span<const std::vector<int>> corpus, const MlmConfig& config,
                                       MlmReport* report) {
  if (!encoder.fully_frozen()) throw Error("encoder must be frozen for language-adapter training");
  check_config(config);
  if (corpus.empty()) throw DataError("empty corpus for language adapter '" + adapter.code + "'");
  if (config.steps == 0) return adapter;
  adapter.adapter.set_trainable(true);
  const auto params = adapter.adapter.parameters();
  run_mlm(encoder, &adapter.adapter, params, corpus, config, report);
  return adapter;
}

double mlm_eval_loss(const Encoder& encoder, const BottleneckAdapter* adapter,
                     std::span<const std::vector<int>> corpus, double mask_rate, std::uint64_t seed) {
  check_corpus(corpus, encoder.config().vocab_size);
  const Rng root = Rng(seed).fork("mlm-eval");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng = root.fork(i);
    const MaskedSentence ms =
        mask_sentence(clip(corpus[i], encoder.config().max_len), mask_rate, encoder.config().vocab_size, rng);
    if (ms.positions.empty()) continue;
    total += mlm_sentence_step(encoder, adapter, ms, 1.0, nullptr) * static_cast<double>(ms.positions.size());
    count += ms.positions.size();
  }
  if (count == 0) throw Error("nothing to predict");
  return total / static_cast<double>(count);
}

}  // namespace polyadapt
