#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/analysis.hpp"
#include "polyadapt/config.hpp"
#include "polyadapt/em.hpp"
#include "polyadapt/metrics.hpp"
#include "polyadapt/mlm.hpp"
#include "polyadapt/model.hpp"
#include "polyadapt/synth.hpp"
#include "polyadapt/training.hpp"

namespace polyadapt {

// Evaluation strategies for a trained model on an unseen target.
//   zgul      ZGUL forward pass
//   em        ZGUL forward pass with test-time entropy minimization
//   madx_en   multi-source task adapter over the first source's adapter
//   madx_rel  multi-source task adapter over the most related source's adapter
//   uniform   multi-source task adapter over a uniform adapter ensemble
//   emea      uniform ensemble refined by entropy minimization
enum class Strategy { zgul, em, madx_en, madx_rel, uniform, emea };
std::string to_string(Strategy s);  // zgul, em, madx-en, madx-rel, uniform, emea
Strategy parse_strategy(const std::string& s);
// The model mode a strategy evaluates.
ModelMode strategy_mode(Strategy s);

struct ExperimentConfig {
  EncoderConfig encoder;  // vocab_size is overwritten from the corpus vocabulary
  MlmConfig pretrain;     // base encoder, source text only
  AdapterTrainConfig adapter;
  TrainConfig train;   // shared by the adapter-based modes; `mode` and `sources` are set per run
  double sft_lr = 5e-4;
  std::size_t lang_dim = 32;
  MlmConfig continued;  // encoder continued pretraining on target text
  EmGrid em_grid;
  RelatednessKind relatedness = RelatednessKind::mean;
  std::size_t max_vocab = 50000;

  void validate() const;
};

Json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig base = {});

const RelatednessMatrix& relatedness_of(const Corpus& corpus, RelatednessKind kind);

// The target is `target` or else the corpus's designated target; every other
// language is a source.
struct LanguageRoles {
  std::vector<std::string> sources;
  std::string target;
};
LanguageRoles language_roles(const Corpus& corpus, const std::optional<std::string>& target = std::nullopt);

// Vocabulary over every sentence of every language.
Vocab corpus_vocab(const Corpus& corpus, std::size_t max_size);
// Tag set of the sources' training data.
LabelMap corpus_labels(const Corpus& corpus, std::span<const std::string> sources);

// Token ids of each listed language's unlabeled text, plus its training
// sentences when `with_train` is set.
std::vector<std::vector<int>> language_text(const Corpus& corpus, const Vocab& vocab,
                                            std::span<const std::string> codes, bool with_train);

std::vector<EncodedExample> encoded_split(const Corpus& corpus, const Vocab& vocab, const LabelMap& labels,
                                          std::span<const std::string> codes, Split split);

// Returned frozen.
Encoder pretrain_base_encoder(const Corpus& corpus, const Vocab& vocab, std::span<const std::string> sources,
                              const ExperimentConfig& config, std::uint64_t seed, MlmReport* report = nullptr);

AdapterBank train_source_adapters(const Encoder& encoder, const Corpus& corpus, const Vocab& vocab,
                                  std::span<const std::string> sources, const ExperimentConfig& config,
                                  std::uint64_t seed);

struct TrainedModel {
  TaskModel model;
  TrainResult result;
};

// Builds a fresh head of the given mode over `encoder` and `bank` and trains it
// on the sources' train split, selecting on their dev split.
TrainedModel train_mode(ModelMode mode, const Encoder& encoder, const AdapterBank& bank, const Corpus& corpus,
                        const Vocab& vocab, const LabelMap& labels, std::span<const std::string> sources,
                        const ExperimentConfig& config, std::uint64_t seed);

struct StrategyContext {
  std::string target;
  std::string first_source;    // madx_en
  std::string related_source;  // madx_rel and EM tuning
  EmConfig em;                 // steps and lr used by em / emea
};

// Token predictions for each example under a strategy.
std::vector<std::vector<int>> predict_strategy(const TaskModel& model, Strategy strategy,
                                               std::span<const EncodedExample> examples, const StrategyContext& ctx);

struct StrategyEval {
  Strategy strategy = Strategy::zgul;
  Prf scores;
  std::vector<TagSequence> predictions;
};
StrategyEval evaluate_strategy(const TaskModel& model, Strategy strategy, std::span<const EncodedExample> examples,
                               const StrategyContext& ctx);

// EM configuration for the zgul or ensemble path with (T, lr) grid-searched on
// the given dev set read as `language`.
EmConfig tune_em(const TaskModel& model, EmPath path, std::span<const EncodedExample> dev, const std::string& language,
                 const EmGrid& grid, EmGridResult* result = nullptr);

// One complete zero-shot run: pretraining, adapters, the three task models,
// every strategy on the target test split, the attention analysis and the
// unlabeled-data extension.
struct TransferRun {
  std::uint64_t seed = 0;
  LanguageRoles roles;
  std::string related_source;
  std::map<std::string, double> f1;  // keyed by strategy name, plus "sft" and "zgul++" variants
  EmConfig zgul_em, emea_em;
  std::vector<CorrelationRow> correlation;
};

struct TransferOptions {
  bool unlabeled_extension = true;
  bool sft = true;
};

TransferRun run_transfer(const Corpus& corpus, const ExperimentConfig& config, std::uint64_t seed,
                         const TransferOptions& options = {});

// ZGUL++: continue encoder pretraining on the target's unlabeled text, train a
// target adapter on that encoder, add it to the bank and retrain ZGUL.
TrainedModel train_zgul_plus(const Encoder& base, const AdapterBank& sources, const Corpus& corpus,
                             const Vocab& vocab, const LabelMap& labels, const LanguageRoles& roles,
                             const ExperimentConfig& config, std::uint64_t seed);

}  // namespace polyadapt
