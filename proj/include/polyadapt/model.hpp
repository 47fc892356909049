#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/adapter.hpp"
#include "polyadapt/data.hpp"
#include "polyadapt/encoder.hpp"
#include "polyadapt/fusion.hpp"
#include "polyadapt/language.hpp"

namespace polyadapt {

enum class ModelMode { zgul, sft, madx_multi };
std::string to_string(ModelMode m);
ModelMode parse_model_mode(const std::string& s);

struct ModelConfig {
  EncoderConfig encoder;
  ModelMode mode = ModelMode::zgul;
  std::size_t reduction_factor = 3;
  std::size_t lang_dim = 32;
  std::size_t feature_dim = kTypologyDim;
  bool freeze_encoder = true;
  // Falls back to uniform language-vector attention when the input language
  // has no profile. Off by default: a missing profile is an error.
  bool uniform_langvec_fallback = false;
  std::uint64_t seed = 0;
};

// Encoder, frozen language-adapter bank, ensembling block, task adapter and
// classifier, plus the vocabulary, label map and language profiles they need.
struct TaskModel {
  ModelConfig config;
  Encoder encoder;
  AdapterBank bank;
  ProfileMap profiles;
  std::vector<FusionLayerParams> fusion;
  LangVecMlp langvec;
  BottleneckAdapter task_adapter;
  Parameter cls_w, cls_b;
  Vocab vocab;
  LabelMap labels;

  // Every tensor in a fixed order: encoder, bank, fusion, langvec, task adapter, classifier.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  // Parameters the current mode trains; the trainable flags are set to match.
  std::vector<Parameter*> configure_trainable();
  std::vector<Parameter*> trainable_parameters();

  std::size_t n_layers() const { return encoder.config().n_layers; }
  std::size_t n_labels() const { return labels.size(); }
  const LanguageProfile& profile(const std::string& code) const;
};

// Builds a fresh head over an existing encoder and bank.
TaskModel make_task_model(const ModelConfig& config, Encoder encoder, AdapterBank bank, ProfileMap profiles,
                          Vocab vocab, LabelMap labels);

// Per-layer attention logits, recorded by or injected into the ZGUL pass.
struct ZgulLayerLogits {
  Var fusion;   // tokens x n
  Var langvec;  // 1 x n, or tokens x n when injected per token
};

struct ZgulPassOptions {
  // When set, these replace the computed attention logits layer by layer.
  const std::vector<ZgulLayerLogits>* override_logits = nullptr;
  // Receives the logits that were used.
  std::vector<ZgulLayerLogits>* record_logits = nullptr;
};

Var zgul_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, const std::string& language,
                const ZgulPassOptions& options = {});
Var madx_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, const std::string& la_code);
// weights: one row per layer (1 x n or tokens x n) of mixture weights on the simplex.
Var ensemble_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, std::span<const Var> weights);
Var sft_logits(Tape& tape, const TaskModel& model, std::span<const int> ids);

// Attention weights of one sentence, per layer.
struct AttentionTrace {
  std::vector<std::string> sources;
  std::vector<Tensor> fusion;   // per layer, tokens x n
  std::vector<Tensor> langvec;  // per layer, 1 x n
};

Tensor zgul_forward(const TaskModel& model, std::span<const int> ids, const std::string& language,
                    AttentionTrace* trace = nullptr);
Tensor madx_forward(const TaskModel& model, std::span<const int> ids, const std::string& la_code);
// `weights` holds either one simplex vector shared by all layers or one per layer.
Tensor ensemble_forward(const TaskModel& model, std::span<const int> ids,
                        const std::vector<std::vector<double>>& weights);
Tensor sft_forward(const TaskModel& model, std::span<const int> ids);

// Forward pass of the model's own mode; madx_multi uses the adapter of `language`.
Var task_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, const std::string& language);
Tensor task_forward(const TaskModel& model, std::span<const int> ids, const std::string& language);

std::vector<int> argmax_rows(const Tensor& logits);

// CSV columns: sentence_id,layer,token_idx,network,source_lang,weight
std::string format_trace_csv(std::span<const AttentionTrace> traces);
void write_trace_csv(const std::filesystem::path& path, std::span<const AttentionTrace> traces);

}  // namespace polyadapt
