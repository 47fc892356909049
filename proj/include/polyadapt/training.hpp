#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/data.hpp"
#include "polyadapt/metrics.hpp"
#include "polyadapt/model.hpp"

namespace polyadapt {

// Hyperparameter grids used for task training and few-shot fine-tuning.
struct TrainGrid {
  std::vector<double> sft_lrs{2e-5, 3e-5, 5e-5};
  std::vector<double> adapter_lrs{5e-5, 1e-4};
  std::vector<std::size_t> reduction_factors{3, 4};
  std::vector<std::size_t> batch_sizes{16, 32};
  std::size_t ner_epochs = 10;
  std::size_t pos_epochs = 5;
};

struct FewShotGrid {
  std::vector<std::size_t> bins{10, 30, 70, 100};
  std::vector<double> lrs{1e-5, 5e-5, 1e-4};
  std::vector<std::size_t> epochs{1, 5, 10};
  std::vector<std::size_t> batch_sizes{1, 4, 8};
};

struct TrainConfig {
  ModelMode mode = ModelMode::zgul;
  double lr = 1e-4;
  std::size_t epochs = 5;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t reduction_factor = 3;
  std::vector<std::string> sources;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  std::string split;  // "train" or "dev"
  double loss = 0.0;
  double micro_f1 = 0.0;  // NaN for the train rows
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::vector<double> dev_f1;  // per epoch
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
};

// Trains the parameters the model's mode leaves trainable, selects the epoch
// with the best micro-F1 on the combined source dev set and restores it.
TrainResult train_task(TaskModel& model, std::span<const EncodedExample> train, std::span<const EncodedExample> dev,
                       const TrainConfig& config);

// Rejects data from outside the source languages or with the wrong split tag.
void check_zero_shot_hygiene(std::span<const EncodedExample> examples, std::span<const std::string> sources,
                             Split expected);

// Index of the earliest maximum.
std::size_t select_best(std::span<const double> scores);

// Snapshot of the trainable tensors after one epoch.
struct TrainCheckpoint {
  std::size_t epoch = 0;
  std::vector<Tensor> values;
};

// Evaluates each checkpoint on the combined source dev set, restores and
// returns the index of the best one (earliest on ties).
std::size_t select_model(TaskModel& model, std::span<const TrainCheckpoint> checkpoints,
                         std::span<const EncodedExample> dev, std::span<const std::string> sources);

using Predictor = std::function<std::vector<int>(const EncodedExample&)>;
Predictor task_predictor(const TaskModel& model);
Prf evaluate(const TaskModel& model, std::span<const EncodedExample> examples, const Predictor& predict);
// Corpus-level token predictions decoded to tags.
std::vector<TagSequence> predict_tags(const TaskModel& model, std::span<const EncodedExample> examples,
                                      const Predictor& predict);

std::string format_train_log_csv(std::span<const TrainLogRow> rows);

struct FewShotConfig {
  std::size_t n_examples = 10;
  double lr = 1e-4;
  std::size_t epochs = 5;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
};

// Samples n examples without replacement and fine-tunes every trainable tensor.
TaskModel few_shot_finetune(const TaskModel& model, std::span<const EncodedExample> target_train,
                            const std::string& target, const FewShotConfig& config);

struct FewShotRow {
  std::size_t bin = 0;
  std::uint64_t seed = 0;
  double f1 = 0.0;
};

std::vector<FewShotRow> few_shot_curve(const TaskModel& model, std::span<const EncodedExample> target_train,
                                       std::span<const EncodedExample> target_test, const std::string& target,
                                       std::span<const std::size_t> bins, std::span<const std::uint64_t> seeds,
                                       const FewShotConfig& base);
std::string format_few_shot_csv(std::span<const FewShotRow> rows);

}  // namespace polyadapt
