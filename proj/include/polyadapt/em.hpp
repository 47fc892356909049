#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/data.hpp"
#include "polyadapt/model.hpp"

namespace polyadapt {

enum class EmInit { learned, uniform };
enum class EmTie { token_untied, layer_tied };
// Which weights are adapted: both attention networks of the ZGUL model, or the
// single mixture of a plain adapter ensemble.
enum class EmPath { zgul, ensemble };

std::string to_string(EmInit v);
std::string to_string(EmTie v);
EmInit parse_em_init(const std::string& s);
EmTie parse_em_tie(const std::string& s);

struct EmConfig {
  std::size_t steps = 1;  // T
  double lr = 0.05;
  EmInit init = EmInit::learned;
  EmTie tie = EmTie::token_untied;
  EmPath path = EmPath::zgul;
};

// Attention logits for one sentence: one entry per layer. For the ensemble
// path only `fusion` is used.
struct EmState {
  std::vector<Tensor> fusion;   // tokens x n, or 1 x n when layer-tied
  std::vector<Tensor> langvec;  // tokens x n, or 1 x n when layer-tied
};

EmState initial_em_state(const TaskModel& model, std::span<const int> ids, const std::string& language,
                         const EmConfig& config);

// Mean per-word entropy (nats) of the prediction under beta = softmax(state),
// with its gradient with respect to every state tensor.
struct EntropyEval {
  double entropy = 0.0;
  Tensor logits;  // tokens x labels
  EmState grad;
};
EntropyEval sentence_entropy(const TaskModel& model, std::span<const int> ids, const std::string& language,
                             const EmState& state, const EmConfig& config, bool with_grad = true);

struct EmResult {
  std::vector<int> prediction;
  std::vector<double> entropy;  // before each step, then after the last one
  EmState state;
  // predictions[t] is the prediction after t steps, t = 0..T.
  std::vector<std::vector<int>> predictions;
};

// T steps of alpha <- alpha - lr * dH/dalpha, then predict with softmax(alpha).
EmResult em_tune(const TaskModel& model, std::span<const int> ids, const std::string& language,
                 const EmConfig& config);

struct EmGrid {
  std::vector<std::size_t> steps{1, 5, 10};
  std::vector<double> lrs{0.05, 0.1, 0.5, 1.0};
};

struct EmGridCell {
  std::size_t steps = 0;
  double lr = 0.0;
  double f1 = 0.0;
};

struct EmGridResult {
  std::size_t best_steps = 0;
  double best_lr = 0.0;
  double best_f1 = 0.0;
  std::vector<EmGridCell> cells;
};

// Picks (T, lr) maximizing micro-F1 on `dev`; ties go to smaller T, then smaller lr.
// `language` is the input language passed to the model for every dev sentence.
EmGridResult em_grid_search(const TaskModel& model, std::span<const EncodedExample> dev, const std::string& language,
                            const EmGrid& grid, const EmConfig& base);

// CSV: sentence_id,step,entropy
std::string format_em_trajectory_csv(std::span<const EmResult> results);
void write_em_trajectory_csv(const std::filesystem::path& path, std::span<const EmResult> results);

}  // namespace polyadapt
