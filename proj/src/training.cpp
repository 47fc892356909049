#include "polyadapt/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "polyadapt/error.hpp"
#include "polyadapt/optim.hpp"
#include "polyadapt/rng.hpp"

namespace polyadapt {

namespace {

std::vector<Tensor> snapshot(std::span<Parameter* const> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(std::span<Parameter* const> params, std::span<const Tensor> values) {
  if (params.size() != values.size()) throw Error("checkpoint does not match the trainable parameters");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

// One pass over `examples` in a seeded order; returns the token-weighted mean loss.
double run_epoch(TaskModel& model, std::span<Parameter* const> params, Optimizer& opt,
                 std::span<const EncodedExample> examples, std::size_t batch_size, Rng rng) {
  if (batch_size == 0) throw Error("batch_size must be positive");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  double loss_sum = 0.0;
  std::size_t token_sum = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::size_t tokens = 0;
    for (std::size_t k = start; k < end; ++k) tokens += examples[order[k]].ids.size();
    if (tokens == 0) continue;
    GradAccumulator grads;
    for (std::size_t k = start; k < end; ++k) {
      const EncodedExample& ex = examples[order[k]];
      if (ex.ids.empty()) continue;
      Tape tape;
      const Var logits = task_logits(tape, model, ex.ids, ex.language);
      const std::vector<bool> mask(ex.labels.size(), true);
      const Var loss = ad::cross_entropy(logits, ex.labels, mask);
      const double w = static_cast<double>(ex.ids.size()) / static_cast<double>(tokens);
      tape.backward(loss, w);
      grads.add(tape.param_grads());
      loss_sum += loss.value().item() * static_cast<double>(ex.ids.size());
    }
    token_sum += tokens;
    opt.step(params, grads.aligned(params));
  }
  return token_sum == 0 ? 0.0 : loss_sum / static_cast<double>(token_sum);
}

struct DevScore {
  double loss = 0.0;
  double f1 = 0.0;
};

DevScore score_dev(const TaskModel& model, std::span<const EncodedExample> dev) {
  std::vector<TagSequence> preds, golds;
  double loss = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : dev) {
    const Tensor logits = task_forward(model, ex.ids, ex.language);
    const std::vector<bool> mask(ex.labels.size(), true);
    loss += cross_entropy(logits, ex.labels, mask) * static_cast<double>(ex.ids.size());
    tokens += ex.ids.size();
    preds.push_back(model.labels.decode(argmax_rows(logits)));
    golds.push_back(model.labels.decode(ex.labels));
  }
  return {loss / static_cast<double>(std::max<std::size_t>(tokens, 1)),
          micro_f1(preds, golds, model.labels.scheme()).f1};
}

}  // namespace

void check_zero_shot_hygiene(std::span<const EncodedExample> examples, std::span<const std::string> sources,
                             Split expected) {
  for (const auto& ex : examples) {
    const bool is_source = std::find(sources.begin(), sources.end(), ex.language) != sources.end();
    if (!is_source) {
      if (expected == Split::dev) throw DataError("target dev forbidden in zero-shot mode");
      throw DataError("labeled data of non-source language '" + ex.language + "' forbidden in zero-shot mode");
    }
    if (ex.split != expected) {
      throw DataError("expected " + std::string(to_string(expected)) + " data, got " +
                      std::string(to_string(ex.split)) + " (" + ex.language + ")");
    }
  }
}

std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw Error("no checkpoints to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

std::size_t select_model(TaskModel& model, std::span<const TrainCheckpoint> checkpoints,
                         std::span<const EncodedExample> dev, std::span<const std::string> sources) {
  if (checkpoints.empty()) throw Error("no checkpoints to select from");
  if (dev.empty()) throw Error("empty dev set");
  check_zero_shot_hygiene(dev, sources, Split::dev);
  const auto params = model.trainable_parameters();
  std::vector<double> scores;
  for (const auto& c : checkpoints) {
    restore(params, c.values);
    scores.push_back(score_dev(model, dev).f1);
  }
  const std::size_t best = select_best(scores);
  restore(params, checkpoints[best].values);
  return best;
}

TrainResult train_task(TaskModel& model, std::span<const EncodedExample> train, std::span<const EncodedExample> dev,
                       const TrainConfig& config) {
  if (model.config.mode != config.mode) {
    throw Error("model was built for mode " + to_string(model.config.mode) + ", training requested " +
                to_string(config.mode));
  }
  if (config.sources.empty()) throw Error("no source languages");
  if (config.mode != ModelMode::sft) {
    for (const auto& s : config.sources)
      if (!model.bank.index_of(s)) throw Error("source language '" + s + "' has no language adapter");
  }
  check_zero_shot_hygiene(train, config.sources, Split::train);
  check_zero_shot_hygiene(dev, config.sources, Split::dev);
  TrainResult result;
  if (config.epochs == 0) return result;
  if (train.empty()) throw DataError("empty training set");
  if (dev.empty()) throw Error("empty dev set");

  const auto params = model.configure_trainable();
  Optimizer opt({OptimizerKind::adam, config.lr});
  const Rng root = Rng(config.seed).fork("train");
  std::vector<Tensor> best_values;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double train_loss = run_epoch(model, params, opt, train, config.batch_size, root.fork(epoch));
    const DevScore d = score_dev(model, dev);
    result.log.push_back({epoch, "train", train_loss, std::numeric_limits<double>::quiet_NaN()});
    result.log.push_back({epoch, "dev", d.loss, d.f1});
    result.dev_f1.push_back(d.f1);
    if (result.best_epoch == 0 || d.f1 > result.dev_f1[result.best_epoch - 1]) {
      result.best_epoch = epoch;
      best_values = snapshot(params);
    }
  }
  restore(params, best_values);
  return result;
}

Predictor task_predictor(const TaskModel& model) {
  return [&model](const EncodedExample& ex) { return argmax_rows(task_forward(model, ex.ids, ex.language)); };
}

std::vector<TagSequence> predict_tags(const TaskModel& model, std::span<const EncodedExample> examples,
                                      const Predictor& predict) {
  std::vector<TagSequence> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(model.labels.decode(predict(ex)));
  return out;
}

Prf evaluate(const TaskModel& model, std::span<const EncodedExample> examples, const Predictor& predict) {
  std::vector<TagSequence> golds;
  for (const auto& ex : examples) golds.push_back(model.labels.decode(ex.labels));
  return micro_f1(predict_tags(model, examples, predict), golds, model.labels.scheme());
}

std::string format_train_log_csv(std::span<const TrainLogRow> rows) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,split,loss,micro_f1\n";
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.split << ',' << r.loss << ',';
    if (!std::isnan(r.micro_f1)) os << r.micro_f1;
    os << '\n';
  }
  return os.str();
}

TaskModel few_shot_finetune(const TaskModel& model, std::span<const EncodedExample> target_train,
                            const std::string& target, const FewShotConfig& config) {
  if (config.n_examples > target_train.size()) {
    throw DataError("few-shot bin of " + std::to_string(config.n_examples) + " exceeds the " +
                    std::to_string(target_train.size()) + " available target examples");
  }
  TaskModel tuned = model;
  if (config.n_examples == 0 || config.epochs == 0) return tuned;
  Rng rng = Rng(config.seed).fork("few-shot");
  std::vector<EncodedExample> sample;
  for (std::size_t i : rng.sample_without_replacement(target_train.size(), config.n_examples)) {
    EncodedExample ex = target_train[i];
    if (ex.language != target) throw DataError("few-shot example is not in the target language");
    sample.push_back(std::move(ex));
  }
  const auto params = tuned.configure_trainable();
  Optimizer opt({OptimizerKind::adam, config.lr});
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    run_epoch(tuned, params, opt, sample, config.batch_size, rng.fork(epoch));
  }
  return tuned;
}

std::vector<FewShotRow> few_shot_curve(const TaskModel& model, std::span<const EncodedExample> target_train,
                                       std::span<const EncodedExample> target_test, const std::string& target,
                                       std::span<const std::size_t> bins, std::span<const std::uint64_t> seeds,
                                       const FewShotConfig& base) {
  std::vector<FewShotRow> rows;
  for (std::size_t bin : bins) {
    for (std::uint64_t seed : seeds) {
      FewShotConfig c = base;
      c.n_examples = bin;
      c.seed = seed;
      const TaskModel tuned = few_shot_finetune(model, target_train, target, c);
      rows.push_back({bin, seed, evaluate(tuned, target_test, task_predictor(tuned)).f1});
    }
  }
  return rows;
}

std::string format_few_shot_csv(std::span<const FewShotRow> rows) {
  std::ostringstream os;
  os.precision(10);
  os << "bin,seed,micro_f1\n";
  for (const auto& r : rows) os << r.bin << ',' << r.seed << ',' << r.f1 << '\n';
  return os.str();
}

}  // namespace polyadapt
