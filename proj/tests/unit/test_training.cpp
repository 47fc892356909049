#include <gtest/gtest.h>

#include <map>
#include <utility>

#include "fixtures.hpp"
#include "polyadapt/error.hpp"
#include "polyadapt/training.hpp"
#include "task_fixture.hpp"

using namespace polyadapt;
using namespace polyadapt::testing;

namespace {

double majority_baseline_f1(const std::vector<EncodedExample>& train, const std::vector<EncodedExample>& dev) {
  std::map<int, std::size_t> counts;
  for (const auto& ex : train)
    for (int l : ex.labels) ++counts[l];
  int majority = 0;
  std::size_t best = 0;
  for (const auto& [l, c] : counts)
    if (c > best) best = c, majority = l;
  std::size_t hit = 0, total = 0;
  for (const auto& ex : dev) {
    for (int l : ex.labels) hit += l == majority ? 1 : 0;
    total += ex.labels.size();
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

std::vector<Tensor> values(const TaskModel& m) { return snapshot(m.parameters()); }

std::vector<Tensor> encoder_values(const TaskModel& m) { return snapshot(m.encoder.parameters()); }

std::vector<Tensor> bank_values(const TaskModel& m) {
  std::vector<Tensor> out;
  for (const auto* la : m.bank.members())
    for (const Parameter* p : la->adapter.parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST(TrainTask, ZeroEpochsIsNoOp) {
  const TaskWorld& w = task_world();
  TaskModel m = w.fresh_model(ModelMode::zgul);
  const auto before = values(m);
  const auto r = train_task(m, w.source_split(Split::train), w.source_split(Split::dev),
                            w.train_config(ModelMode::zgul, 0));
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(values(m), before);
}

TEST(TrainTask, BeatsMajorityBaselineAndFreezesEncoderAndBank) {
  const TaskWorld& w = task_world();
  TaskModel m = w.fresh_model(ModelMode::zgul);
  const auto enc = encoder_values(m);
  const auto bank = bank_values(m);
  const auto train = w.source_split(Split::train);
  const auto dev = w.source_split(Split::dev);
  TrainConfig tc = w.train_config(ModelMode::zgul, 5);
  tc.lr = 3e-3;
  const auto r = train_task(m, train, dev, tc);
  ASSERT_EQ(r.dev_f1.size(), 5u);
  EXPECT_GT(r.dev_f1[r.best_epoch - 1], majority_baseline_f1(train, dev));
  EXPECT_EQ(encoder_values(m), enc);
  EXPECT_EQ(bank_values(m), bank);
  // The restored model is the best epoch's.
  EXPECT_DOUBLE_EQ(evaluate(m, dev, task_predictor(m)).f1, r.dev_f1[r.best_epoch - 1]);
  EXPECT_EQ(r.log.size(), 10u);
}

TEST(TrainTask, SftUnfreezesTheEncoder) {
  const TaskWorld& w = task_world();
  TaskModel m = w.fresh_model(ModelMode::sft);
  const auto enc = encoder_values(m);
  train_task(m, w.source_split(Split::train), w.source_split(Split::dev), w.train_config(ModelMode::sft, 1));
  EXPECT_NE(encoder_values(m), enc);
}

TEST(TrainTask, MadxMultiTrainsOnlyTheTaskAdapterAndHead) {
  const TaskWorld& w = task_world();
  TaskModel m = w.fresh_model(ModelMode::madx_multi);
  const auto enc = encoder_values(m);
  const auto bank = bank_values(m);
  const auto ta = snapshot(std::as_const(m.task_adapter).parameters());
  train_task(m, w.source_split(Split::train), w.source_split(Split::dev), w.train_config(ModelMode::madx_multi, 1));
  EXPECT_EQ(encoder_values(m), enc);
  EXPECT_EQ(bank_values(m), bank);
  EXPECT_NE(snapshot(std::as_const(m.task_adapter).parameters()), ta);
}

TEST(TrainTask, SameSeedGivesIdenticalParameters) {
  const TaskWorld& w = task_world();
  auto run = [&] {
    TaskModel m = w.fresh_model(ModelMode::zgul, 7);
    train_task(m, w.source_split(Split::train), w.source_split(Split::dev), w.train_config(ModelMode::zgul, 1, 7));
    return values(m);
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainTask, Errors) {
  const TaskWorld& w = task_world();
  TaskModel m = w.fresh_model(ModelMode::zgul);
  const auto train = w.source_split(Split::train);
  TrainConfig tc = w.train_config(ModelMode::zgul, 1);
  try {
    train_task(m, train, w.target_split(Split::dev), tc);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "target dev forbidden in zero-shot mode");
  }
  EXPECT_THROW(train_task(m, w.target_split(Split::train), w.source_split(Split::dev), tc), DataError);
  EXPECT_THROW(train_task(m, w.source_split(Split::dev), w.source_split(Split::dev), tc), DataError);
  tc.mode = ModelMode::sft;
  EXPECT_THROW(train_task(m, train, w.source_split(Split::dev), tc), Error);
  tc = w.train_config(ModelMode::zgul, 1);
  tc.sources.push_back("zz");
  EXPECT_THROW(train_task(m, train, w.source_split(Split::dev), tc), Error);
}

TEST(Hygiene, TargetDevIsRejected) {
  const TaskWorld& w = task_world();
  const auto dev = w.target_split(Split::dev);
  try {
    check_zero_shot_hygiene(dev, w.roles.sources, Split::dev);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_STREQ(e.what(), "target dev forbidden in zero-shot mode");
  }
  EXPECT_NO_THROW(check_zero_shot_hygiene(w.source_split(Split::dev), w.roles.sources, Split::dev));
}

TEST(SelectBest, EarliestOfTiedBest) {
  EXPECT_EQ(select_best(std::vector<double>{0.5, 0.7, 0.7}), 1u);
  EXPECT_EQ(select_best(std::vector<double>{0.4}), 0u);
  EXPECT_THROW(select_best(std::vector<double>{}), Error);
}

TEST(SelectModel, RestoresTheBestCheckpoint) {
  const TaskWorld& w = task_world();
  TaskModel m = w.fresh_model(ModelMode::zgul);
  const auto dev = w.source_split(Split::dev);
  const auto params = m.trainable_parameters();
  TrainCheckpoint fresh{0, {}};
  for (const Parameter* p : params) fresh.values.push_back(p->value);
  const std::vector<TrainCheckpoint> single{fresh};
  EXPECT_EQ(select_model(m, single, dev, w.roles.sources), 0u);

  TaskModel trained = w.fresh_model(ModelMode::zgul);
  TrainConfig tc = w.train_config(ModelMode::zgul, 3);
  tc.lr = 3e-3;
  train_task(trained, w.source_split(Split::train), dev, tc);
  TrainCheckpoint good{1, {}};
  for (const Parameter* p : trained.trainable_parameters()) good.values.push_back(p->value);
  const std::vector<TrainCheckpoint> both{fresh, good, fresh};
  const std::size_t best = select_model(m, both, dev, w.roles.sources);
  EXPECT_EQ(best, 1u);
  EXPECT_EQ(values(m), values(trained));
  EXPECT_THROW(select_model(m, both, {}, w.roles.sources), Error);
  EXPECT_THROW(select_model(m, both, w.target_split(Split::dev), w.roles.sources), DataError);
}

TEST(TrainLog, CsvLeavesTrainF1Empty) {
  const std::vector<TrainLogRow> rows{{1, "train", 0.5, std::nan("")}, {1, "dev", 0.25, 0.75}};
  EXPECT_EQ(format_train_log_csv(rows), "epoch,split,loss,micro_f1\n1,train,0.5,\n1,dev,0.25,0.75\n");
}

TEST(Grids, DefaultsMatchTheReferenceGrids) {
  const FewShotGrid g;
  EXPECT_EQ(g.bins, (std::vector<std::size_t>{10, 30, 70, 100}));
  EXPECT_EQ(g.lrs, (std::vector<double>{1e-5, 5e-5, 1e-4}));
  EXPECT_EQ(g.epochs, (std::vector<std::size_t>{1, 5, 10}));
  EXPECT_EQ(g.batch_sizes, (std::vector<std::size_t>{1, 4, 8}));
  const TrainGrid t;
  EXPECT_EQ(t.sft_lrs, (std::vector<double>{2e-5, 3e-5, 5e-5}));
  EXPECT_EQ(t.adapter_lrs, (std::vector<double>{5e-5, 1e-4}));
  EXPECT_EQ(t.reduction_factors, (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(t.batch_sizes, (std::vector<std::size_t>{16, 32}));
}

TEST(FewShot, EmptyBinKeepsTheModel) {
  const TaskWorld& w = task_world();
  const TaskModel m = w.fresh_model(ModelMode::zgul);
  const TaskModel tuned = few_shot_finetune(m, w.target_split(Split::train), w.roles.target, {.n_examples = 0});
  EXPECT_EQ(values(tuned), values(m));
}

TEST(FewShot, DeterministicAndTouchesOnlyTrainableTensors) {
  const TaskWorld& w = task_world();
  const TaskModel m = w.fresh_model(ModelMode::zgul);
  const auto train = w.target_split(Split::train);
  const FewShotConfig c{.n_examples = 10, .lr = 1e-3, .epochs = 2, .batch_size = 4, .seed = 5};
  const TaskModel a = few_shot_finetune(m, train, w.roles.target, c);
  const TaskModel b = few_shot_finetune(m, train, w.roles.target, c);
  EXPECT_EQ(values(a), values(b));
  EXPECT_NE(values(a), values(m));
  EXPECT_EQ(encoder_values(a), encoder_values(m));
  EXPECT_EQ(bank_values(a), bank_values(m));
}

TEST(FewShot, Errors) {
  const TaskWorld& w = task_world();
  const TaskModel m = w.fresh_model(ModelMode::zgul);
  const auto train = w.target_split(Split::train);
  EXPECT_THROW(few_shot_finetune(m, train, w.roles.target, {.n_examples = train.size() + 1}), DataError);
  EXPECT_THROW(few_shot_finetune(m, w.source_split(Split::train), w.roles.target, {.n_examples = 5}), DataError);
}

TEST(FewShot, CurveCsv) {
  const std::vector<FewShotRow> rows{{10, 1, 0.5}};
  EXPECT_EQ(format_few_shot_csv(rows), "bin,seed,micro_f1\n10,1,0.5\n");
}

TEST(FewShot, CurveIsNonDecreasingOnSeedAverage) {
  SynthSpec spec = tiny_synth_spec(4);
  spec.n_train = 100;
  const Corpus corpus = synth_generate(spec);
  const LanguageRoles roles = language_roles(corpus);
  const ExperimentConfig config = tiny_experiment_config();
  const Vocab vocab = corpus_vocab(corpus, config.max_vocab);
  const LabelMap labels = corpus_labels(corpus, roles.sources);
  const Encoder enc = pretrain_base_encoder(corpus, vocab, roles.sources, config, 2);
  const AdapterBank bank = train_source_adapters(enc, corpus, vocab, roles.sources, config, 2);
  const TaskModel m = train_mode(ModelMode::zgul, enc, bank, corpus, vocab, labels, roles.sources, config, 2).model;
  const std::vector<std::string> target{roles.target};
  const auto train = encoded_split(corpus, vocab, labels, target, Split::train);
  const auto test = encoded_split(corpus, vocab, labels, target, Split::test);
  const std::vector<std::size_t> bins{10, 30, 70, 100};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto rows = few_shot_curve(m, train, test, roles.target, bins, seeds,
                                   {.lr = 1e-3, .epochs = 2, .batch_size = 4});
  std::map<std::size_t, double> mean;
  for (const auto& r : rows) mean[r.bin] += r.f1 / 3.0;
  for (std::size_t i = 1; i < bins.size(); ++i) EXPECT_GE(mean[bins[i]], mean[bins[i - 1]] - 0.01) << bins[i];
}
