#pragma once

#include "polyadapt/experiment.hpp"

namespace polyadapt::testing {

inline SynthSpec tiny_synth_spec(std::uint64_t seed = 3) {
  SynthSpec s;
  s.seed = seed;
  s.sources = {"en", "aa", "bb"};
  s.relatedness = {{1.0, 0.5, 0.5}, {0.5, 1.0, 0.7}, {0.5, 0.7, 1.0}};
  s.target = SynthTarget{"tt", {"aa", "bb"}, {0.55, 0.3}};
  s.concepts = 60;
  s.homograph_rate = 0.4;
  s.n_train = 40;
  s.n_dev = 10;
  s.n_test = 20;
  s.n_unlabeled = 60;
  return s;
}

inline ExperimentConfig tiny_experiment_config() {
  ExperimentConfig c;
  c.encoder = {.n_layers = 2, .hidden = 16, .heads = 2, .ff = 32, .vocab_size = 2048, .max_len = 32};
  c.pretrain = {.steps = 40, .lr = 3e-3, .batch_size = 8};
  c.adapter = {.mlm = {.steps = 20, .lr = 3e-3, .batch_size = 8}, .reduction_factor = 2};
  c.train.lr = 1e-3;
  c.train.epochs = 2;
  c.train.batch_size = 8;
  c.train.reduction_factor = 2;
  c.sft_lr = 1e-3;
  c.lang_dim = 8;
  c.continued = {.steps = 20, .lr = 3e-3, .batch_size = 8};
  c.em_grid = {{1, 5}, {0.05, 0.5}};
  return c;
}

// Tiny synthetic corpus with a pretrained frozen encoder and trained source
// adapters, built once per test binary.
struct TaskWorld {
  Corpus corpus;
  LanguageRoles roles;
  Vocab vocab;
  LabelMap labels;
  ExperimentConfig config;
  Encoder encoder;
  AdapterBank bank;

  std::vector<EncodedExample> split(Split s, const std::vector<std::string>& codes) const {
    return encoded_split(corpus, vocab, labels, codes, s);
  }
  std::vector<EncodedExample> source_split(Split s) const { return split(s, roles.sources); }
  std::vector<EncodedExample> target_split(Split s) const { return split(s, {roles.target}); }

  TaskModel fresh_model(ModelMode mode, std::uint64_t seed = 1) const {
    ModelConfig mc;
    mc.mode = mode;
    mc.reduction_factor = config.train.reduction_factor;
    mc.lang_dim = config.lang_dim;
    mc.seed = seed;
    return make_task_model(mc, encoder, bank, corpus.profiles, vocab, labels);
  }
  TrainConfig train_config(ModelMode mode, std::size_t epochs, std::uint64_t seed = 1) const {
    TrainConfig tc = config.train;
    tc.mode = mode;
    tc.epochs = epochs;
    tc.seed = seed;
    tc.sources = roles.sources;
    return tc;
  }
};

inline const TaskWorld& task_world() {
  static const TaskWorld world = [] {
    TaskWorld w;
    w.corpus = synth_generate(tiny_synth_spec());
    w.roles = language_roles(w.corpus);
    w.config = tiny_experiment_config();
    w.vocab = corpus_vocab(w.corpus, w.config.max_vocab);
    w.labels = corpus_labels(w.corpus, w.roles.sources);
    w.encoder = pretrain_base_encoder(w.corpus, w.vocab, w.roles.sources, w.config, 1);
    w.bank = train_source_adapters(w.encoder, w.corpus, w.vocab, w.roles.sources, w.config, 1);
    return w;
  }();
  return world;
}

}  // namespace polyadapt::testing
