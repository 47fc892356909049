#include "polyadapt/experiment.hpp"

#include <algorithm>
#include <set>

#include "polyadapt/error.hpp"

namespace polyadapt {

namespace {

constexpr std::pair<Strategy, const char*> kStrategyNames[] = {
    {Strategy::zgul, "zgul"},         {Strategy::em, "em"},           {Strategy::madx_en, "madx-en"},
    {Strategy::madx_rel, "madx-rel"}, {Strategy::uniform, "uniform"}, {Strategy::emea, "emea"}};

const char* relatedness_name(RelatednessKind k) {
  switch (k) {
    case RelatednessKind::genetic: return "genetic";
    case RelatednessKind::syntactic: return "syntactic";
    case RelatednessKind::mean: return "mean";
  }
  return "mean";
}

RelatednessKind parse_relatedness(const std::string& s) {
  if (s == "genetic") return RelatednessKind::genetic;
  if (s == "syntactic") return RelatednessKind::syntactic;
  if (s == "mean") return RelatednessKind::mean;
  throw DataError("unknown relatedness kind '" + s + "'");
}

std::vector<Example> gather(const Corpus& corpus, std::span<const std::string> codes, Split split) {
  std::vector<Example> out;
  for (const auto& code : codes) {
    const LanguageData& d = corpus.language(code);
    const auto& src = split == Split::train ? d.train : split == Split::dev ? d.dev : split == Split::test ? d.test
                                                                                                          : d.unlabeled;
    out.insert(out.end(), src.begin(), src.end());
  }
  return out;
}

}  // namespace

std::string to_string(Strategy s) {
  for (const auto& [v, name] : kStrategyNames)
    if (v == s) return name;
  return "zgul";
}

Strategy parse_strategy(const std::string& s) {
  for (const auto& [v, name] : kStrategyNames)
    if (s == name) return v;
  throw DataError("unknown strategy '" + s + "'");
}

ModelMode strategy_mode(Strategy s) {
  return s == Strategy::zgul || s == Strategy::em ? ModelMode::zgul : ModelMode::madx_multi;
}

void ExperimentConfig::validate() const {
  if (pretrain.steps == 0) throw DataError("experiment config: pretraining needs at least one step");
  if (em_grid.steps.empty() || em_grid.lrs.empty()) throw DataError("experiment config: empty EM grid");
  if (train.epochs == 0) throw DataError("experiment config: training needs at least one epoch");
}

Json to_json(const ExperimentConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"pretrain", to_json(c.pretrain)},
          {"adapter", {{"mlm", to_json(c.adapter.mlm)}, {"reduction_factor", c.adapter.reduction_factor}}},
          {"train", to_json(c.train)},
          {"sft_lr", c.sft_lr},
          {"lang_dim", c.lang_dim},
          {"continued", to_json(c.continued)},
          {"em_grid", {{"steps", c.em_grid.steps}, {"lrs", c.em_grid.lrs}}},
          {"relatedness", relatedness_name(c.relatedness)},
          {"max_vocab", c.max_vocab}};
}

ExperimentConfig experiment_config_from_json(const Json& j, ExperimentConfig c) {
  const std::string where = "experiment config";
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");
  reject_unknown_keys(j,
                      {"encoder", "pretrain", "adapter", "train", "sft_lr", "lang_dim", "continued", "em_grid",
                       "relatedness", "max_vocab"},
                      where);
  try {
    if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"), c.encoder);
    if (j.contains("pretrain")) c.pretrain = mlm_config_from_json(j.at("pretrain"), c.pretrain);
    if (j.contains("adapter")) {
      const Json& a = j.at("adapter");
      reject_unknown_keys(a, {"mlm", "reduction_factor"}, where + ".adapter");
      if (a.contains("mlm")) c.adapter.mlm = mlm_config_from_json(a.at("mlm"), c.adapter.mlm);
      c.adapter.reduction_factor = a.value("reduction_factor", c.adapter.reduction_factor);
    }
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    c.sft_lr = j.value("sft_lr", c.sft_lr);
    c.lang_dim = j.value("lang_dim", c.lang_dim);
    if (j.contains("continued")) c.continued = mlm_config_from_json(j.at("continued"), c.continued);
    if (j.contains("em_grid")) {
      const Json& g = j.at("em_grid");
      reject_unknown_keys(g, {"steps", "lrs"}, where + ".em_grid");
      if (g.contains("steps")) c.em_grid.steps = g.at("steps").get<std::vector<std::size_t>>();
      if (g.contains("lrs")) c.em_grid.lrs = g.at("lrs").get<std::vector<double>>();
    }
    if (j.contains("relatedness")) c.relatedness = parse_relatedness(j.at("relatedness").get<std::string>());
    c.max_vocab = j.value("max_vocab", c.max_vocab);
  } catch (const Json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  c.validate();
  return c;
}

const RelatednessMatrix& relatedness_of(const Corpus& corpus, RelatednessKind kind) {
  switch (kind) {
    case RelatednessKind::genetic: return corpus.genetic;
    case RelatednessKind::syntactic: return corpus.syntactic;
    case RelatednessKind::mean: return corpus.mean;
  }
  return corpus.mean;
}

LanguageRoles language_roles(const Corpus& corpus, const std::optional<std::string>& target) {
  LanguageRoles roles;
  roles.target = target ? *target : corpus.target;
  if (roles.target.empty()) throw DataError("corpus has no designated target language");
  corpus.language(roles.target);
  for (const auto& code : corpus.codes())
    if (code != roles.target) roles.sources.push_back(code);
  if (roles.sources.empty()) throw DataError("corpus has no source languages");
  return roles;
}

Vocab corpus_vocab(const Corpus& corpus, std::size_t max_size) { return Vocab::build(corpus.all_sentences(), max_size); }

LabelMap corpus_labels(const Corpus& corpus, std::span<const std::string> sources) {
  return LabelMap::build(gather(corpus, sources, Split::train), corpus.scheme);
}

std::vector<std::vector<int>> language_text(const Corpus& corpus, const Vocab& vocab,
                                            std::span<const std::string> codes, bool with_train) {
  std::vector<std::vector<int>> out;
  for (const auto& code : codes) {
    const LanguageData& d = corpus.language(code);
    for (const auto& ex : d.unlabeled) out.push_back(vocab.encode(ex.tokens));
    if (with_train)
      for (const auto& ex : d.train) out.push_back(vocab.encode(ex.tokens));
  }
  return out;
}

std::vector<EncodedExample> encoded_split(const Corpus& corpus, const Vocab& vocab, const LabelMap& labels,
                                          std::span<const std::string> codes, Split split) {
  return encode_examples(vocab, labels, gather(corpus, codes, split));
}

Encoder pretrain_base_encoder(const Corpus& corpus, const Vocab& vocab, std::span<const std::string> sources,
                              const ExperimentConfig& config, std::uint64_t seed, MlmReport* report) {
  EncoderConfig ec = config.encoder;
  ec.vocab_size = vocab.size();
  MlmConfig mc = config.pretrain;
  mc.seed = seed;
  Encoder encoder = mlm_pretrain(ec, language_text(corpus, vocab, sources, true), mc, report);
  encoder.set_trainable(false);
  return encoder;
}

AdapterBank train_source_adapters(const Encoder& encoder, const Corpus& corpus, const Vocab& vocab,
                                  std::span<const std::string> sources, const ExperimentConfig& config,
                                  std::uint64_t seed) {
  AdapterBank bank;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    AdapterTrainConfig ac = config.adapter;
    ac.mlm.seed = mix64(seed + 1000 * (i + 1));
    const std::string code = sources[i];
    bank.add_source(train_language_adapter(encoder, code, language_text(corpus, vocab, {&code, 1}, false), ac));
  }
  return bank;
}

TrainedModel train_mode(ModelMode mode, const Encoder& encoder, const AdapterBank& bank, const Corpus& corpus,
                        const Vocab& vocab, const LabelMap& labels, std::span<const std::string> sources,
                        const ExperimentConfig& config, std::uint64_t seed) {
  ModelConfig mc;
  mc.encoder = encoder.config();
  mc.mode = mode;
  mc.reduction_factor = config.train.reduction_factor;
  mc.lang_dim = config.lang_dim;
  mc.seed = seed;
  TaskModel model = make_task_model(mc, encoder, bank, corpus.profiles, vocab, labels);
  TrainConfig tc = config.train;
  tc.mode = mode;
  tc.seed = seed;
  tc.sources.assign(sources.begin(), sources.end());
  if (mode == ModelMode::sft) tc.lr = config.sft_lr;
  const auto train = encoded_split(corpus, vocab, labels, sources, Split::train);
  const auto dev = encoded_split(corpus, vocab, labels, sources, Split::dev);
  TrainResult result = train_task(model, train, dev, tc);
  return {std::move(model), std::move(result)};
}

std::vector<std::vector<int>> predict_strategy(const TaskModel& model, Strategy strategy,
                                               std::span<const EncodedExample> examples, const StrategyContext& ctx) {
  if (model.config.mode != strategy_mode(strategy)) {
    throw DataError("strategy " + to_string(strategy) + " needs a " + to_string(strategy_mode(strategy)) + " model");
  }
  const std::size_t n = model.bank.size();
  const std::vector<std::vector<double>> uniform{std::vector<double>(n, 1.0 / static_cast<double>(n))};
  std::vector<std::vector<int>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    switch (strategy) {
      case Strategy::zgul: out.push_back(argmax_rows(zgul_forward(model, ex.ids, ctx.target))); break;
      case Strategy::em:
      case Strategy::emea: {
        EmConfig em = ctx.em;
        em.path = strategy == Strategy::em ? EmPath::zgul : EmPath::ensemble;
        out.push_back(em_tune(model, ex.ids, ctx.target, em).prediction);
        break;
      }
      case Strategy::madx_en: out.push_back(argmax_rows(madx_forward(model, ex.ids, ctx.first_source))); break;
      case Strategy::madx_rel: out.push_back(argmax_rows(madx_forward(model, ex.ids, ctx.related_source))); break;
      case Strategy::uniform: out.push_back(argmax_rows(ensemble_forward(model, ex.ids, uniform))); break;
    }
  }
  return out;
}

StrategyEval evaluate_strategy(const TaskModel& model, Strategy strategy, std::span<const EncodedExample> examples,
                               const StrategyContext& ctx) {
  StrategyEval ev;
  ev.strategy = strategy;
  std::vector<TagSequence> golds;
  for (const auto& ids : predict_strategy(model, strategy, examples, ctx)) ev.predictions.push_back(model.labels.decode(ids));
  for (const auto& ex : examples) golds.push_back(model.labels.decode(ex.labels));
  ev.scores = micro_f1(ev.predictions, golds, model.labels.scheme());
  return ev;
}

EmConfig tune_em(const TaskModel& model, EmPath path, std::span<const EncodedExample> dev, const std::string& language,
                 const EmGrid& grid, EmGridResult* result) {
  EmConfig base;
  base.path = path;
  if (path == EmPath::ensemble) {
    base.init = EmInit::uniform;
    base.tie = EmTie::layer_tied;
  }
  const EmGridResult r = em_grid_search(model, dev, language, grid, base);
  if (result) *result = r;
  base.steps = r.best_steps;
  base.lr = r.best_lr;
  return base;
}

TrainedModel train_zgul_plus(const Encoder& base, const AdapterBank& sources, const Corpus& corpus,
                             const Vocab& vocab, const LabelMap& labels, const LanguageRoles& roles,
                             const ExperimentConfig& config, std::uint64_t seed) {
  const std::vector<std::string> target{roles.target};
  const auto text = language_text(corpus, vocab, target, false);
  MlmConfig cc = config.continued;
  cc.seed = mix64(seed + 77);
  Encoder encoder = continued_pretrain(base, text, cc);
  encoder.set_trainable(false);
  AdapterTrainConfig ac = config.adapter;
  ac.mlm.seed = mix64(seed + 99);
  AdapterBank bank = sources;
  bank.set_target(train_language_adapter(encoder, roles.target, text, ac));
  return train_mode(ModelMode::zgul, encoder, bank, corpus, vocab, labels, roles.sources, config, seed);
}

TransferRun run_transfer(const Corpus& corpus, const ExperimentConfig& config, std::uint64_t seed,
                         const TransferOptions& options) {
  config.validate();
  TransferRun run;
  run.seed = seed;
  run.roles = language_roles(corpus);
  const auto& sources = run.roles.sources;
  const RelatednessMatrix& rel = relatedness_of(corpus, config.relatedness);
  run.related_source = rel.most_related(run.roles.target, sources);

  const Vocab vocab = corpus_vocab(corpus, config.max_vocab);
  const LabelMap labels = corpus_labels(corpus, sources);
  const Encoder encoder = pretrain_base_encoder(corpus, vocab, sources, config, seed);
  const AdapterBank bank = train_source_adapters(encoder, corpus, vocab, sources, config, seed);

  const std::vector<std::string> target{run.roles.target};
  const std::vector<std::string> related{run.related_source};
  const auto test = encoded_split(corpus, vocab, labels, target, Split::test);
  const auto related_dev = encoded_split(corpus, vocab, labels, related, Split::dev);

  StrategyContext ctx;
  ctx.target = run.roles.target;
  ctx.first_source = sources.front();
  ctx.related_source = run.related_source;

  const TrainedModel zgul = train_mode(ModelMode::zgul, encoder, bank, corpus, vocab, labels, sources, config, seed);
  run.zgul_em = tune_em(zgul.model, EmPath::zgul, related_dev, run.related_source, config.em_grid);
  ctx.em = run.zgul_em;
  for (Strategy s : {Strategy::zgul, Strategy::em})
    run.f1[to_string(s)] = evaluate_strategy(zgul.model, s, test, ctx).scores.f1;
  const std::vector<TargetSet> sets{{run.roles.target, test}};
  run.correlation = correlation_report(zgul.model, sets, rel);

  const TrainedModel madx =
      train_mode(ModelMode::madx_multi, encoder, bank, corpus, vocab, labels, sources, config, seed);
  run.emea_em = tune_em(madx.model, EmPath::ensemble, related_dev, run.related_source, config.em_grid);
  ctx.em = run.emea_em;
  for (Strategy s : {Strategy::madx_en, Strategy::madx_rel, Strategy::uniform, Strategy::emea})
    run.f1[to_string(s)] = evaluate_strategy(madx.model, s, test, ctx).scores.f1;

  if (options.sft) {
    const TrainedModel sft = train_mode(ModelMode::sft, encoder, bank, corpus, vocab, labels, sources, config, seed);
    run.f1["sft"] = evaluate(sft.model, test, [&](const EncodedExample& ex) {
                      return argmax_rows(sft_forward(sft.model, ex.ids));
                    }).f1;
  }

  if (options.unlabeled_extension) {
    const TrainedModel plus = train_zgul_plus(encoder, bank, corpus, vocab, labels, run.roles, config, seed);
    ctx.em = tune_em(plus.model, EmPath::zgul, related_dev, run.related_source, config.em_grid);
    run.f1["zgul++"] = evaluate_strategy(plus.model, Strategy::zgul, test, ctx).scores.f1;
    run.f1["zgul++ em"] = evaluate_strategy(plus.model, Strategy::em, test, ctx).scores.f1;
  }
  return run;
}

}  // namespace polyadapt
