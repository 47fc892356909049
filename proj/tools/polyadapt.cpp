#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "manifest.hpp"
#include "polyadapt/analysis.hpp"
#include "polyadapt/checkpoint.hpp"
#include "polyadapt/error.hpp"
#include "polyadapt/experiment.hpp"

namespace fs = std::filesystem;
using namespace polyadapt;
using polyadapt::cli::RunManifest;

namespace {

constexpr const char* kOutRootEnv = "POLYADAPT_OUT_ROOT";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path resolve_out(const std::string& out) {
  const fs::path p(out);
  const char* root = std::getenv(kOutRootEnv);
  if (p.is_relative() && root && *root) return fs::path(root) / p;
  return p;
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string csv_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Options shared by most subcommands.
struct Common {
  std::string corpus;
  std::string config;
  std::string out;
  std::string target;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

void add_out(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "Output directory (relative paths resolve under $POLYADAPT_OUT_ROOT)")->required();
}

void add_corpus(CLI::App* app, Common& c) {
  app->add_option("--corpus", c.corpus, "Corpus directory written by `synth`")->required();
}

void add_config(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config JSON; flags override it");
}

// Evaluation always takes the sequential path; any thread count gives identical output.
void add_threads(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "Worker threads (evaluation runs sequentially)")->check(CLI::PositiveNumber);
}

void add_seed(CLI::App* app, Common& c) { app->add_option("--seed", c.seed, "Random seed"); }

void add_target(CLI::App* app, Common& c) {
  app->add_option("--target", c.target, "Target language (default: the corpus target)");
}

RunManifest start_manifest(const std::string& command, const std::vector<std::string>& argv, const Common& c,
                           const fs::path& out) {
  RunManifest m;
  m.command = command;
  m.argv = argv;
  m.cwd = fs::current_path().string();
  m.seed = c.seed;
  m.out_dir = out.string();
  m.config_path = c.config;
  m.config = c.config.empty() ? Json(nullptr) : read_json(c.config);
  if (!c.config.empty()) m.add_input(c.config);
  if (!c.corpus.empty()) m.add_input(c.corpus);
  fs::create_directories(out);
  return m;
}

ExperimentConfig load_config(const Common& c) {
  return c.config.empty() ? ExperimentConfig{} : experiment_config_from_json(read_json(c.config));
}

std::optional<std::string> target_opt(const Common& c) {
  return c.target.empty() ? std::nullopt : std::optional<std::string>(c.target);
}

std::string mlm_log_csv(const MlmReport& r) {
  std::string s = "step,loss\n";
  for (std::size_t i = 0; i < r.step_losses.size(); ++i) s += std::to_string(i + 1) + ',' + csv_double(r.step_losses[i]) + '\n';
  return s;
}

Split parse_eval_split(const std::string& s) {
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  throw UsageError("--split must be dev or test");
}

const std::vector<Example>& split_of(const LanguageData& d, Split s) { return s == Split::dev ? d.dev : d.test; }

void write_predictions(const fs::path& path, const std::vector<Example>& examples,
                       const std::vector<TagSequence>& predictions) {
  std::vector<Example> out = examples;
  for (std::size_t i = 0; i < out.size(); ++i) out[i].labels = predictions[i];
  write_conll(path, out);
}

Json prf_json(const Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}, {"support", p.support},
          {"tp", p.tp},               {"fp", p.fp},         {"fn", p.fn}};
}

std::vector<TagSequence> gold_tags(const std::vector<Example>& examples) {
  std::vector<TagSequence> out;
  for (const auto& ex : examples) out.push_back(ex.labels);
  return out;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common c;
  std::string spec;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
  SynthSpec spec = synth_spec_from_json(read_json(a.spec));
  if (a.seed) spec.seed = *a.seed;
  Common c = a.c;
  c.config = a.spec;
  c.seed = spec.seed;
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("synth", argv, c, out);
  write_corpus_dir(out, synth_generate(spec));
  write_text_file(out / "spec.json", to_json(spec).dump(2) + "\n");
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- pretrain-encoder

struct PretrainEncoderArgs {
  Common c;
  std::string from;
  std::vector<std::string> languages;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
};

int run_pretrain_encoder(const PretrainEncoderArgs& a, const std::vector<std::string>& argv) {
  ExperimentConfig cfg = load_config(a.c);
  const Corpus corpus = read_corpus_dir(a.c.corpus);
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("pretrain-encoder", argv, a.c, out);
  MlmConfig mc = a.from.empty() ? cfg.pretrain : cfg.continued;
  if (a.steps) mc.steps = *a.steps;
  if (a.lr) mc.lr = *a.lr;
  mc.seed = a.c.seed;
  const LanguageRoles roles = language_roles(corpus, target_opt(a.c));
  MlmReport report;
  Encoder encoder;
  Vocab vocab;
  if (a.from.empty()) {
    const std::vector<std::string> langs = a.languages.empty() ? roles.sources : a.languages;
    vocab = corpus_vocab(corpus, cfg.max_vocab);
    cfg.pretrain = mc;
    encoder = pretrain_base_encoder(corpus, vocab, langs, cfg, a.c.seed, &report);
  } else {
    m.add_input(a.from);
    const std::vector<std::string> langs = a.languages.empty() ? std::vector<std::string>{roles.target} : a.languages;
    encoder = load_encoder(a.from, &vocab);
    encoder = continued_pretrain(std::move(encoder), language_text(corpus, vocab, langs, false), mc, &report);
    encoder.set_trainable(false);
  }
  save_encoder(out / "encoder.ckpt", encoder, vocab);
  write_text_file(out / "mlm_log.csv", mlm_log_csv(report));
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- pretrain-la

struct PretrainLaArgs {
  Common c;
  std::string encoder;
  std::vector<std::string> languages;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::size_t> reduction_factor;
};

int run_pretrain_la(const PretrainLaArgs& a, const std::vector<std::string>& argv) {
  const ExperimentConfig cfg = load_config(a.c);
  const Corpus corpus = read_corpus_dir(a.c.corpus);
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("pretrain-la", argv, a.c, out);
  m.add_input(a.encoder);
  Vocab vocab;
  Encoder encoder = load_encoder(a.encoder, &vocab);
  encoder.set_trainable(false);
  const std::vector<std::string> langs =
      a.languages.empty() ? language_roles(corpus, target_opt(a.c)).sources : a.languages;
  for (std::size_t i = 0; i < langs.size(); ++i) {
    AdapterTrainConfig ac = cfg.adapter;
    if (a.steps) ac.mlm.steps = *a.steps;
    if (a.lr) ac.mlm.lr = *a.lr;
    if (a.reduction_factor) ac.reduction_factor = *a.reduction_factor;
    ac.mlm.seed = mix64(a.c.seed + 1000 * (i + 1));
    const std::vector<std::string> one{langs[i]};
    MlmReport report;
    const LanguageAdapter la =
        train_language_adapter(encoder, langs[i], language_text(corpus, vocab, one, false), ac, &report);
    save_language_adapter(out / ("la_" + langs[i] + ".ckpt"), la);
    write_text_file(out / ("la_" + langs[i] + "_log.csv"), mlm_log_csv(report));
  }
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common c;
  std::string encoder;
  std::string adapters;
  std::string target_adapter;
  std::string mode = "zgul";
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
};

int run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  ExperimentConfig cfg = load_config(a.c);
  if (a.lr) (parse_model_mode(a.mode) == ModelMode::sft ? cfg.sft_lr : cfg.train.lr) = *a.lr;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  const ModelMode mode = parse_model_mode(a.mode);
  const Corpus corpus = read_corpus_dir(a.c.corpus);
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("train", argv, a.c, out);
  m.add_input(a.encoder);
  m.add_input(a.adapters);
  Vocab vocab;
  Encoder encoder = load_encoder(a.encoder, &vocab);
  encoder.set_trainable(false);
  const LanguageRoles roles = language_roles(corpus, target_opt(a.c));
  AdapterBank bank;
  for (const auto& code : roles.sources) bank.add_source(load_language_adapter(fs::path(a.adapters) / ("la_" + code + ".ckpt")));
  if (!a.target_adapter.empty()) {
    m.add_input(a.target_adapter);
    bank.set_target(load_language_adapter(a.target_adapter));
  }
  const LabelMap labels = corpus_labels(corpus, roles.sources);
  const TrainedModel t = train_mode(mode, encoder, bank, corpus, vocab, labels, roles.sources, cfg, a.c.seed);
  save_checkpoint(out / "model.ckpt", t.model);
  write_text_file(out / "train_log.csv", format_train_log_csv(t.result.log));
  const Json summary{{"mode", to_string(mode)},
                     {"best_epoch", t.result.best_epoch},
                     {"dev_f1", t.result.dev_f1},
                     {"sources", roles.sources}};
  write_text_file(out / "metrics.json", summary.dump(2) + "\n");
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EmFlags {
  std::size_t steps = 1;
  double lr = 0.05;
  std::string init;
  std::string tie;
};

void add_em_flags(CLI::App* app, EmFlags& f) {
  app->add_option("--em-T", f.steps, "Entropy-minimization steps");
  app->add_option("--em-lr", f.lr, "Entropy-minimization step size");
  app->add_option("--em-init", f.init, "learned or uniform");
  app->add_option("--em-tie", f.tie, "token_untied or layer_tied");
}

EmConfig em_config(const EmFlags& f, EmPath path) {
  EmConfig c;
  c.path = path;
  if (path == EmPath::ensemble) {
    c.init = EmInit::uniform;
    c.tie = EmTie::layer_tied;
  }
  c.steps = f.steps;
  c.lr = f.lr;
  if (!f.init.empty()) c.init = parse_em_init(f.init);
  if (!f.tie.empty()) c.tie = parse_em_tie(f.tie);
  return c;
}

struct EvalArgs {
  Common c;
  std::string model;
  std::string strategy = "zgul";
  std::string split = "test";
  bool trace = false;
  EmFlags em;
};

struct EvalSetup {
  Corpus corpus;
  TaskModel model;
  LanguageRoles roles;
  StrategyContext ctx;
};

EvalSetup load_eval(const Common& c, const std::string& model_path) {
  const ExperimentConfig cfg = load_config(c);
  EvalSetup s{read_corpus_dir(c.corpus), load_checkpoint(model_path), {}, {}};
  s.roles = language_roles(s.corpus, target_opt(c));
  s.ctx.target = s.roles.target;
  s.ctx.first_source = s.roles.sources.front();
  s.ctx.related_source = relatedness_of(s.corpus, cfg.relatedness).most_related(s.roles.target, s.roles.sources);
  return s;
}

void write_eval_outputs(const fs::path& out, const EvalSetup& s, const std::vector<Example>& examples,
                        const StrategyEval& ev, Json extra) {
  const auto golds = gold_tags(examples);
  write_predictions(out / "predictions.conll", examples, ev.predictions);
  write_text_file(out / "classwise.csv",
                  format_classwise_csv(classwise_f1(ev.predictions, golds, s.model.labels.scheme())));
  extra["strategy"] = to_string(ev.strategy);
  extra["target"] = s.roles.target;
  extra["scores"] = prf_json(ev.scores);
  write_text_file(out / "metrics.json", extra.dump(2) + "\n");
}

int run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  const Strategy strategy = parse_strategy(a.strategy);
  const Split split = parse_eval_split(a.split);
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("eval", argv, a.c, out);
  m.add_input(a.model);
  EvalSetup s = load_eval(a.c, a.model);
  s.ctx.em = em_config(a.em, strategy == Strategy::emea ? EmPath::ensemble : EmPath::zgul);
  const auto& examples = split_of(s.corpus.language(s.roles.target), split);
  const auto encoded = encode_examples(s.model.vocab, s.model.labels, examples);
  const StrategyEval ev = evaluate_strategy(s.model, strategy, encoded, s.ctx);
  Json extra{{"split", std::string(to_string(split))}};
  if (strategy == Strategy::em || strategy == Strategy::emea) extra["em"] = to_json(s.ctx.em);
  if (strategy == Strategy::madx_en) extra["adapter"] = s.ctx.first_source;
  if (strategy == Strategy::madx_rel) extra["adapter"] = s.ctx.related_source;
  write_eval_outputs(out, s, examples, ev, extra);
  if (a.trace) write_trace_csv(out / "attention_trace.csv", collect_traces(s.model, encoded, s.roles.target));
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- em-eval

struct EmEvalArgs {
  Common c;
  std::string model;
  bool grid = false;
  std::string dev_mode = "related";
  std::vector<std::size_t> grid_steps;
  std::vector<double> grid_lrs;
  EmFlags em;
};

int run_em_eval(const EmEvalArgs& a, const std::vector<std::string>& argv) {
  if (a.dev_mode != "related" && a.dev_mode != "target") throw UsageError("--dev-mode must be related or target");
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("em-eval", argv, a.c, out);
  m.add_input(a.model);
  const ExperimentConfig cfg = load_config(a.c);
  EvalSetup s = load_eval(a.c, a.model);
  const bool ensemble = s.model.config.mode == ModelMode::madx_multi;
  const EmPath path = ensemble ? EmPath::ensemble : EmPath::zgul;
  const Strategy strategy = ensemble ? Strategy::emea : Strategy::em;
  const std::string dev_lang = a.dev_mode == "related" ? s.ctx.related_source : s.roles.target;
  const auto dev = encode_examples(s.model.vocab, s.model.labels, s.corpus.language(dev_lang).dev);
  EmConfig em = em_config(a.em, path);
  Json extra{{"split", "test"}, {"dev_language", dev_lang}, {"dev_mode", a.dev_mode}};
  if (a.grid) {
    EmGrid grid = cfg.em_grid;
    if (!a.grid_steps.empty()) grid.steps = a.grid_steps;
    if (!a.grid_lrs.empty()) grid.lrs = a.grid_lrs;
    const EmGridResult r = em_grid_search(s.model, dev, dev_lang, grid, em);
    em.steps = r.best_steps;
    em.lr = r.best_lr;
    std::string csv = "steps,lr,micro_f1\n";
    for (const auto& cell : r.cells) csv += std::to_string(cell.steps) + ',' + csv_double(cell.lr) + ',' + csv_double(cell.f1) + '\n';
    write_text_file(out / "grid.csv", csv);
    extra["dev_f1"] = r.best_f1;
  }
  s.ctx.em = em;
  extra["em"] = to_json(em);
  const auto& examples = s.corpus.language(s.roles.target).test;
  const auto encoded = encode_examples(s.model.vocab, s.model.labels, examples);
  const StrategyEval ev = evaluate_strategy(s.model, strategy, encoded, s.ctx);
  write_eval_outputs(out, s, examples, ev, extra);
  std::vector<EmResult> trajectories;
  for (const auto& ex : encoded) trajectories.push_back(em_tune(s.model, ex.ids, s.roles.target, em));
  write_em_trajectory_csv(out / "trajectory.csv", trajectories);
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- few-shot

struct FewShotArgs {
  Common c;
  std::string model;
  std::vector<std::size_t> bins{10, 30, 70, 100};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  FewShotConfig fs;
};

int run_few_shot(const FewShotArgs& a, const std::vector<std::string>& argv) {
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("few-shot", argv, a.c, out);
  m.add_input(a.model);
  EvalSetup s = load_eval(a.c, a.model);
  const LanguageData& t = s.corpus.language(s.roles.target);
  const auto train = encode_examples(s.model.vocab, s.model.labels, t.train);
  const auto test = encode_examples(s.model.vocab, s.model.labels, t.test);
  const auto rows = few_shot_curve(s.model, train, test, s.roles.target, a.bins, a.seeds, a.fs);
  write_text_file(out / "few_shot.csv", format_few_shot_csv(rows));
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  Common c;
  std::string model;
  std::size_t shuffles = 20;
  std::string pred_a;
  std::string pred_b;
};

int run_analyze(const AnalyzeArgs& a, const std::vector<std::string>& argv) {
  if (a.model.empty() && a.pred_a.empty()) throw UsageError("analyze needs --model and/or --pred-a/--pred-b");
  if (a.pred_a.empty() != a.pred_b.empty()) throw UsageError("--pred-a and --pred-b go together");
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("analyze", argv, a.c, out);
  const ExperimentConfig cfg = load_config(a.c);
  const Corpus corpus = read_corpus_dir(a.c.corpus);
  const LanguageRoles roles = language_roles(corpus, target_opt(a.c));
  const auto& test = corpus.language(roles.target).test;
  if (!a.model.empty()) {
    m.add_input(a.model);
    const TaskModel model = load_checkpoint(a.model);
    const RelatednessMatrix& rel = relatedness_of(corpus, cfg.relatedness);
    const std::vector<TargetSet> sets{{roles.target, encode_examples(model.vocab, model.labels, test)}};
    const auto rows = correlation_report(model, sets, rel);
    write_correlation_report(out, rows);
    std::string csv = "target,network,shuffle,pearson_r\n";
    for (const auto& row : rows) {
      const auto rs = shuffled_correlations(row.weights, row.relatedness, a.shuffles, a.c.seed);
      for (std::size_t i = 0; i < rs.size(); ++i)
        csv += row.target + ',' + to_string(row.network) + ',' + std::to_string(i) + ',' + csv_double(rs[i]) + '\n';
    }
    write_text_file(out / "shuffle_baseline.csv", csv);
  }
  if (!a.pred_a.empty()) {
    m.add_input(a.pred_a);
    m.add_input(a.pred_b);
    const auto pa = read_conll(a.pred_a, ConllFormat::two_col, roles.target, Split::test);
    const auto pb = read_conll(a.pred_b, ConllFormat::two_col, roles.target, Split::test);
    const McNemar r = mcnemar(gold_tags(pa), gold_tags(pb), gold_tags(test));
    const Json j{{"b", r.b}, {"c", r.c}, {"statistic", r.statistic}, {"p", r.p}, {"unit", "token"}};
    write_text_file(out / "mcnemar.json", j.dump(2) + "\n");
  }
  cli::write_manifest(m);
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  Common c;
  std::vector<std::string> inputs;
};

int run_report(const ReportArgs& a, const std::vector<std::string>& argv) {
  const fs::path out = resolve_out(a.c.out);
  RunManifest m = start_manifest("report", argv, a.c, out);
  std::string rows = "run,strategy,target,precision,recall,f1\n";
  std::map<std::string, std::pair<double, std::size_t>> by_strategy;
  for (const auto& dir : a.inputs) {
    const fs::path file = fs::path(dir) / "metrics.json";
    m.add_input(file);
    const Json j = read_json(file);
    if (!j.contains("scores")) throw DataError(file.string() + ": no evaluation scores");
    const std::string strategy = j.at("strategy").get<std::string>();
    const Json& s = j.at("scores");
    rows += dir + ',' + strategy + ',' + j.at("target").get<std::string>() + ',' +
            csv_double(s.at("precision").get<double>()) + ',' + csv_double(s.at("recall").get<double>()) + ',' +
            csv_double(s.at("f1").get<double>()) + '\n';
    auto& acc = by_strategy[strategy];
    acc.first += s.at("f1").get<double>();
    acc.second += 1;
  }
  std::string means = "strategy,runs,mean_f1\n";
  for (const auto& [k, v] : by_strategy)
    means += k + ',' + std::to_string(v.second) + ',' + csv_double(v.first / static_cast<double>(v.second)) + '\n';
  write_text_file(out / "summary.csv", rows);
  write_text_file(out / "mean_by_strategy.csv", means);
  cli::write_manifest(m);
  return 0;
}

int dispatch(const std::vector<std::string>& argv);

// ---------------------------------------------------------------- replay

struct ReplayArgs {
  std::string manifest;
  std::string out;
};

int run_replay(const ReplayArgs& a) {
  const RunManifest m = cli::read_manifest(a.manifest);
  if (m.command == "replay") throw DataError("cannot replay a replay manifest");
  const fs::path out = a.out.empty() ? fs::path(m.out_dir) : fs::absolute(resolve_out(a.out));
  std::vector<std::string> argv;
  for (std::size_t i = 0; i < m.argv.size(); ++i) {
    if (m.argv[i] == "--out" && i + 1 < m.argv.size()) {
      ++i;
      continue;
    }
    if (m.argv[i].rfind("--out=", 0) == 0) continue;
    argv.push_back(m.argv[i]);
  }
  argv.push_back("--out");
  argv.push_back(out.string());
  const fs::path here = fs::current_path();
  fs::current_path(m.cwd);
  const int code = dispatch(argv);
  fs::current_path(here);
  if (code != 0) return code;
  const auto outputs = cli::hash_outputs(out);
  std::size_t mismatches = 0;
  for (const auto& [file, hash] : m.outputs) {
    const auto it = outputs.find(file);
    if (it == outputs.end() || it->second != hash) {
      std::cerr << "replay: " << file << " differs\n";
      ++mismatches;
    }
  }
  if (mismatches > 0 || outputs.size() != m.outputs.size()) {
    std::cerr << "replay: outputs differ from the manifest\n";
    return 2;
  }
  std::cout << "replay: " << outputs.size() << " files identical\n";
  return 0;
}

// ---------------------------------------------------------------- dispatch

int dispatch(const std::vector<std::string>& argv) {
  CLI::App app{"Multi-source language adapter ensembling for unseen languages"};
  app.name("polyadapt");
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multilingual corpus");
  s->add_option("--spec", synth.spec, "Synthetic spec JSON")->required();
  s->add_option("--seed", synth.seed, "Override the spec seed");
  add_out(s, synth.c);

  PretrainEncoderArgs pe;
  auto* p = app.add_subcommand("pretrain-encoder", "MLM-pretrain an encoder, or continue pretraining one");
  add_corpus(p, pe.c);
  add_config(p, pe.c);
  add_seed(p, pe.c);
  add_target(p, pe.c);
  add_out(p, pe.c);
  p->add_option("--from", pe.from, "Encoder checkpoint to continue from");
  p->add_option("--languages", pe.languages, "Languages whose text is used (default: sources, or the target with --from)");
  p->add_option("--steps", pe.steps, "MLM steps");
  p->add_option("--lr", pe.lr, "MLM learning rate");

  PretrainLaArgs pl;
  auto* l = app.add_subcommand("pretrain-la", "Train language adapters with MLM on a frozen encoder");
  add_corpus(l, pl.c);
  add_config(l, pl.c);
  add_seed(l, pl.c);
  add_target(l, pl.c);
  add_out(l, pl.c);
  l->add_option("--encoder", pl.encoder, "Encoder checkpoint")->required();
  l->add_option("--language", pl.languages, "Adapter languages (default: sources)");
  l->add_option("--steps", pl.steps, "MLM steps");
  l->add_option("--lr", pl.lr, "MLM learning rate");
  l->add_option("--reduction-factor", pl.reduction_factor, "Hidden width over bottleneck width");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a task model on the source languages");
  add_corpus(t, tr.c);
  add_config(t, tr.c);
  add_seed(t, tr.c);
  add_target(t, tr.c);
  add_out(t, tr.c);
  t->add_option("--encoder", tr.encoder, "Encoder checkpoint")->required();
  t->add_option("--adapters", tr.adapters, "Directory with la_<code>.ckpt per source")->required();
  t->add_option("--target-adapter", tr.target_adapter, "Target language adapter for the extra bank slot");
  t->add_option("--mode", tr.mode, "zgul, sft or madx_multi")->check(CLI::IsMember({"zgul", "sft", "madx_multi"}));
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--batch-size", tr.batch_size, "Sentences per batch");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a strategy on the target language");
  add_corpus(e, ev.c);
  add_config(e, ev.c);
  add_target(e, ev.c);
  add_out(e, ev.c);
  e->add_option("--model", ev.model, "Task model checkpoint")->required();
  e->add_option("--strategy", ev.strategy, "zgul, em, madx-en, madx-rel, uniform or emea")
      ->check(CLI::IsMember({"zgul", "em", "madx-en", "madx-rel", "uniform", "emea"}));
  e->add_option("--split", ev.split, "dev or test")->check(CLI::IsMember({"dev", "test"}));
  e->add_flag("--trace", ev.trace, "Also write per-token attention weights");
  add_threads(e, ev.c);
  add_em_flags(e, ev.em);

  EmEvalArgs em;
  auto* x = app.add_subcommand("em-eval", "Tune entropy minimization on a dev set and evaluate on the target");
  add_corpus(x, em.c);
  add_config(x, em.c);
  add_target(x, em.c);
  add_out(x, em.c);
  x->add_option("--model", em.model, "Task model checkpoint")->required();
  x->add_flag("--em-grid", em.grid, "Grid-search (T, lr) on the dev set");
  x->add_option("--dev-mode", em.dev_mode, "related or target")->check(CLI::IsMember({"related", "target"}));
  x->add_option("--grid-steps", em.grid_steps, "Grid values of T");
  x->add_option("--grid-lrs", em.grid_lrs, "Grid values of lr");
  add_threads(x, em.c);
  add_em_flags(x, em.em);

  FewShotArgs fsa;
  auto* f = app.add_subcommand("few-shot", "Fine-tune on a few target examples");
  add_corpus(f, fsa.c);
  add_config(f, fsa.c);
  add_target(f, fsa.c);
  add_out(f, fsa.c);
  f->add_option("--model", fsa.model, "Task model checkpoint")->required();
  f->add_option("--bins", fsa.bins, "Numbers of target examples");
  f->add_option("--seeds", fsa.seeds, "Sampling seeds");
  f->add_option("--lr", fsa.fs.lr, "Learning rate");
  f->add_option("--epochs", fsa.fs.epochs, "Epochs");
  f->add_option("--batch-size", fsa.fs.batch_size, "Sentences per batch");

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "Attention-relatedness correlation and McNemar test");
  add_corpus(z, an.c);
  add_config(z, an.c);
  add_seed(z, an.c);
  add_target(z, an.c);
  add_out(z, an.c);
  z->add_option("--model", an.model, "ZGUL checkpoint for the correlation report");
  z->add_option("--shuffles", an.shuffles, "Relatedness permutations for the baseline");
  z->add_option("--pred-a", an.pred_a, "Predictions of system A (from eval)");
  z->add_option("--pred-b", an.pred_b, "Predictions of system B (from eval)");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Aggregate eval metrics into CSV tables");
  r->add_option("--inputs", rp.inputs, "Eval output directories")->required();
  add_out(r, rp.c);

  ReplayArgs rr;
  auto* y = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
  y->add_option("manifest", rr.manifest, "manifest.json of an earlier run")->required();
  y->add_option("--out", rr.out, "Output directory (default: the original one)");

  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    const auto parsed = app.get_subcommands();
    std::cerr << ex.what() << "\n\n" << (parsed.empty() ? app.help() : parsed.front()->help());
    return 1;
  }

  try {
    if (s->parsed()) return run_synth(synth, argv);
    if (p->parsed()) return run_pretrain_encoder(pe, argv);
    if (l->parsed()) return run_pretrain_la(pl, argv);
    if (t->parsed()) return run_train(tr, argv);
    if (e->parsed()) return run_eval(ev, argv);
    if (x->parsed()) return run_em_eval(em, argv);
    if (f->parsed()) return run_few_shot(fsa, argv);
    if (z->parsed()) return run_analyze(an, argv);
    if (r->parsed()) return run_report(rp, argv);
    if (y->parsed()) return run_replay(rr);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return 1;
  } catch (const DataError& ex) {
    std::cerr << "data error: " << ex.what() << "\n";
    return 2;
  } catch (const Json::exception& ex) {
    std::cerr << "data error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) { return dispatch(std::vector<std::string>(argv + 1, argv + argc)); }
