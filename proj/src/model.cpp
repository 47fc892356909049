#include "polyadapt/model.hpp"

#include <cmath>
#include <sstream>

#include "polyadapt/error.hpp"
#include "polyadapt/init.hpp"

namespace polyadapt {

namespace {

constexpr double kSimplexTolerance = 1e-9;

Tensor softmax_value(const Tensor& logits) {
  Tensor out = Tensor::zeros(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto p = softmax_stable(logits.row_span(i));
    std::copy(p.begin(), p.end(), out.row_span(i).begin());
  }
  return out;
}

std::vector<const LanguageAdapter*> require_bank(const TaskModel& model) {
  auto members = model.bank.members();
  if (members.empty()) throw Error("empty adapter bank");
  return members;
}

Var classify(Tape& tape, const TaskModel& model, Var top) {
  return ad::linear(top, tape.param(model.cls_w), tape.param(model.cls_b));
}

std::vector<Var> adapter_outputs(Tape& tape, std::span<const LanguageAdapter* const> members, Var f,
                                 std::size_t layer) {
  std::vector<Var> out;
  out.reserve(members.size());
  for (const auto* m : members) out.push_back(m->adapter.forward(tape, f, layer));
  return out;
}

void check_simplex(std::span<const double> w, std::size_t n) {
  if (w.size() != n) throw Error("ensemble weights have " + std::to_string(w.size()) + " entries for " +
                                 std::to_string(n) + " adapters");
  double s = 0.0;
  for (double x : w) {
    if (!std::isfinite(x) || x < -kSimplexTolerance) throw Error("ensemble weights are not on the simplex");
    s += x;
  }
  if (std::abs(s - 1.0) > kSimplexTolerance) throw Error("ensemble weights are not on the simplex");
}

}  // namespace

std::string to_string(ModelMode m) {
  switch (m) {
    case ModelMode::zgul: return "zgul";
    case ModelMode::sft: return "sft";
    case ModelMode::madx_multi: return "madx_multi";
  }
  return "?";
}

ModelMode parse_model_mode(const std::string& s) {
  if (s == "zgul") return ModelMode::zgul;
  if (s == "sft") return ModelMode::sft;
  if (s == "madx_multi") return ModelMode::madx_multi;
  throw Error("unknown model mode '" + s + "'");
}

std::vector<Parameter*> TaskModel::parameters() {
  std::vector<Parameter*> out = encoder.parameters();
  for (Parameter* p : bank.parameters()) out.push_back(p);
  for (auto& f : fusion)
    for (Parameter* p : {&f.wq, &f.wk, &f.wv, &f.wl, &f.comb_w, &f.comb_b}) out.push_back(p);
  out.push_back(&langvec.w);
  out.push_back(&langvec.b);
  for (Parameter* p : task_adapter.parameters()) out.push_back(p);
  out.push_back(&cls_w);
  out.push_back(&cls_b);
  return out;
}

std::vector<const Parameter*> TaskModel::parameters() const {
  auto mut = const_cast<TaskModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> TaskModel::configure_trainable() {
  const bool zgul = config.mode == ModelMode::zgul;
  encoder.set_trainable(config.mode == ModelMode::sft || !config.freeze_encoder);
  bank.set_trainable(false);
  for (auto& f : fusion)
    for (Parameter* p : {&f.wq, &f.wk, &f.wv, &f.wl, &f.comb_w, &f.comb_b}) p->trainable = zgul;
  langvec.w.trainable = zgul;
  langvec.b.trainable = zgul;
  task_adapter.set_trainable(config.mode != ModelMode::sft);
  cls_w.trainable = true;
  cls_b.trainable = true;
  return trainable_parameters();
}

std::vector<Parameter*> TaskModel::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

const LanguageProfile& TaskModel::profile(const std::string& code) const {
  const auto it = profiles.find(code);
  if (it == profiles.end()) throw DataError("no language profile for '" + code + "'");
  return it->second;
}

TaskModel make_task_model(const ModelConfig& config, Encoder encoder, AdapterBank bank, ProfileMap profiles,
                          Vocab vocab, LabelMap labels) {
  if (labels.size() == 0) throw Error("label map is empty");
  const EncoderConfig& ec = encoder.config();
  for (const auto* m : bank.members()) {
    if (m->adapter.hidden() != ec.hidden || m->adapter.n_layers() != ec.n_layers) {
      throw Error("language adapter '" + m->code + "' does not match the encoder's (hidden, layers)");
    }
  }
  if (config.mode != ModelMode::sft && bank.empty()) throw Error("empty adapter bank");
  if (vocab.size() > ec.vocab_size) throw Error("vocabulary larger than the encoder's vocab_size");
  TaskModel m;
  m.config = config;
  m.config.encoder = ec;
  const Rng root = Rng(config.seed).fork("head");
  for (std::size_t l = 0; l < ec.n_layers; ++l) m.fusion.push_back(make_fusion_layer(l, ec.hidden, config.lang_dim, root));
  m.langvec = make_langvec_mlp(config.feature_dim, config.lang_dim, root);
  m.task_adapter = BottleneckAdapter("ta", ec.hidden, ec.n_layers, config.reduction_factor, root.fork("ta"));
  m.cls_w = normal_param("classifier.W", ec.hidden, labels.size(), 1.0 / std::sqrt(static_cast<double>(ec.hidden)),
                         root);
  m.cls_b = const_param("classifier.b", 1, labels.size(), 0.0);
  m.encoder = std::move(encoder);
  m.bank = std::move(bank);
  m.profiles = std::move(profiles);
  m.vocab = std::move(vocab);
  m.labels = std::move(labels);
  m.configure_trainable();
  return m;
}

Var zgul_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, const std::string& language,
                const ZgulPassOptions& options) {
  const auto members = require_bank(model);
  const std::size_t n = members.size();
  if (options.override_logits && options.override_logits->size() != model.n_layers()) {
    throw Error("attention overrides must cover every layer");
  }
  if (options.record_logits) options.record_logits->clear();

  Var lf_in, lf_src;
  bool uniform_langvec = false;
  if (!options.override_logits) {
    const auto it = model.profiles.find(language);
    if (it == model.profiles.end()) {
      if (!model.config.uniform_langvec_fallback) throw DataError("no language profile for '" + language + "'");
      uniform_langvec = true;
    } else {
      lf_in = tape.constant(Tensor::row(it->second.features));
      Tensor src = Tensor::zeros(n, model.config.feature_dim);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& feats = model.profile(members[i]->code).features;
        if (feats.size() != src.cols()) throw DataError("profile width mismatch for '" + members[i]->code + "'");
        std::copy(feats.begin(), feats.end(), src.row_span(i).begin());
      }
      lf_src = tape.constant(std::move(src));
    }
  }

  const LayerHook hook = [&](Tape& t, std::size_t layer, Var f) {
    const FusionLayerParams& p = model.fusion[layer];
    const std::vector<Var> values = adapter_outputs(t, members, f, layer);
    ZgulLayerLogits logits;
    if (options.override_logits) {
      logits = (*options.override_logits)[layer];
    } else {
      logits.fusion = fusion_logits(f, values, p);
      logits.langvec = uniform_langvec ? t.constant(Tensor::zeros(1, n)) : langvec_logits(lf_in, lf_src, model.langvec, p);
    }
    if (options.record_logits) options.record_logits->push_back(logits);
    const Var wv = t.param(p.wv);
    std::vector<Var> projected;
    projected.reserve(n);
    for (const Var& v : values) projected.push_back(ad::matmul(v, wv));
    const Var o_f = mix_values(projected, ad::softmax_rows(logits.fusion));
    const Var o_l = mix_values(projected, ad::softmax_rows(logits.langvec));
    return combine_and_task(o_f, o_l, p, model.task_adapter, layer);
  };
  return classify(tape, model, model.encoder.encode(tape, ids, hook).top);
}

Var madx_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, const std::string& la_code) {
  const LanguageAdapter& la = model.bank.find(la_code);
  const LayerHook hook = [&](Tape& t, std::size_t layer, Var f) {
    return model.task_adapter.forward(t, la.adapter.forward(t, f, layer), layer);
  };
  return classify(tape, model, model.encoder.encode(tape, ids, hook).top);
}

Var ensemble_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, std::span<const Var> weights) {
  const auto members = require_bank(model);
  if (weights.size() != 1 && weights.size() != model.n_layers()) {
    throw Error("ensemble weights must be global or given per layer");
  }
  const LayerHook hook = [&](Tape& t, std::size_t layer, Var f) {
    const std::vector<Var> values = adapter_outputs(t, members, f, layer);
    const Var mixed = mix_values(values, weights.size() == 1 ? weights[0] : weights[layer]);
    return model.task_adapter.forward(t, mixed, layer);
  };
  return classify(tape, model, model.encoder.encode(tape, ids, hook).top);
}

Var sft_logits(Tape& tape, const TaskModel& model, std::span<const int> ids) {
  return classify(tape, model, model.encoder.encode(tape, ids).top);
}

Tensor zgul_forward(const TaskModel& model, std::span<const int> ids, const std::string& language,
                    AttentionTrace* trace) {
  Tape tape;
  std::vector<ZgulLayerLogits> recorded;
  ZgulPassOptions options;
  if (trace) options.record_logits = &recorded;
  const Var out = zgul_logits(tape, model, ids, language, options);
  if (trace) {
    trace->sources = model.bank.codes();
    trace->fusion.clear();
    trace->langvec.clear();
    for (const auto& r : recorded) {
      trace->fusion.push_back(softmax_value(r.fusion.value()));
      trace->langvec.push_back(softmax_value(r.langvec.value()));
    }
  }
  return out.value();
}

Tensor madx_forward(const TaskModel& model, std::span<const int> ids, const std::string& la_code) {
  Tape tape;
  return madx_logits(tape, model, ids, la_code).value();
}

Tensor ensemble_forward(const TaskModel& model, std::span<const int> ids,
                        const std::vector<std::vector<double>>& weights) {
  const std::size_t n = require_bank(model).size();
  Tape tape;
  std::vector<Var> vars;
  for (const auto& w : weights) {
    check_simplex(w, n);
    vars.push_back(tape.constant(Tensor::row(w)));
  }
  return ensemble_logits(tape, model, ids, vars).value();
}

Tensor sft_forward(const TaskModel& model, std::span<const int> ids) {
  Tape tape;
  return sft_logits(tape, model, ids).value();
}

Var task_logits(Tape& tape, const TaskModel& model, std::span<const int> ids, const std::string& language) {
  switch (model.config.mode) {
    case ModelMode::zgul: return zgul_logits(tape, model, ids, language);
    case ModelMode::sft: return sft_logits(tape, model, ids);
    case ModelMode::madx_multi: return madx_logits(tape, model, ids, language);
  }
  throw Error("unknown model mode");
}

Tensor task_forward(const TaskModel& model, std::span<const int> ids, const std::string& language) {
  Tape tape;
  return task_logits(tape, model, ids, language).value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row_span(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::string format_trace_csv(std::span<const AttentionTrace> traces) {
  std::ostringstream os;
  os.precision(17);
  os << "sentence_id,layer,token_idx,network,source_lang,weight\n";
  for (std::size_t s = 0; s < traces.size(); ++s) {
    const AttentionTrace& tr = traces[s];
    for (std::size_t l = 0; l < tr.fusion.size(); ++l) {
      const Tensor& f = tr.fusion[l];
      const Tensor& g = tr.langvec[l];
      for (std::size_t t = 0; t < f.rows(); ++t) {
        for (std::size_t i = 0; i < tr.sources.size(); ++i)
          os << s << ',' << l << ',' << t << ",F," << tr.sources[i] << ',' << f.at(t, i) << '\n';
        const std::size_t gr = g.rows() == 1 ? 0 : t;
        for (std::size_t i = 0; i < tr.sources.size(); ++i)
          os << s << ',' << l << ',' << t << ",L," << tr.sources[i] << ',' << g.at(gr, i) << '\n';
      }
    }
  }
  return os.str();
}

void write_trace_csv(const std::filesystem::path& path, std::span<const AttentionTrace> traces) {
  write_text_file(path, format_trace_csv(traces));
}

}  // namespace polyadapt
