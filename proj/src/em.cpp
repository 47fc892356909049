#include "polyadapt/em.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "polyadapt/error.hpp"
#include "polyadapt/metrics.hpp"

namespace polyadapt {

namespace {

Tensor column_means(const Tensor& t) {
  Tensor out = Tensor::zeros(1, t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) out[j] += t.at(i, j);
  for (double& v : out.data()) v /= static_cast<double>(t.rows());
  return out;
}

Tensor repeat_row(const Tensor& row, std::size_t m) {
  Tensor out = Tensor::zeros(m, row.cols());
  for (std::size_t i = 0; i < m; ++i) std::copy(row.data().begin(), row.data().end(), out.row_span(i).begin());
  return out;
}

void sgd_update(std::vector<Tensor>& state, const std::vector<Tensor>& grad, double lr) {
  for (std::size_t l = 0; l < state.size(); ++l)
    for (std::size_t i = 0; i < state[l].size(); ++i) state[l][i] -= lr * grad[l][i];
}

}  // namespace

std::string to_string(EmInit v) { return v == EmInit::learned ? "learned" : "uniform"; }
std::string to_string(EmTie v) { return v == EmTie::token_untied ? "token_untied" : "layer_tied"; }

EmInit parse_em_init(const std::string& s) {
  if (s == "learned") return EmInit::learned;
  if (s == "uniform") return EmInit::uniform;
  throw Error("unknown EM init '" + s + "'");
}

EmTie parse_em_tie(const std::string& s) {
  if (s == "token_untied") return EmTie::token_untied;
  if (s == "layer_tied") return EmTie::layer_tied;
  throw Error("unknown EM tie mode '" + s + "'");
}

EmState initial_em_state(const TaskModel& model, std::span<const int> ids, const std::string& language,
                         const EmConfig& config) {
  if (ids.empty()) throw Error("empty sentence");
  const std::size_t n = model.bank.size();
  if (n == 0) throw Error("empty adapter bank");
  const std::size_t rows = config.tie == EmTie::layer_tied ? 1 : ids.size();
  EmState s;
  if (config.path == EmPath::ensemble) {
    if (config.init == EmInit::learned) throw Error("learned EM init requires the zgul path");
    s.fusion.assign(model.n_layers(), Tensor::zeros(rows, n));
    return s;
  }
  if (config.init == EmInit::uniform) {
    s.fusion.assign(model.n_layers(), Tensor::zeros(rows, n));
    s.langvec.assign(model.n_layers(), Tensor::zeros(rows, n));
    return s;
  }
  Tape tape;
  std::vector<ZgulLayerLogits> recorded;
  ZgulPassOptions options;
  options.record_logits = &recorded;
  zgul_logits(tape, model, ids, language, options);
  for (const auto& r : recorded) {
    const Tensor& f = r.fusion.value();
    const Tensor& g = r.langvec.value();
    if (config.tie == EmTie::layer_tied) {
      s.fusion.push_back(column_means(f));
      s.langvec.push_back(g);
    } else {
      s.fusion.push_back(f);
      s.langvec.push_back(repeat_row(g, ids.size()));
    }
  }
  return s;
}

EntropyEval sentence_entropy(const TaskModel& model, std::span<const int> ids, const std::string& language,
                             const EmState& state, const EmConfig& config, bool with_grad) {
  if (ids.empty()) throw Error("empty sentence");
  if (state.fusion.size() != model.n_layers() ||
      (config.path == EmPath::zgul && state.langvec.size() != model.n_layers())) {
    throw Error("EM state does not match the model's layer count");
  }
  Tape tape;
  auto make = [&](const Tensor& t) { return with_grad ? tape.leaf(t) : tape.constant(t); };
  std::vector<Var> f_vars, l_vars;
  for (const auto& t : state.fusion) f_vars.push_back(make(t));
  for (const auto& t : state.langvec) l_vars.push_back(make(t));

  Var logits;
  if (config.path == EmPath::zgul) {
    std::vector<ZgulLayerLogits> overrides;
    for (std::size_t l = 0; l < f_vars.size(); ++l) overrides.push_back({f_vars[l], l_vars[l]});
    ZgulPassOptions options;
    options.override_logits = &overrides;
    logits = zgul_logits(tape, model, ids, language, options);
  } else {
    std::vector<Var> weights;
    for (const Var& v : f_vars) weights.push_back(ad::softmax_rows(v));
    logits = ensemble_logits(tape, model, ids, weights);
  }
  const Var h = ad::mean_row_entropy(logits);
  EntropyEval out;
  out.entropy = h.value().item();
  out.logits = logits.value();
  if (with_grad) {
    tape.backward(h);
    for (const Var& v : f_vars) out.grad.fusion.push_back(tape.grad(v));
    for (const Var& v : l_vars) out.grad.langvec.push_back(tape.grad(v));
  }
  return out;
}

EmResult em_tune(const TaskModel& model, std::span<const int> ids, const std::string& language,
                 const EmConfig& config) {
  EmResult r;
  r.state = initial_em_state(model, ids, language, config);
  for (std::size_t t = 0; t < config.steps; ++t) {
    const EntropyEval e = sentence_entropy(model, ids, language, r.state, config, true);
    if (!std::isfinite(e.entropy)) {
      throw Error("non-finite entropy at EM step " + std::to_string(t) + " (lr " + std::to_string(config.lr) + ")");
    }
    r.entropy.push_back(e.entropy);
    r.predictions.push_back(argmax_rows(e.logits));
    sgd_update(r.state.fusion, e.grad.fusion, config.lr);
    sgd_update(r.state.langvec, e.grad.langvec, config.lr);
  }
  const EntropyEval last = sentence_entropy(model, ids, language, r.state, config, false);
  if (!std::isfinite(last.entropy)) throw Error("non-finite entropy after EM");
  r.entropy.push_back(last.entropy);
  r.predictions.push_back(argmax_rows(last.logits));
  r.prediction = r.predictions.back();
  return r;
}

EmGridResult em_grid_search(const TaskModel& model, std::span<const EncodedExample> dev, const std::string& language,
                            const EmGrid& grid, const EmConfig& base) {
  if (grid.steps.empty() || grid.lrs.empty()) throw Error("empty EM grid");
  if (dev.empty()) throw Error("empty dev set");
  std::vector<std::size_t> steps = grid.steps;
  std::vector<double> lrs = grid.lrs;
  std::sort(steps.begin(), steps.end());
  std::sort(lrs.begin(), lrs.end());

  std::vector<TagSequence> golds;
  for (const auto& ex : dev) golds.push_back(model.labels.decode(ex.labels));

  // One run of max(T) steps per lr yields the prediction after every T.
  std::vector<std::vector<double>> f1(steps.size(), std::vector<double>(lrs.size()));
  for (std::size_t j = 0; j < lrs.size(); ++j) {
    EmConfig c = base;
    c.steps = steps.back();
    c.lr = lrs[j];
    std::vector<std::vector<TagSequence>> preds(steps.size());
    for (const auto& ex : dev) {
      const EmResult r = em_tune(model, ex.ids, language, c);
      for (std::size_t i = 0; i < steps.size(); ++i) preds[i].push_back(model.labels.decode(r.predictions[steps[i]]));
    }
    for (std::size_t i = 0; i < steps.size(); ++i) f1[i][j] = micro_f1(preds[i], golds, model.labels.scheme()).f1;
  }

  EmGridResult out;
  bool first = true;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (std::size_t j = 0; j < lrs.size(); ++j) {
      out.cells.push_back({steps[i], lrs[j], f1[i][j]});
      if (first || f1[i][j] > out.best_f1) {
        out.best_steps = steps[i];
        out.best_lr = lrs[j];
        out.best_f1 = f1[i][j];
        first = false;
      }
    }
  }
  return out;
}

std::string format_em_trajectory_csv(std::span<const EmResult> results) {
  std::ostringstream os;
  os.precision(17);
  os << "sentence_id,step,entropy\n";
  for (std::size_t s = 0; s < results.size(); ++s)
    for (std::size_t t = 0; t < results[s].entropy.size(); ++t) os << s << ',' << t << ',' << results[s].entropy[t] << '\n';
  return os.str();
}

void write_em_trajectory_csv(const std::filesystem::path& path, std::span<const EmResult> results) {
  write_text_file(path, format_em_trajectory_csv(results));
}

}  // namespace polyadapt
