#include "polyadapt/fusion.hpp"

#include <cmath>

#include "polyadapt/error.hpp"
#include "polyadapt/init.hpp"

namespace polyadapt {

namespace {

constexpr double kAttentionInitSd = 0.02;
constexpr double kValueNoiseSd = 0.001;
constexpr double kCombineNoiseSd = 0.001;

std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

FusionLayerParams make_fusion_layer(std::size_t layer, std::size_t hidden, std::size_t lang_dim, const Rng& root) {
  const std::string p = "fusion.layer" + std::to_string(layer) + ".";
  FusionLayerParams f;
  f.wq = normal_param(p + "Wq", hidden, hidden, kAttentionInitSd, root);
  f.wk = normal_param(p + "Wk", hidden, hidden, kAttentionInitSd, root);
  f.wv = near_identity_param(p + "Wv", hidden, kValueNoiseSd, root);
  f.wl = normal_param(p + "WL", lang_dim, lang_dim, kAttentionInitSd, root);
  f.comb_w = normal_param(p + "combine.W", 2 * hidden, hidden, kCombineNoiseSd, root);
  for (std::size_t i = 0; i < hidden; ++i) {
    f.comb_w.value.at(i, i) += 0.5;
    f.comb_w.value.at(hidden + i, i) += 0.5;
  }
  f.comb_b = const_param(p + "combine.b", 1, hidden, 0.0);
  return f;
}

LangVecMlp make_langvec_mlp(std::size_t feature_dim, std::size_t lang_dim, const Rng& root) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  return {normal_param("langvec.mlp.W", feature_dim, lang_dim, sd, root),
          const_param("langvec.mlp.b", 1, lang_dim, 0.0)};
}

Var fusion_logits(Var query, std::span<const Var> values, const FusionLayerParams& p) {
  if (values.empty()) throw Error("empty adapter bank");
  Tape& tape = *query.tape();
  const Var q = ad::matmul(query, tape.param(p.wq));
  const Var wk = tape.param(p.wk);
  std::vector<Var> cols;
  cols.reserve(values.size());
  for (const Var& v : values) cols.push_back(ad::rowdot(q, ad::matmul(v, wk)));
  return ad::concat_cols(cols);
}

Var langvec_logits(Var lf_input, Var lf_sources, const LangVecMlp& mlp, const FusionLayerParams& p) {
  if (lf_sources.rows() == 0) throw Error("empty adapter bank");
  if (lf_input.cols() != lf_sources.cols()) throw Error("language feature widths differ");
  Tape& tape = *lf_input.tape();
  const Var w = tape.param(mlp.w), b = tape.param(mlp.b);
  const Var l_in = ad::linear(lf_input, w, b);
  const Var l_src = ad::linear(lf_sources, w, b);
  return ad::matmul_bt(ad::matmul(l_in, tape.param(p.wl)), l_src);
}

Var mix_values(std::span<const Var> values, Var weights) {
  if (values.empty()) throw Error("empty adapter bank");
  if (weights.cols() != values.size()) throw Error("mixture weights do not match the adapter count");
  const std::size_t m = values.front().rows();
  if (weights.rows() == 1 && m != 1) weights = ad::repeat_rows(weights, m);
  if (weights.rows() != m) throw Error("mixture weights do not match the token count");
  Var out = ad::mul_col(values[0], ad::slice_cols(weights, 0, 1));
  for (std::size_t i = 1; i < values.size(); ++i) {
    out = ad::add(out, ad::mul_col(values[i], ad::slice_cols(weights, i, 1)));
  }
  return out;
}

Var combine_and_task(Var o_f, Var o_l, const FusionLayerParams& p, const BottleneckAdapter& task_adapter,
                     std::size_t layer) {
  if (o_f.rows() != o_l.rows() || o_f.cols() != o_l.cols() || 2 * o_f.cols() != p.comb_w.value.rows()) {
    throw Error("combine input dimension mismatch");
  }
  Tape& tape = *o_f.tape();
  const Var parts[] = {o_f, o_l};
  const Var o_la = ad::linear(ad::concat_cols(parts), tape.param(p.comb_w), tape.param(p.comb_b));
  return task_adapter.forward(tape, o_la, layer);
}

AttentionResult fusion_attention(std::span<const double> query, const Tensor& adapter_outputs,
                                 const FusionLayerParams& p) {
  if (adapter_outputs.rows() == 0 || adapter_outputs.empty()) throw Error("empty adapter bank");
  if (query.size() != adapter_outputs.cols()) throw Error("query width does not match adapter outputs");
  Tape tape;
  std::vector<Var> values;
  for (std::size_t i = 0; i < adapter_outputs.rows(); ++i)
    values.push_back(tape.constant(Tensor::row(adapter_outputs.row_span(i))));
  const Var alpha = ad::softmax_rows(fusion_logits(tape.constant(Tensor::row(query)), values, p));
  std::vector<Var> projected;
  for (const Var& v : values) projected.push_back(ad::matmul(v, tape.param(p.wv)));
  return {to_vector(alpha.value()), to_vector(mix_values(projected, alpha).value())};
}

AttentionResult langvec_attention(std::span<const double> lf_input, const Tensor& lf_sources,
                                  const Tensor& adapter_outputs, const LangVecMlp& mlp, const FusionLayerParams& p) {
  if (adapter_outputs.rows() == 0 || adapter_outputs.empty()) throw Error("empty adapter bank");
  if (lf_sources.rows() != adapter_outputs.rows()) throw Error("one language profile per adapter required");
  Tape tape;
  const Var alpha =
      ad::softmax_rows(langvec_logits(tape.constant(Tensor::row(lf_input)), tape.constant(lf_sources), mlp, p));
  std::vector<Var> projected;
  for (std::size_t i = 0; i < adapter_outputs.rows(); ++i)
    projected.push_back(ad::matmul(tape.constant(Tensor::row(adapter_outputs.row_span(i))), tape.param(p.wv)));
  return {to_vector(alpha.value()), to_vector(mix_values(projected, alpha).value())};
}

std::vector<double> combine_and_task(std::span<const double> o_f, std::span<const double> o_l,
                                     const FusionLayerParams& p, const BottleneckAdapter& task_adapter,
                                     std::size_t layer) {
  if (o_f.size() != o_l.size()) throw Error("combine input dimension mismatch");
  Tape tape;
  const Var out =
      combine_and_task(tape.constant(Tensor::row(o_f)), tape.constant(Tensor::row(o_l)), p, task_adapter, layer);
  return to_vector(out.value());
}

}  // namespace polyadapt
