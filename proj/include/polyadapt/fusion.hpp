#pragma once

#include <span>
#include <string>
#include <vector>

#include "polyadapt/adapter.hpp"
#include "polyadapt/rng.hpp"
#include "polyadapt/tape.hpp"

namespace polyadapt {

// Per-layer parameters of the ensembling block. Row-vector convention: a
// projection "W x" is computed as x * W.
struct FusionLayerParams {
  Parameter wq, wk, wv;  // d x d; wv is shared by both attention networks
  Parameter wl;          // d_l x d_l
  Parameter comb_w;      // 2d x d, input is concat(o_F, o_L)
  Parameter comb_b;      // 1 x d
};

// Single linear map from typology features to the language embedding,
// shared by every layer.
struct LangVecMlp {
  Parameter w;  // feature_dim x d_l
  Parameter b;  // 1 x d_l
};

FusionLayerParams make_fusion_layer(std::size_t layer, std::size_t hidden, std::size_t lang_dim, const Rng& root);
LangVecMlp make_langvec_mlp(std::size_t feature_dim, std::size_t lang_dim, const Rng& root);

// Tape-level building blocks. `values` holds one tokens x d matrix per source.
// Returns tokens x n attention logits (query . key).
Var fusion_logits(Var query, std::span<const Var> values, const FusionLayerParams& p);
// Returns 1 x n logits l_in * W_L * l_src^T from 1 x f and n x f feature rows.
Var langvec_logits(Var lf_input, Var lf_sources, const LangVecMlp& mlp, const FusionLayerParams& p);
// sum_i weights[:, i] * values_i; weights is tokens x n (or 1 x n, broadcast).
Var mix_values(std::span<const Var> values, Var weights);
// TA(Linear(concat(o_F, o_L))).
Var combine_and_task(Var o_f, Var o_l, const FusionLayerParams& p, const BottleneckAdapter& task_adapter,
                     std::size_t layer);

// Plain-value forms for one token.
struct AttentionResult {
  std::vector<double> alpha;
  std::vector<double> out;
};

// adapter_outputs: n x d.
AttentionResult fusion_attention(std::span<const double> query, const Tensor& adapter_outputs,
                                 const FusionLayerParams& p);
// lf_sources: n x f.
AttentionResult langvec_attention(std::span<const double> lf_input, const Tensor& lf_sources,
                                  const Tensor& adapter_outputs, const LangVecMlp& mlp, const FusionLayerParams& p);
std::vector<double> combine_and_task(std::span<const double> o_f, std::span<const double> o_l,
                                     const FusionLayerParams& p, const BottleneckAdapter& task_adapter,
                                     std::size_t layer);

}  // namespace polyadapt
