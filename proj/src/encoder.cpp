#include "polyadapt/encoder.hpp"

#include <cmath>

#include "polyadapt/error.hpp"
#include "polyadapt/init.hpp"

namespace polyadapt {

void EncoderConfig::validate() const {
  if (n_layers == 0 || hidden == 0 || heads == 0 || vocab_size == 0 || max_len == 0) {
    throw Error("encoder config has a zero dimension");
  }
  if (hidden % heads != 0) throw Error("hidden size must be divisible by the number of heads");
  if (ff < hidden) throw Error("ff size must be at least the hidden size");
}

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.hidden;
  const Rng root = Rng(seed).fork("encoder");
  tok_emb_ = normal_param("encoder.tok_emb", config_.vocab_size, d, 0.1, root);
  pos_emb_ = normal_param("encoder.pos_emb", config_.max_len, d, 0.1, root);
  emb_ln_g_ = const_param("encoder.emb_ln.g", 1, d, 1.0);
  emb_ln_b_ = const_param("encoder.emb_ln.b", 1, d, 0.0);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(config_.ff));
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    EncoderLayerParams L;
    L.wq = normal_param(p + "attn.wq", d, d, sd, root);
    L.bq = const_param(p + "attn.bq", 1, d, 0.0);
    L.wk = normal_param(p + "attn.wk", d, d, sd, root);
    L.bk = const_param(p + "attn.bk", 1, d, 0.0);
    L.wv = normal_param(p + "attn.wv", d, d, sd, root);
    L.bv = const_param(p + "attn.bv", 1, d, 0.0);
    L.wo = normal_param(p + "attn.wo", d, d, sd, root);
    L.bo = const_param(p + "attn.bo", 1, d, 0.0);
    L.ln1_g = const_param(p + "ln1.g", 1, d, 1.0);
    L.ln1_b = const_param(p + "ln1.b", 1, d, 0.0);
    L.w1 = normal_param(p + "ffn.w1", d, config_.ff, sd, root);
    L.b1 = const_param(p + "ffn.b1", 1, config_.ff, 0.0);
    L.w2 = normal_param(p + "ffn.w2", config_.ff, d, sf, root);
    L.b2 = const_param(p + "ffn.b2", 1, d, 0.0);
    L.ln2_g = const_param(p + "ln2.g", 1, d, 1.0);
    L.ln2_b = const_param(p + "ln2.b", 1, d, 0.0);
    layers_.push_back(std::move(L));
  }
  mlm_w_ = normal_param("encoder.mlm.w", d, d, sd, root);
  mlm_b_ = const_param("encoder.mlm.b", 1, d, 0.0);
  mlm_ln_g_ = const_param("encoder.mlm.ln.g", 1, d, 1.0);
  mlm_ln_b_ = const_param("encoder.mlm.ln.b", 1, d, 0.0);
  mlm_out_bias_ = const_param("encoder.mlm.out_bias", 1, config_.vocab_size, 0.0);
}

EncodeOutput Encoder::encode(Tape& tape, std::span<const int> ids, const LayerHook& hook) const {
  if (ids.empty()) throw Error("cannot encode an empty sentence");
  if (ids.size() > config_.max_len) {
    throw Error("sentence of " + std::to_string(ids.size()) + " tokens exceeds max_len " +
                std::to_string(config_.max_len));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw Error("unknown token id " + std::to_string(id) + " (vocab_size " + std::to_string(config_.vocab_size) +
                  ")");
    }
  }
  const std::size_t n = ids.size();
  const std::size_t heads = config_.heads;
  const std::size_t dh = config_.hidden / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<int> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<int>(i);
  Var x = ad::add(ad::gather_rows(tape.param(tok_emb_), ids), ad::gather_rows(tape.param(pos_emb_), positions));
  x = ad::layer_norm(x, tape.param(emb_ln_g_), tape.param(emb_ln_b_));

  EncodeOutput out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const EncoderLayerParams& L = layers_[l];
    const Var q = ad::linear(x, tape.param(L.wq), tape.param(L.bq));
    const Var k = ad::linear(x, tape.param(L.wk), tape.param(L.bk));
    const Var v = ad::linear(x, tape.param(L.wv), tape.param(L.bv));
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Var qh = ad::slice_cols(q, h * dh, dh);
      const Var kh = ad::slice_cols(k, h * dh, dh);
      const Var vh = ad::slice_cols(v, h * dh, dh);
      const Var probs = ad::softmax_rows(ad::scale(ad::matmul_bt(qh, kh), att_scale));
      head_out.push_back(ad::matmul(probs, vh));
    }
    const Var attn = ad::linear(ad::concat_cols(head_out), tape.param(L.wo), tape.param(L.bo));
    const Var x1 = ad::layer_norm(ad::add(x, attn), tape.param(L.ln1_g), tape.param(L.ln1_b));
    const Var hidden = ad::gelu(ad::linear(x1, tape.param(L.w1), tape.param(L.b1)));
    Var f = ad::linear(hidden, tape.param(L.w2), tape.param(L.b2));
    out.ffn_out.push_back(f);
    if (hook) f = hook(tape, l, f);
    x = ad::layer_norm(ad::add(x1, f), tape.param(L.ln2_g), tape.param(L.ln2_b));
  }
  out.top = x;
  return out;
}

std::vector<Tensor> Encoder::encode_values(std::span<const int> ids) const {
  Tape tape;
  const EncodeOutput out = encode(tape, ids);
  std::vector<Tensor> values;
  for (const Var& v : out.ffn_out) values.push_back(v.value());
  values.push_back(out.top.value());
  return values;
}

Var Encoder::mlm_logits(Tape& tape, Var states) const {
  Var h = ad::gelu(ad::linear(states, tape.param(mlm_w_), tape.param(mlm_b_)));
  h = ad::layer_norm(h, tape.param(mlm_ln_g_), tape.param(mlm_ln_b_));
  return ad::add_bias(ad::matmul_bt(h, tape.param(tok_emb_)), tape.param(mlm_out_bias_));
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out{&tok_emb_, &pos_emb_, &emb_ln_g_, &emb_ln_b_};
  for (auto& L : layers_) {
    for (Parameter* p : {&L.wq, &L.bq, &L.wk, &L.bk, &L.wv, &L.bv, &L.wo, &L.bo, &L.ln1_g, &L.ln1_b, &L.w1, &L.b1,
                         &L.w2, &L.b2, &L.ln2_g, &L.ln2_b}) {
      out.push_back(p);
    }
  }
  for (Parameter* p : {&mlm_w_, &mlm_b_, &mlm_ln_g_, &mlm_ln_b_, &mlm_out_bias_}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Encoder::parameters() const {
  auto mut = const_cast<Encoder*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<Parameter*> Encoder::mlm_head_parameters() {
  return {&mlm_w_, &mlm_b_, &mlm_ln_g_, &mlm_ln_b_, &mlm_out_bias_};
}

void Encoder::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) p->trainable = trainable;
}

bool Encoder::fully_frozen() const {
  for (const Parameter* p : parameters())
    if (p->trainable) return false;
  return true;
}

double parameter_checksum(std::span<const Parameter* const> params) {
  double s = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) s += checksum(params[i]->value) * static_cast<double>(i % 5 + 1);
  return s;
}

}  // namespace polyadapt
