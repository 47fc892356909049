#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "polyadapt/tape.hpp"

namespace polyadapt {

struct EncoderConfig {
  std::size_t n_layers = 4;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t ff = 128;
  std::size_t vocab_size = 2048;
  std::size_t max_len = 64;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderLayerParams {
  Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter ln1_g, ln1_b;
  Parameter w1, b1, w2, b2;
  Parameter ln2_g, ln2_b;
};

// Called once per layer with the feed-forward output (before the residual add
// and the block's second layer norm); the returned value replaces it.
using LayerHook = std::function<Var(Tape&, std::size_t layer, Var ffn_out)>;

struct EncodeOutput {
  std::vector<Var> ffn_out;  // per layer, as handed to the hook
  Var top;                   // final hidden states, tokens x hidden
};

// Post-LN transformer encoder with a tied-embedding MLM head.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::uint64_t seed);

  EncodeOutput encode(Tape& tape, std::span<const int> ids, const LayerHook& hook = {}) const;
  // Untracked convenience: per-layer feed-forward outputs followed by the top states.
  std::vector<Tensor> encode_values(std::span<const int> ids) const;

  // MLM logits for the given hidden-state rows (m x hidden -> m x vocab).
  Var mlm_logits(Tape& tape, Var states) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> mlm_head_parameters();
  void set_trainable(bool trainable);
  bool fully_frozen() const;

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  Parameter tok_emb_, pos_emb_, emb_ln_g_, emb_ln_b_;
  std::vector<EncoderLayerParams> layers_;
  Parameter mlm_w_, mlm_b_, mlm_ln_g_, mlm_ln_b_, mlm_out_bias_;
};

// Checksum over every encoder tensor; equal checksums on equal bits.
double parameter_checksum(std::span<const Parameter* const> params);

}  // namespace polyadapt
