#include <gtest/gtest.h>

#include <cmath>
#include <utility>

#include "fixtures.hpp"
#include "polyadapt/adapter.hpp"
#include "polyadapt/encoder.hpp"
#include "polyadapt/error.hpp"
#include "polyadapt/mlm.hpp"

using namespace polyadapt;
using namespace polyadapt::testing;

namespace {

double encoder_checksum(const Encoder& e) {
  const auto p = e.parameters();
  return parameter_checksum(p);
}

// Sentences over ids [lo, lo + 10): a fixed successor pattern with a random start.
std::vector<std::vector<int>> patterned_corpus(int lo, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < n; ++i) {
    int cur = static_cast<int>(rng.below(10));
    std::vector<int> s;
    for (int k = 0; k < 8; ++k) {
      s.push_back(lo + cur);
      cur = (cur * 3 + 1) % 10;
    }
    out.push_back(std::move(s));
  }
  return out;
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

}  // namespace

TEST(Encoder, SingleTokenShape) {
  const Encoder e(tiny_encoder_config(8, 1), 1);
  const auto out = e.encode_values(std::vector<int>{5});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.back().rows(), 1u);
  EXPECT_EQ(out.back().cols(), 8u);
  EXPECT_EQ(out.front().rows(), 1u);
}

TEST(Encoder, BatchOrderDoesNotMatter) {
  Encoder e(tiny_encoder_config(), 2);
  e.set_trainable(false);
  const std::vector<std::vector<int>> batch{sentence(4, 1), sentence(6, 2), sentence(3, 3)};
  std::vector<Tensor> forward, backward;
  for (const auto& s : batch) forward.push_back(e.encode_values(s).back());
  for (auto it = batch.rbegin(); it != batch.rend(); ++it) backward.push_back(e.encode_values(*it).back());
  for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(forward[i], backward[batch.size() - 1 - i]);
}

TEST(Encoder, FrozenEncodeIsRepeatable) {
  Encoder e(tiny_encoder_config(), 3);
  e.set_trainable(false);
  EXPECT_TRUE(e.fully_frozen());
  const auto s = sentence(7);
  EXPECT_EQ(e.encode_values(s), e.encode_values(s));
}

// Recorded from the first passing run.
TEST(Encoder, GoldenChecksum) {
  const Encoder e(tiny_encoder_config(), 4);
  EXPECT_NEAR(checksum(e.encode_values(sentence(6, 4)).back()), 7.5028896060867911, 1e-9);
}

TEST(Encoder, RejectsBadInput) {
  const Encoder e(tiny_encoder_config(), 1);
  EXPECT_THROW(e.encode_values(std::vector<int>{3, 24}), Error);
  EXPECT_THROW(e.encode_values(std::vector<int>{-1}), Error);
  EXPECT_THROW(e.encode_values(std::vector<int>{}), Error);
  EXPECT_THROW(e.encode_values(sentence(17)), Error);
}

TEST(EncoderConfig, Validation) {
  EncoderConfig c = tiny_encoder_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = tiny_encoder_config();
  c.ff = 4;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(tiny_encoder_config().validate());
}

TEST(MlmPretrain, ZeroStepsLeavesFreshEncoder) {
  const auto corpus = patterned_corpus(2, 4, 1);
  const MlmConfig c{.steps = 0, .seed = 9};
  const Encoder trained = mlm_pretrain(tiny_encoder_config(), corpus, c);
  const Encoder fresh(tiny_encoder_config(), 9);
  EXPECT_EQ(encoder_checksum(trained), encoder_checksum(fresh));
  EXPECT_EQ(trained.encode_values(corpus[0]), fresh.encode_values(corpus[0]));
}

TEST(MlmPretrain, LossDecreasesOnTinyCorpus) {
  const auto corpus = patterned_corpus(2, 2, 2);
  MlmReport report;
  mlm_pretrain(tiny_encoder_config(), corpus, {.mask_rate = 0.3, .steps = 200, .lr = 3e-3, .batch_size = 4, .seed = 1},
               &report);
  ASSERT_EQ(report.step_losses.size(), 200u);
  EXPECT_LT(report.tail_mean(), report.head_mean());
}

TEST(MlmPretrain, Errors) {
  const auto corpus = patterned_corpus(2, 2, 2);
  try {
    mlm_pretrain(tiny_encoder_config(), corpus, {.mask_rate = 0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()).rfind("nothing to predict", 0), 0u);
  }
  EXPECT_THROW(mlm_pretrain(tiny_encoder_config(), {}, {}), DataError);
  const std::vector<std::vector<int>> big{{2, 3, 40}};
  EXPECT_THROW(mlm_pretrain(tiny_encoder_config(), big, {}), DataError);
}

TEST(ContinuedPretrain, ZeroStepsIsIdentity) {
  const Encoder base(tiny_encoder_config(), 5);
  const Encoder out = continued_pretrain(base, patterned_corpus(2, 3, 1), {.steps = 0});
  EXPECT_EQ(encoder_checksum(out), encoder_checksum(base));
}

TEST(ContinuedPretrain, ReducesTargetLoss) {
  const auto source = patterned_corpus(2, 20, 1);
  const auto target = patterned_corpus(12, 20, 2);
  const Encoder base = mlm_pretrain(tiny_encoder_config(), source, {.steps = 60, .lr = 3e-3, .seed = 1});
  const Encoder cont = continued_pretrain(base, target, {.steps = 60, .lr = 3e-3, .seed = 2});
  EXPECT_LT(mlm_eval_loss(cont, nullptr, target, 0.3, 7), mlm_eval_loss(base, nullptr, target, 0.3, 7));
}

TEST(ContinuedPretrain, VocabularyMismatchThrows) {
  const Encoder base(tiny_encoder_config(), 5);
  const std::vector<std::vector<int>> wide{{2, 30}};
  EXPECT_THROW(continued_pretrain(base, wide, {}), DataError);
}

TEST(Masking, RateAndSplitInExpectation) {
  Rng rng(42);
  const std::vector<int> ids(20, 7);
  std::size_t selected = 0, masked = 0, kept = 0;
  const std::size_t n = 20000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ms = mask_sentence(ids, 0.15, 24, rng);
    selected += ms.positions.size();
    for (int p : ms.positions) {
      if (ms.input[static_cast<std::size_t>(p)] == Vocab::kMask) ++masked;
      if (ms.input[static_cast<std::size_t>(p)] == 7) ++kept;
    }
  }
  const double rate = static_cast<double>(selected) / static_cast<double>(n * ids.size());
  EXPECT_NEAR(rate, 0.15, 0.003);
  EXPECT_NEAR(static_cast<double>(masked) / static_cast<double>(selected), 0.8, 0.01);
  // The random branch can also draw the original id.
  EXPECT_NEAR(static_cast<double>(kept) / static_cast<double>(selected), 0.1 + 0.1 / 22.0, 0.01);
}

TEST(Masking, ReproducibleFromSeed) {
  const auto ids = sentence(12, 3);
  Rng a(5), b(5);
  const auto x = mask_sentence(ids, 0.3, 24, a);
  const auto y = mask_sentence(ids, 0.3, 24, b);
  EXPECT_EQ(x.input, y.input);
  EXPECT_EQ(x.positions, y.positions);
  EXPECT_EQ(x.targets, y.targets);
}

TEST(Adapter, FreshAdapterIsIdentity) {
  const BottleneckAdapter a("la.x", 6, 3, 3, Rng(1));
  const std::vector<double> h{0.5, -1.0, 2.0, 0.0, 3.5, -0.25};
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(a.forward(h, l), h);
}

TEST(Adapter, BottleneckWidth) {
  EXPECT_EQ(bottleneck_width(12, 3), 4u);
  EXPECT_EQ(bottleneck_width(8, 3), 2u);
  EXPECT_THROW(bottleneck_width(2, 3), Error);
  const BottleneckAdapter a("la.x", 12, 1, 3, Rng(1));
  EXPECT_EQ(a.bottleneck(), 4u);
  EXPECT_EQ(a.layer(0).w_down.value.cols(), 4u);
  EXPECT_EQ(a.layer(0).w_up.value.rows(), 4u);
}

TEST(Adapter, MatchesMatrixOracle) {
  BottleneckAdapter a("la.x", 4, 1, 2, Rng(3));
  perturb(a.parameters(), 0.8, 3);
  const auto& p = a.layer(0);
  const std::vector<double> h{0.3, -0.7, 1.2, 0.05};
  std::vector<double> down(2, 0.0), expect(h);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t i = 0; i < 4; ++i) down[j] += h[i] * p.w_down.value.at(i, j);
    down[j] = gelu(down[j] + p.b_down.value[j]);
  }
  for (std::size_t j = 0; j < 4; ++j) {
    for (std::size_t i = 0; i < 2; ++i) expect[j] += down[i] * p.w_up.value.at(i, j);
    expect[j] += p.b_up.value[j];
  }
  const auto out = a.forward(h, 0);
  ASSERT_EQ(out.size(), 4u);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out[j], expect[j], 1e-12);
}

TEST(Adapter, LayerOutOfRangeThrows) {
  const BottleneckAdapter a("la.x", 4, 2, 2, Rng(1));
  EXPECT_THROW(a.forward(std::vector<double>(4, 0.0), 2), Error);
  EXPECT_THROW(a.forward(std::vector<double>(3, 0.0), 0), Error);
}

TEST(AdapterBank, Contracts) {
  AdapterBank bank;
  bank.add_source(make_language_adapter("a", 8, 2, 2, 1));
  bank.add_source(make_language_adapter("b", 8, 2, 2, 2));
  EXPECT_THROW(bank.add_source(make_language_adapter("a", 8, 2, 2, 3)), Error);
  EXPECT_THROW(bank.add_source(make_language_adapter("c", 4, 2, 2, 3)), Error);
  bank.set_target(make_language_adapter("t", 8, 2, 2, 4));
  EXPECT_EQ(bank.codes(), (std::vector<std::string>{"a", "b", "t"}));
  EXPECT_TRUE(bank.has_target());
  EXPECT_EQ(*bank.index_of("t"), 2u);
  EXPECT_THROW(bank.find("z"), Error);
}

TEST(LanguageAdapterTraining, ZeroStepsLeavesAdapterUnchanged) {
  Encoder e(tiny_encoder_config(), 1);
  e.set_trainable(false);
  const AdapterTrainConfig c{.mlm = {.steps = 0, .seed = 4}, .reduction_factor = 2};
  const LanguageAdapter la = train_language_adapter(e, "x", patterned_corpus(2, 3, 1), c);
  const LanguageAdapter fresh = make_language_adapter("x", 8, 2, 2, 4);
  const auto a = la.adapter.parameters();
  const auto b = fresh.adapter.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value);
}

TEST(LanguageAdapterTraining, EncoderIsUntouched) {
  Encoder e(tiny_encoder_config(), 1);
  e.set_trainable(false);
  const double before = encoder_checksum(e);
  const auto snap = snapshot(std::as_const(e).parameters());
  MlmReport report;
  train_language_adapter(e, "x", patterned_corpus(2, 10, 1), {.mlm = {.steps = 30, .lr = 3e-3}, .reduction_factor = 2},
                         &report);
  EXPECT_EQ(encoder_checksum(e), before);
  EXPECT_EQ(snapshot(std::as_const(e).parameters()), snap);
}

TEST(LanguageAdapterTraining, Errors) {
  Encoder e(tiny_encoder_config(), 1);
  const AdapterTrainConfig c{.mlm = {.steps = 1}, .reduction_factor = 2};
  try {
    train_language_adapter(e, "x", patterned_corpus(2, 2, 1), c);
    FAIL();
  } catch (const Error& err) {
    EXPECT_STREQ(err.what(), "encoder must be frozen for language-adapter training");
  }
  e.set_trainable(false);
  EXPECT_THROW(train_language_adapter(e, "x", {}, c), DataError);
}

TEST(LanguageAdapterTraining, OwnLanguageBeatsSwapped) {
  const auto a = patterned_corpus(2, 30, 1);
  const auto b = patterned_corpus(12, 30, 2);
  std::vector<std::vector<int>> both(a);
  both.insert(both.end(), b.begin(), b.end());
  Encoder enc = mlm_pretrain(tiny_encoder_config(), both, {.steps = 30, .lr = 3e-3, .seed = 3});
  enc.set_trainable(false);
  const AdapterTrainConfig c{.mlm = {.mask_rate = 0.3, .steps = 120, .lr = 5e-3, .seed = 4}, .reduction_factor = 2};
  const LanguageAdapter la = train_language_adapter(enc, "a", a, c);
  const LanguageAdapter lb = train_language_adapter(enc, "b", b, c);
  const double aa = mlm_eval_loss(enc, &la.adapter, a, 0.3, 11);
  const double ab = mlm_eval_loss(enc, &lb.adapter, a, 0.3, 11);
  const double bb = mlm_eval_loss(enc, &lb.adapter, b, 0.3, 11);
  const double ba = mlm_eval_loss(enc, &la.adapter, b, 0.3, 11);
  EXPECT_LT(aa, ab);
  EXPECT_LT(bb, ba);
}
