#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "polyadapt/analysis.hpp"
#include "polyadapt/error.hpp"
#include "polyadapt/metrics.hpp"
#include "polyadapt/rng.hpp"

using namespace polyadapt;
using namespace polyadapt::testing;

namespace {

AttentionTrace one_layer_trace(std::vector<std::string> sources, Tensor fusion, Tensor langvec) {
  AttentionTrace t;
  t.sources = std::move(sources);
  t.fusion.push_back(std::move(fusion));
  t.langvec.push_back(std::move(langvec));
  return t;
}

AttentionTrace random_trace(Rng& rng, std::size_t n, std::size_t layers, std::size_t tokens) {
  AttentionTrace t;
  t.sources = source_codes(n);
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor f = Tensor::zeros(tokens, n), g = Tensor::zeros(1, n);
    for (std::size_t i = 0; i < tokens; ++i)
      for (std::size_t j = 0; j < n; ++j) f.at(i, j) = rng.uniform();
    for (std::size_t j = 0; j < n; ++j) g.at(0, j) = rng.uniform();
    t.fusion.push_back(f);
    t.langvec.push_back(g);
  }
  return t;
}

RelatednessMatrix relatedness_with_target(const std::vector<std::string>& sources, const std::vector<double>& row) {
  std::vector<std::string> codes = sources;
  codes.push_back("tgt");
  const std::size_t n = codes.size();
  Tensor v = Tensor::identity(n);
  for (std::size_t j = 0; j < sources.size(); ++j) {
    v.at(n - 1, j) = row[j];
    v.at(j, n - 1) = row[j];
  }
  return RelatednessMatrix(codes, v);
}

}  // namespace

TEST(Aggregate, TwoTokensAverage) {
  const auto t = one_layer_trace({"a", "b"}, Tensor::from_rows({{1, 0}, {0, 1}}), Tensor::from_rows({{0.2, 0.8}}));
  const std::vector<AttentionTrace> ts{t};
  EXPECT_EQ(aggregate_attention(ts, Network::fusion), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(aggregate_attention(ts, Network::langvec), (std::vector<double>{0.2, 0.8}));
}

TEST(Aggregate, SingleEntryIsItself) {
  const auto t = one_layer_trace({"a", "b", "c"}, Tensor::from_rows({{0.1, 0.3, 0.6}}), Tensor::from_rows({{0.5, 0.25, 0.25}}));
  const std::vector<AttentionTrace> ts{t};
  EXPECT_EQ(aggregate_attention(ts, Network::fusion), (std::vector<double>{0.1, 0.3, 0.6}));
  EXPECT_EQ(aggregate_attention(ts, Network::langvec), (std::vector<double>{0.5, 0.25, 0.25}));
}

TEST(Aggregate, MatchesEntryLoopOracle) {
  Rng rng(3);
  std::vector<AttentionTrace> ts;
  for (std::size_t s = 0; s < 5; ++s) ts.push_back(random_trace(rng, 3, 2, 1 + s));
  std::vector<double> fus(3, 0.0), lv(3, 0.0);
  double entries = 0.0;
  for (const auto& t : ts)
    for (std::size_t l = 0; l < t.fusion.size(); ++l)
      for (std::size_t i = 0; i < t.fusion[l].rows(); ++i) {
        entries += 1.0;
        for (std::size_t j = 0; j < 3; ++j) {
          fus[j] += t.fusion[l].at(i, j);
          lv[j] += t.langvec[l].at(0, j);
        }
      }
  const auto a = aggregate_attention(ts, Network::fusion), b = aggregate_attention(ts, Network::langvec);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(a[j], fus[j] / entries, 1e-12);
    EXPECT_NEAR(b[j], lv[j] / entries, 1e-12);
  }
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(aggregate_attention(std::vector<AttentionTrace>{}, Network::fusion), Error);
  Rng rng(1);
  const std::vector<AttentionTrace> mixed{random_trace(rng, 2, 1, 2), random_trace(rng, 3, 1, 2)};
  EXPECT_THROW(aggregate_attention(mixed, Network::fusion), Error);
  EXPECT_THROW(parse_network("attention"), Error);
  EXPECT_EQ(parse_network(to_string(Network::langvec)), Network::langvec);
}

TEST(Correlate, PlantedWeightsGiveUnitCorrelation) {
  const std::vector<std::string> src{"s0", "s1", "s2", "s3"};
  const std::vector<double> row{0.9, 0.2, 0.5, 0.35};
  const auto rel = relatedness_with_target(src, row);
  std::vector<double> w(row);
  const double sum = w[0] + w[1] + w[2] + w[3];
  for (double& x : w) x /= sum;
  const auto c = correlate("tgt", Network::fusion, src, w, rel);
  EXPECT_NEAR(c.r, 1.0, 1e-12);
  EXPECT_EQ(c.relatedness, row);
  std::vector<double> inv(w);
  for (double& x : inv) x = 1.0 - x;
  EXPECT_NEAR(correlate("tgt", Network::langvec, src, inv, rel).r, -1.0, 1e-12);
}

TEST(Correlate, MissingPairThrows) {
  const std::vector<std::string> src{"s0", "s1"};
  const auto rel = relatedness_with_target(src, {0.3, 0.6});
  const std::vector<std::string> other{"s0", "zz"};
  EXPECT_THROW(correlate("tgt", Network::fusion, other, {0.5, 0.5}, rel), Error);
  EXPECT_THROW(correlate("tgt", Network::fusion, src, {1.0}, rel), Error);
}

TEST(Correlate, ShuffledBaselineIsNearZero) {
  Rng rng(8);
  std::vector<double> w(8), rel(8);
  for (std::size_t i = 0; i < w.size(); ++i) {
    rel[i] = rng.uniform();
    w[i] = rel[i] + 0.05 * rng.normal();
  }
  const auto rs = shuffled_correlations(w, rel, 400, 5);
  ASSERT_EQ(rs.size(), 400u);
  double mean = 0.0;
  for (double r : rs) {
    EXPECT_LE(std::abs(r), 1.0 + 1e-12);
    mean += r;
  }
  mean /= static_cast<double>(rs.size());
  EXPECT_LT(std::abs(mean), 0.1);
  EXPECT_GT(pearson(w, rel), 0.9);
  EXPECT_EQ(shuffled_correlations(w, rel, 50, 5), shuffled_correlations(w, rel, 50, 5));
}

TEST(Report, RowsPerTargetAndNetwork) {
  const TaskModel m = tiny_model(3, {.head_noise = 0.1});
  std::vector<std::string> src = source_codes(3);
  const auto rel = relatedness_with_target(src, {0.8, 0.1, 0.4});
  std::vector<TargetSet> targets(1);
  targets[0].language = "tgt";
  for (std::uint64_t s = 0; s < 4; ++s) targets[0].examples.push_back({sentence(5, s), std::vector<int>(5, 0), "tgt", Split::test});
  const auto rows = correlation_report(m, targets, rel);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].network, Network::fusion);
  EXPECT_EQ(rows[1].network, Network::langvec);
  for (const auto& r : rows) {
    double s = 0.0;
    for (double w : r.weights) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_EQ(r.sources, src);
  }
  const auto traces = collect_traces(m, targets[0].examples, "tgt");
  EXPECT_EQ(aggregate_attention(traces, Network::langvec), rows[1].weights);

  targets[0].examples.clear();
  EXPECT_THROW(correlation_report(m, targets, rel), Error);
}

TEST(Report, CsvLayoutsAndSvg) {
  const std::vector<std::string> src{"s0", "s1"};
  const auto rel = relatedness_with_target(src, {0.3, 0.6});
  const std::vector<CorrelationRow> rows{correlate("tgt", Network::fusion, src, {0.4, 0.6}, rel),
                                         correlate("tgt", Network::langvec, src, {0.7, 0.3}, rel)};
  const std::string corr = format_correlation_csv(rows);
  EXPECT_EQ(corr.substr(0, corr.find('\n')), "target,network,pearson_r");
  EXPECT_EQ(std::count(corr.begin(), corr.end(), '\n'), 3);
  const std::string att = format_attention_csv(rows);
  EXPECT_EQ(att.substr(0, att.find('\n')), "target,network,source_lang,weight,relatedness");
  EXPECT_EQ(std::count(att.begin(), att.end(), '\n'), 5);

  const std::string svg = render_heatmap_svg("t", std::vector<std::string>{"tgt"}, src, {{0.4, 0.6}});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_THROW(render_heatmap_svg("t", std::vector<std::string>{"tgt"}, src, {{0.4}}), Error);

  const auto dir = std::filesystem::temp_directory_path() / "polyadapt_tests" / "report";
  std::filesystem::remove_all(dir);
  write_correlation_report(dir, rows);
  for (const char* f : {"correlation.csv", "attention.csv", "heatmap_fusion.svg", "heatmap_langvec.svg",
                        "heatmap_relatedness.svg"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}
