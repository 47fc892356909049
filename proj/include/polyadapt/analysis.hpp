#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/data.hpp"
#include "polyadapt/language.hpp"
#include "polyadapt/model.hpp"

namespace polyadapt {

enum class Network { fusion, langvec };
std::string to_string(Network n);
Network parse_network(const std::string& s);

// Mean attention per source over every (sentence, layer, token) entry. The
// language-vector weights are shared by all tokens of a sentence and count
// once per token.
std::vector<double> aggregate_attention(std::span<const AttentionTrace> traces, Network network);

// Attention traces of the model's ZGUL pass over `examples` read as `language`.
std::vector<AttentionTrace> collect_traces(const TaskModel& model, std::span<const EncodedExample> examples,
                                           const std::string& language);

struct CorrelationRow {
  std::string target;
  Network network = Network::fusion;
  std::vector<std::string> sources;
  std::vector<double> weights;      // aggregated attention per source
  std::vector<double> relatedness;  // relatedness(target, source)
  double r = 0.0;
};

// Pearson r between aggregated weights and the relatedness row of `target`.
CorrelationRow correlate(const std::string& target, Network network, std::span<const std::string> sources,
                         std::vector<double> weights, const RelatednessMatrix& relatedness);

struct TargetSet {
  std::string language;
  std::vector<EncodedExample> examples;
};

// One row per (target, network). Throws when a (target, source) pair has no
// relatedness entry.
std::vector<CorrelationRow> correlation_report(const TaskModel& model, std::span<const TargetSet> targets,
                                               const RelatednessMatrix& relatedness);

// r values against `shuffles` random permutations of the relatedness row.
std::vector<double> shuffled_correlations(std::span<const double> weights, std::span<const double> relatedness,
                                          std::size_t shuffles, std::uint64_t seed);

// CSV: target,network,pearson_r
std::string format_correlation_csv(std::span<const CorrelationRow> rows);
// CSV: target,network,source_lang,weight,relatedness
std::string format_attention_csv(std::span<const CorrelationRow> rows);

// Self-contained SVG heatmap; values are expected in [0, 1].
std::string render_heatmap_svg(const std::string& title, std::span<const std::string> row_labels,
                               std::span<const std::string> col_labels, const std::vector<std::vector<double>>& values);

// Writes correlation.csv, attention.csv and one heatmap per network
// (heatmap_fusion.svg, heatmap_langvec.svg) plus heatmap_relatedness.svg.
void write_correlation_report(const std::filesystem::path& dir, std::span<const CorrelationRow> rows);

}  // namespace polyadapt
