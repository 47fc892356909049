#include "polyadapt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "polyadapt/error.hpp"
#include "polyadapt/metrics.hpp"
#include "polyadapt/rng.hpp"

namespace polyadapt {

std::string to_string(Network n) { return n == Network::fusion ? "F" : "L"; }

Network parse_network(const std::string& s) {
  if (s == "F" || s == "fusion") return Network::fusion;
  if (s == "L" || s == "langvec") return Network::langvec;
  throw Error("unknown attention network '" + s + "'");
}

std::vector<double> aggregate_attention(std::span<const AttentionTrace> traces, Network network) {
  if (traces.empty()) throw Error("no attention traces to aggregate");
  const std::size_t n = traces.front().sources.size();
  std::vector<double> sum(n, 0.0);
  double count = 0.0;
  for (const auto& tr : traces) {
    if (tr.sources.size() != n) throw Error("attention traces over different source sets");
    const auto& layers = network == Network::fusion ? tr.fusion : tr.langvec;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Tensor& w = layers[l];
      if (w.cols() != n) throw Error("attention trace width does not match its sources");
      // Shared rows stand for every token of the sentence.
      const std::size_t tokens = l < tr.fusion.size() ? tr.fusion[l].rows() : w.rows();
      const double repeat = w.rows() == 1 ? static_cast<double>(std::max<std::size_t>(tokens, 1)) : 1.0;
      for (std::size_t t = 0; t < w.rows(); ++t) {
        for (std::size_t i = 0; i < n; ++i) sum[i] += repeat * w.at(t, i);
        count += repeat;
      }
    }
  }
  if (count == 0.0) throw Error("no attention traces to aggregate");
  for (double& s : sum) s /= count;
  return sum;
}

std::vector<AttentionTrace> collect_traces(const TaskModel& model, std::span<const EncodedExample> examples,
                                           const std::string& language) {
  std::vector<AttentionTrace> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    AttentionTrace tr;
    zgul_forward(model, ex.ids, language, &tr);
    out.push_back(std::move(tr));
  }
  return out;
}

CorrelationRow correlate(const std::string& target, Network network, std::span<const std::string> sources,
                         std::vector<double> weights, const RelatednessMatrix& relatedness) {
  if (weights.size() != sources.size()) throw Error("one attention weight per source required");
  CorrelationRow row;
  row.target = target;
  row.network = network;
  row.sources.assign(sources.begin(), sources.end());
  row.weights = std::move(weights);
  for (const auto& s : sources) row.relatedness.push_back(relatedness.at(target, s));
  row.r = pearson(row.weights, row.relatedness);
  return row;
}

std::vector<CorrelationRow> correlation_report(const TaskModel& model, std::span<const TargetSet> targets,
                                               const RelatednessMatrix& relatedness) {
  std::vector<CorrelationRow> rows;
  for (const auto& t : targets) {
    const auto traces = collect_traces(model, t.examples, t.language);
    if (traces.empty()) throw Error("no test sentences for '" + t.language + "'");
    const auto& sources = traces.front().sources;
    for (Network net : {Network::fusion, Network::langvec})
      rows.push_back(correlate(t.language, net, sources, aggregate_attention(traces, net), relatedness));
  }
  return rows;
}

std::vector<double> shuffled_correlations(std::span<const double> weights, std::span<const double> relatedness,
                                          std::size_t shuffles, std::uint64_t seed) {
  Rng rng = Rng(seed).fork("shuffle");
  std::vector<double> perm(relatedness.begin(), relatedness.end());
  std::vector<double> out;
  out.reserve(shuffles);
  for (std::size_t s = 0; s < shuffles; ++s) {
    rng.shuffle(perm);
    out.push_back(pearson(weights, perm));
  }
  return out;
}

std::string format_correlation_csv(std::span<const CorrelationRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "target,network,pearson_r\n";
  for (const auto& r : rows) os << r.target << ',' << to_string(r.network) << ',' << r.r << '\n';
  return os.str();
}

std::string format_attention_csv(std::span<const CorrelationRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "target,network,source_lang,weight,relatedness\n";
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.sources.size(); ++i)
      os << r.target << ',' << to_string(r.network) << ',' << r.sources[i] << ',' << r.weights[i] << ','
         << r.relatedness[i] << '\n';
  return os.str();
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// White to dark blue.
std::string shade(double v) {
  const double t = std::clamp(v, 0.0, 1.0);
  auto channel = [&](double lo) { return static_cast<int>(std::lround(255.0 + (lo - 255.0) * t)); };
  std::ostringstream os;
  os << "rgb(" << channel(8) << ',' << channel(48) << ',' << channel(107) << ')';
  return os.str();
}

}  // namespace

std::string render_heatmap_svg(const std::string& title, std::span<const std::string> row_labels,
                               std::span<const std::string> col_labels, const std::vector<std::vector<double>>& values) {
  if (values.size() != row_labels.size()) throw Error("heatmap needs one value row per row label");
  for (const auto& row : values)
    if (row.size() != col_labels.size()) throw Error("heatmap needs one value per column label");
  constexpr int kCell = 48, kLeft = 80, kTop = 60;
  const int width = kLeft + kCell * static_cast<int>(col_labels.size()) + 20;
  const int height = kTop + kCell * static_cast<int>(row_labels.size()) + 20;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  for (std::size_t c = 0; c < col_labels.size(); ++c)
    os << "<text x=\"" << kLeft + kCell * static_cast<int>(c) + kCell / 2 << "\" y=\"" << kTop - 8
       << "\" text-anchor=\"middle\">" << xml_escape(col_labels[c]) << "</text>\n";
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    const int y = kTop + kCell * static_cast<int>(r);
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << y + kCell / 2 + 4 << "\" text-anchor=\"end\">"
       << xml_escape(row_labels[r]) << "</text>\n";
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const double v = values[r][c];
      const int x = kLeft + kCell * static_cast<int>(c);
      char label[16];
      std::snprintf(label, sizeof label, "%.2f", v);
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\"" << kCell << "\" fill=\""
         << shade(v) << "\" stroke=\"#ffffff\"/>\n";
      os << "<text x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
         << (v > 0.5 ? "#ffffff" : "#000000") << "\">" << label << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

void write_correlation_report(const std::filesystem::path& dir, std::span<const CorrelationRow> rows) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "correlation.csv", format_correlation_csv(rows));
  write_text_file(dir / "attention.csv", format_attention_csv(rows));
  if (rows.empty()) return;
  const auto& sources = rows.front().sources;
  for (Network net : {Network::fusion, Network::langvec}) {
    std::vector<std::string> targets;
    std::vector<std::vector<double>> weights, related;
    for (const auto& r : rows) {
      if (r.network != net) continue;
      if (r.sources != sources) throw Error("correlation rows over different source sets");
      targets.push_back(r.target);
      weights.push_back(r.weights);
      related.push_back(r.relatedness);
    }
    const std::string name = net == Network::fusion ? "fusion" : "langvec";
    write_text_file(dir / ("heatmap_" + name + ".svg"),
                    render_heatmap_svg("Aggregated " + name + " attention", targets, sources, weights));
    if (net == Network::langvec)
      write_text_file(dir / "heatmap_relatedness.svg", render_heatmap_svg("Relatedness", targets, sources, related));
  }
}

}  // namespace polyadapt
