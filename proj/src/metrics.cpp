#include "polyadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "polyadapt/error.hpp"

namespace polyadapt {

namespace {

void check_aligned(std::span<const TagSequence> preds, std::span<const TagSequence> golds) {
  if (preds.size() != golds.size()) throw Error("prediction and gold sentence counts differ");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != golds[i].size()) {
      throw Error("length mismatch in sentence " + std::to_string(i));
    }
  }
}

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

// Per-label counts; micro totals are the sums.
std::map<std::string, Counts> count_by_label(std::span<const TagSequence> preds, std::span<const TagSequence> golds,
                                             TagScheme scheme) {
  check_aligned(preds, golds);
  std::map<std::string, Counts> out;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (scheme == TagScheme::token) {
      for (std::size_t t = 0; t < preds[s].size(); ++t) {
        if (preds[s][t] == golds[s][t]) {
          ++out[golds[s][t]].tp;
        } else {
          ++out[preds[s][t]].fp;
          ++out[golds[s][t]].fn;
        }
      }
    } else {
      const auto ps = decode_spans(preds[s]);
      const auto gs = decode_spans(golds[s]);
      const std::set<Span> gold_set(gs.begin(), gs.end());
      const std::set<Span> pred_set(ps.begin(), ps.end());
      for (const auto& sp : ps) {
        if (gold_set.contains(sp)) {
          ++out[sp.type].tp;
        } else {
          ++out[sp.type].fp;
        }
      }
      for (const auto& sp : gs)
        if (!pred_set.contains(sp)) ++out[sp.type].fn;
    }
  }
  return out;
}

}  // namespace

Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  Prf r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.support = tp + fn;
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::vector<Span> decode_spans(std::span<const std::string> tags) {
  std::vector<Span> out;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      open = false;
      continue;
    }
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) {
      throw DataError("malformed BIO tag '" + tag + "'");
    }
    const std::string type = tag.substr(2);
    if (tag[0] == 'I' && open && out.back().type == type) {
      out.back().end = i;
    } else {
      out.push_back({type, i, i});
      open = true;
    }
  }
  return out;
}

TagSequence encode_spans(std::span<const Span> spans, std::size_t length) {
  TagSequence tags(length, "O");
  for (const auto& sp : spans) {
    if (sp.start > sp.end || sp.end >= length) throw Error("span out of sentence bounds");
    for (std::size_t i = sp.start; i <= sp.end; ++i) {
      if (tags[i] != "O") throw Error("overlapping spans");
      tags[i] = (i == sp.start ? "B-" : "I-") + sp.type;
    }
  }
  return tags;
}

Prf micro_f1(std::span<const TagSequence> preds, std::span<const TagSequence> golds, TagScheme scheme) {
  Counts total;
  for (const auto& [label, c] : count_by_label(preds, golds, scheme)) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return prf_from_counts(total.tp, total.fp, total.fn);
}

std::vector<ClassRow> classwise_f1(std::span<const TagSequence> preds, std::span<const TagSequence> golds,
                                   TagScheme scheme, std::span<const std::string> labels) {
  auto counts = count_by_label(preds, golds, scheme);
  for (const auto& l : labels) {
    std::string key = l;
    if (scheme == TagScheme::bio_span) {
      if (l == "O") continue;
      if (l.size() > 2 && l[1] == '-') key = l.substr(2);
    }
    counts.try_emplace(key);
  }
  std::vector<ClassRow> rows;
  Counts total;
  for (const auto& [label, c] : counts) {
    rows.push_back({label, prf_from_counts(c.tp, c.fp, c.fn)});
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  rows.push_back({"micro", prf_from_counts(total.tp, total.fp, total.fn)});
  return rows;
}

std::string format_classwise_csv(std::span<const ClassRow> rows) {
  std::ostringstream os;
  os.precision(6);
  os << "label,precision,recall,f1,support\n";
  for (const auto& r : rows) {
    os << r.label << ',' << r.scores.precision << ',' << r.scores.recall << ',' << r.scores.f1 << ','
       << r.scores.support << '\n';
  }
  return os.str();
}

double chi2_sf_1df(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

McNemar mcnemar(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b) {
  if (correct_a.size() != correct_b.size()) throw Error("length mismatch in McNemar inputs");
  McNemar r;
  for (std::size_t i = 0; i < correct_a.size(); ++i) {
    if (correct_a[i] && !correct_b[i]) ++r.b;
    if (!correct_a[i] && correct_b[i]) ++r.c;
  }
  if (r.b + r.c == 0) return r;
  const double diff = std::abs(static_cast<double>(r.b) - static_cast<double>(r.c)) - 1.0;
  r.statistic = diff * diff / static_cast<double>(r.b + r.c);
  r.p = chi2_sf_1df(r.statistic);
  return r;
}

McNemar mcnemar(std::span<const TagSequence> pred_a, std::span<const TagSequence> pred_b,
                std::span<const TagSequence> golds) {
  check_aligned(pred_a, golds);
  check_aligned(pred_b, golds);
  std::vector<bool> a, b;
  for (std::size_t s = 0; s < golds.size(); ++s) {
    for (std::size_t t = 0; t < golds[s].size(); ++t) {
      a.push_back(pred_a[s][t] == golds[s][t]);
      b.push_back(pred_b[s][t] == golds[s][t]);
    }
  }
  return mcnemar(a, b);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson inputs differ in length");
  if (x.size() < 2) throw Error("undefined correlation");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("undefined correlation");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace polyadapt
