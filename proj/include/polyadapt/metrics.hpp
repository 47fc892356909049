#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/data.hpp"

namespace polyadapt {

using TagSequence = std::vector<std::string>;

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // gold units
  std::size_t tp = 0, fp = 0, fn = 0;
};

// F1 = 2PR/(P+R), 0 when P + R = 0.
Prf prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// Entity span with inclusive token bounds.
struct Span {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

// Decodes BIO tags after repair (a stray I-X opens a new span).
std::vector<Span> decode_spans(std::span<const std::string> tags);
// Inverse of decode_spans on repaired tags.
TagSequence encode_spans(std::span<const Span> spans, std::size_t length);

// token: every token counts, so F1 equals token accuracy.
// bio_span: exact (type, start, end) matches.
Prf micro_f1(std::span<const TagSequence> preds, std::span<const TagSequence> golds, TagScheme scheme);

struct ClassRow {
  std::string label;  // "micro" for the summary row
  Prf scores;
};
// Per class in sorted label order, then the micro row. Classes absent from
// gold and prediction are only listed when given in `labels`; they score 0.
std::vector<ClassRow> classwise_f1(std::span<const TagSequence> preds, std::span<const TagSequence> golds,
                                   TagScheme scheme, std::span<const std::string> labels = {});
std::string format_classwise_csv(std::span<const ClassRow> rows);

struct McNemar {
  std::size_t b = 0;  // a correct, b wrong
  std::size_t c = 0;  // a wrong, b correct
  double statistic = 0.0;
  double p = 1.0;
};

// Upper tail of the chi-square distribution with one degree of freedom.
double chi2_sf_1df(double x);
McNemar mcnemar(const std::vector<bool>& correct_a, const std::vector<bool>& correct_b);
// Token-level correctness pairs.
McNemar mcnemar(std::span<const TagSequence> pred_a, std::span<const TagSequence> pred_b,
                std::span<const TagSequence> golds);

double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace polyadapt
