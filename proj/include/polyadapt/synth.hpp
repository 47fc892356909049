#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "polyadapt/config.hpp"
#include "polyadapt/data.hpp"
#include "polyadapt/language.hpp"

namespace polyadapt {

// A target language assembled from two sources: each concept, grammar switch
// and typology bit is taken from the first source with probability `weights[0]`,
// from the second with `weights[1]`, and is fresh otherwise.
struct SynthTarget {
  std::string code;
  std::vector<std::string> mix;  // exactly two source codes
  std::vector<double> weights;   // two weights, sum <= 1
};

struct SynthSpec {
  std::uint64_t seed = 0;
  TagScheme scheme = TagScheme::token;  // token: POS-style tags; bio_span: entity spans
  std::vector<std::string> sources;
  // Planted source relatedness: symmetric, unit diagonal, entries in [0, 1].
  std::vector<std::vector<double>> relatedness;
  std::optional<SynthTarget> target;
  std::size_t concepts = 240;
  double homograph_rate = 0.15;
  // Chance that a fresh word reuses another language's word for a concept with
  // a different tag.
  double false_friend_rate = 0.0;
  double label_noise = 0.0;  // train split only
  double entity_rate = 0.35;  // bio_span: chance that a noun phrase is a name
  std::size_t n_train = 200;
  std::size_t n_dev = 60;
  std::size_t n_test = 100;
  std::size_t n_unlabeled = 600;

  void validate() const;
  std::vector<std::string> languages() const;  // sources, then the target
};

Json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const Json& j);

inline constexpr std::size_t kGrammarSwitches = 4;

struct LanguageData {
  std::string code;
  std::vector<Example> train, dev, test, unlabeled;
};

// Labeled and unlabeled data for a set of languages with profiles and
// relatedness. Produced by the generator or read back from disk.
struct Corpus {
  std::vector<LanguageData> languages;
  TagScheme scheme = TagScheme::token;
  std::string target;  // empty when every language is a source
  ProfileMap profiles;
  RelatednessMatrix genetic, syntactic, mean;

  const LanguageData& language(const std::string& code) const;
  std::vector<std::string> codes() const;
  // Every labeled sentence of every language.
  std::vector<Example> all_labeled() const;
  // Every sentence (labeled and unlabeled) for vocabulary building.
  std::vector<std::vector<std::string>> all_sentences() const;
};

Corpus synth_generate(const SynthSpec& spec);

// Directory layout: <code>/{train,dev,test}.conll, <code>/unlabeled.txt,
// langvec.tsv, relatedness_{genetic,syntactic,mean}.tsv, corpus.json.
void write_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus_dir(const std::filesystem::path& dir);

// Intersection over union of the word types of two languages (all splits).
double lexical_iou(const LanguageData& a, const LanguageData& b);

}  // namespace polyadapt
