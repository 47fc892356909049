#include "polyadapt/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include "polyadapt/error.hpp"
#include "polyadapt/rng.hpp"

namespace polyadapt {

namespace {

constexpr std::size_t kTypologyBits = kTypologyDim - kGrammarSwitches;
enum Switch { kAdjBeforeNoun = 0, kDetBeforeNoun = 1, kVerbBeforeObject = 2, kPrepositions = 3 };

const std::vector<std::string> kPosTags{"NOUN", "VERB", "ADJ", "DET", "ADP", "PRON"};
const std::vector<std::string> kEntityTypes{"PER", "LOC", "ORG"};

struct Concept {
  std::string tag;  // POS tag, or "NAME-<type>" for entity name tokens
  std::size_t rank = 0;
};

struct Inventory {
  std::vector<Concept> concepts;
  std::map<std::string, std::vector<std::size_t>> by_tag;
  std::map<std::string, std::vector<double>> zipf;  // cumulative weights per tag
};

Inventory make_inventory(const SynthSpec& spec) {
  const std::size_t n = spec.concepts;
  auto share = [&](double frac, std::size_t floor) { return std::max(floor, static_cast<std::size_t>(frac * n)); };
  // Nouns first: homographs reuse already assigned noun words.
  std::vector<std::pair<std::string, std::size_t>> sizes{{"NOUN", share(0.35, 4)}, {"VERB", share(0.25, 3)},
                                                         {"ADJ", share(0.18, 2)},  {"DET", share(0.05, 2)},
                                                         {"ADP", share(0.07, 2)},  {"PRON", share(0.05, 2)}};
  if (spec.scheme == TagScheme::bio_span) {
    for (const auto& t : kEntityTypes) sizes.emplace_back("NAME-" + t, share(0.08, 3));
  }
  Inventory inv;
  for (const auto& [tag, count] : sizes) {
    double cum = 0.0;
    for (std::size_t r = 0; r < count; ++r) {
      inv.by_tag[tag].push_back(inv.concepts.size());
      inv.concepts.push_back({tag, r});
      cum += 1.0 / static_cast<double>(r + 1);
      inv.zipf[tag].push_back(cum);
    }
  }
  return inv;
}

class WordFactory {
 public:
  std::string fresh(Rng& rng) {
    static constexpr std::string_view kOnsets = "ptkbdgmnlrsvzfh";
    static constexpr std::string_view kVowels = "aeiou";
    for (;;) {
      const std::size_t syllables = 2 + rng.below(2);
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng.below(kOnsets.size())];
        w += kVowels[rng.below(kVowels.size())];
      }
      if (rng.bernoulli(0.3)) w += kOnsets[rng.below(kOnsets.size())];
      if (used_.insert(w).second) return w;
    }
  }

 private:
  std::unordered_set<std::string> used_;
};

struct Language {
  std::string code;
  std::vector<std::string> words;  // per concept
  std::array<bool, kGrammarSwitches> grammar{};
  std::vector<bool> bits;  // kTypologyBits
};

// Chooses, per unit, which earlier language (if any) the unit is copied from.
class DonorPicker {
 public:
  virtual ~DonorPicker() = default;
  virtual std::optional<std::size_t> pick(Rng& rng) const = 0;
};

class RelatedDonor : public DonorPicker {
 public:
  RelatedDonor(std::vector<std::pair<std::size_t, double>> ranked) : ranked_(std::move(ranked)) {}
  std::optional<std::size_t> pick(Rng& rng) const override {
    for (const auto& [k, r] : ranked_)
      if (rng.bernoulli(r)) return k;
    return std::nullopt;
  }

 private:
  std::vector<std::pair<std::size_t, double>> ranked_;
};

class MixtureDonor : public DonorPicker {
 public:
  MixtureDonor(std::size_t a, std::size_t b, double wa, double wb) : a_(a), b_(b), wa_(wa), wb_(wb) {}
  std::optional<std::size_t> pick(Rng& rng) const override {
    const double u = rng.uniform();
    if (u < wa_) return a_;
    if (u < wa_ + wb_) return b_;
    return std::nullopt;
  }

 private:
  std::size_t a_, b_;
  double wa_, wb_;
};

Language make_language(const std::string& code, std::size_t index, const DonorPicker& donors,
                       const std::vector<Language>& earlier, const Inventory& inv, const SynthSpec& spec,
                       WordFactory& factory, const Rng& root) {
  Language lang;
  lang.code = code;
  Rng rng = root.fork("language").fork(index);
  const auto& nouns = inv.by_tag.at("NOUN");
  lang.words.resize(inv.concepts.size());
  for (std::size_t c = 0; c < inv.concepts.size(); ++c) {
    if (const auto d = donors.pick(rng)) {
      lang.words[c] = earlier[*d].words[c];
      continue;
    }
    const std::string& tag = inv.concepts[c].tag;
    const bool can_homograph = tag != "NOUN" && tag != "DET" && tag != "ADP" && tag != "PRON";
    if (can_homograph && rng.bernoulli(spec.homograph_rate)) {
      lang.words[c] = lang.words[nouns[rng.below(nouns.size())]];
    } else if (!earlier.empty() && rng.bernoulli(spec.false_friend_rate)) {
      const Language& other = earlier[rng.below(earlier.size())];
      std::size_t other_c = rng.below(inv.concepts.size());
      while (inv.concepts[other_c].tag == tag) other_c = rng.below(inv.concepts.size());
      lang.words[c] = other.words[other_c];
    } else {
      lang.words[c] = factory.fresh(rng);
    }
  }
  for (std::size_t s = 0; s < kGrammarSwitches; ++s) {
    const auto d = donors.pick(rng);
    lang.grammar[s] = d ? earlier[*d].grammar[s] : rng.bernoulli(0.5);
  }
  lang.bits.resize(kTypologyBits);
  for (std::size_t b = 0; b < kTypologyBits; ++b) {
    const auto d = donors.pick(rng);
    lang.bits[b] = d ? earlier[*d].bits[b] : rng.bernoulli(0.5);
  }
  return lang;
}

struct Token {
  std::size_t concept_id;
  std::string label;
};

class SentenceSampler {
 public:
  SentenceSampler(const Language& lang, const Inventory& inv, const SynthSpec& spec)
      : lang_(lang), inv_(inv), spec_(spec) {}

  Example sample(Rng& rng) const {
    std::vector<Token> toks;
    noun_phrase(rng, toks, true);
    verb_phrase(rng, toks);
    if (rng.bernoulli(0.5)) {
      std::vector<Token> np;
      noun_phrase(rng, np, false);
      const Token adp = word(rng, "ADP");
      if (lang_.grammar[kPrepositions]) {
        toks.push_back(adp);
        toks.insert(toks.end(), np.begin(), np.end());
      } else {
        toks.insert(toks.end(), np.begin(), np.end());
        toks.push_back(adp);
      }
    }
    Example ex;
    ex.language = lang_.code;
    for (const auto& t : toks) {
      ex.tokens.push_back(lang_.words[t.concept_id]);
      ex.labels.push_back(t.label);
    }
    return ex;
  }

 private:
  Token word(Rng& rng, const std::string& tag) const {
    const auto& cum = inv_.zipf.at(tag);
    const double u = rng.uniform() * cum.back();
    const std::size_t r = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    const std::size_t c = inv_.by_tag.at(tag)[std::min(r, cum.size() - 1)];
    return {c, spec_.scheme == TagScheme::token ? tag : "O"};
  }

  void noun_phrase(Rng& rng, std::vector<Token>& out, bool subject) const {
    if (spec_.scheme == TagScheme::bio_span && rng.bernoulli(spec_.entity_rate)) {
      const std::string& type = kEntityTypes[rng.below(kEntityTypes.size())];
      const std::size_t len = 1 + (rng.bernoulli(0.4) ? 1 : 0);
      for (std::size_t i = 0; i < len; ++i) {
        Token t = word(rng, "NAME-" + type);
        t.label = (i == 0 ? "B-" : "I-") + type;
        out.push_back(t);
      }
      return;
    }
    if (subject && rng.bernoulli(0.25)) {
      out.push_back(word(rng, "PRON"));
      return;
    }
    std::vector<Token> core;
    const bool adj = rng.bernoulli(0.4);
    const Token noun = word(rng, "NOUN");
    if (adj && lang_.grammar[kAdjBeforeNoun]) core.push_back(word(rng, "ADJ"));
    core.push_back(noun);
    if (adj && !lang_.grammar[kAdjBeforeNoun]) core.push_back(word(rng, "ADJ"));
    if (rng.bernoulli(0.7)) {
      const Token det = word(rng, "DET");
      if (lang_.grammar[kDetBeforeNoun]) {
        core.insert(core.begin(), det);
      } else {
        core.push_back(det);
      }
    }
    out.insert(out.end(), core.begin(), core.end());
  }

  void verb_phrase(Rng& rng, std::vector<Token>& out) const {
    const Token verb = word(rng, "VERB");
    std::vector<Token> obj;
    if (rng.bernoulli(0.7)) noun_phrase(rng, obj, false);
    if (lang_.grammar[kVerbBeforeObject]) {
      out.push_back(verb);
      out.insert(out.end(), obj.begin(), obj.end());
    } else {
      out.insert(out.end(), obj.begin(), obj.end());
      out.push_back(verb);
    }
  }

  const Language& lang_;
  const Inventory& inv_;
  const SynthSpec& spec_;
};

void apply_label_noise(Example& ex, double rate, TagScheme scheme, Rng& rng) {
  if (rate <= 0.0) return;
  if (scheme == TagScheme::token) {
    for (auto& l : ex.labels) {
      if (!rng.bernoulli(rate)) continue;
      std::string other = l;
      while (other == l) other = kPosTags[rng.below(kPosTags.size())];
      l = other;
    }
    return;
  }
  for (std::size_t i = 0; i < ex.labels.size(); ++i) {
    if (ex.labels[i].rfind("B-", 0) != 0 || !rng.bernoulli(rate)) continue;
    const std::string old = ex.labels[i].substr(2);
    std::string type = old;
    while (type == old) type = kEntityTypes[rng.below(kEntityTypes.size())];
    for (std::size_t j = i; j < ex.labels.size() && (j == i || ex.labels[j] == "I-" + old); ++j)
      ex.labels[j] = (j == i ? "B-" : "I-") + type;
  }
}

std::vector<Example> sample_split(const SentenceSampler& sampler, std::size_t n, Split split, Rng rng) {
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example ex = sampler.sample(rng);
    ex.split = split;
    if (split == Split::unlabeled) ex.labels.clear();
    out.push_back(std::move(ex));
  }
  return out;
}

LanguageProfile profile_of(const Language& lang) {
  LanguageProfile p;
  p.code = lang.code;
  for (bool g : lang.grammar) p.features.push_back(g ? 1.0 : 0.0);
  for (bool b : lang.bits) p.features.push_back(b ? 1.0 : 0.0);
  return p;
}

std::size_t index_of(const std::vector<std::string>& v, const std::string& s) {
  const auto it = std::find(v.begin(), v.end(), s);
  if (it == v.end()) throw DataError("unknown language '" + s + "'");
  return static_cast<std::size_t>(it - v.begin());
}

}  // namespace

void SynthSpec::validate() const {
  const std::size_t n = sources.size();
  if (n == 0) throw DataError("synth spec: no source languages");
  if (std::set<std::string>(sources.begin(), sources.end()).size() != n) {
    throw DataError("synth spec: duplicate source codes");
  }
  if (relatedness.size() != n) throw DataError("synth spec: relatedness must be " + std::to_string(n) + "x" +
                                               std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (relatedness[i].size() != n) throw DataError("synth spec: relatedness row " + std::to_string(i) + " has wrong length");
    for (std::size_t j = 0; j < n; ++j) {
      const double r = relatedness[i][j];
      if (!(r >= 0.0 && r <= 1.0)) throw DataError("synth spec: relatedness values must lie in [0, 1]");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (relatedness[i][i] != 1.0) throw DataError("synth spec: relatedness diagonal must be 1");
    for (std::size_t j = 0; j < n; ++j)
      if (std::abs(relatedness[i][j] - relatedness[j][i]) > 1e-12) throw DataError("relatedness not symmetric");
  }
  if (target) {
    if (std::find(sources.begin(), sources.end(), target->code) != sources.end()) {
      throw DataError("synth spec: target code collides with a source");
    }
    if (target->mix.size() != 2 || target->weights.size() != 2 || target->mix[0] == target->mix[1]) {
      throw DataError("synth spec: target must mix exactly two distinct sources");
    }
    for (const auto& m : target->mix) index_of(sources, m);
    if (target->weights[0] < 0.0 || target->weights[1] < 0.0 || target->weights[0] + target->weights[1] > 1.0 + 1e-12) {
      throw DataError("synth spec: target weights must be nonnegative with sum at most 1");
    }
  }
  if (concepts < 20) throw DataError("synth spec: at least 20 concepts required");
  for (double r : {homograph_rate, false_friend_rate, label_noise, entity_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw DataError("synth spec: rates must lie in [0, 1]");
  }
}

std::vector<std::string> SynthSpec::languages() const {
  std::vector<std::string> out = sources;
  if (target) out.push_back(target->code);
  return out;
}

Json to_json(const SynthSpec& s) {
  Json j{{"seed", s.seed},
         {"scheme", std::string(to_string(s.scheme))},
         {"sources", s.sources},
         {"relatedness", s.relatedness},
         {"concepts", s.concepts},
         {"homograph_rate", s.homograph_rate},
         {"false_friend_rate", s.false_friend_rate},
         {"label_noise", s.label_noise},
         {"entity_rate", s.entity_rate},
         {"n_train", s.n_train},
         {"n_dev", s.n_dev},
         {"n_test", s.n_test},
         {"n_unlabeled", s.n_unlabeled}};
  if (s.target) j["target"] = {{"code", s.target->code}, {"mix", s.target->mix}, {"weights", s.target->weights}};
  return j;
}

SynthSpec synth_spec_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("synth spec: expected a JSON object");
  reject_unknown_keys(j,
                      {"seed", "scheme", "sources", "relatedness", "target", "concepts", "homograph_rate",
                       "false_friend_rate", "label_noise", "entity_rate", "n_train", "n_dev", "n_test", "n_unlabeled"},
                      "synth spec");
  SynthSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    s.scheme = parse_scheme(j.value("scheme", std::string(to_string(s.scheme))));
    s.sources = j.at("sources").get<std::vector<std::string>>();
    s.relatedness = j.at("relatedness").get<std::vector<std::vector<double>>>();
    if (j.contains("target")) {
      const Json& t = j.at("target");
      s.target = SynthTarget{t.at("code").get<std::string>(), t.at("mix").get<std::vector<std::string>>(),
                             t.at("weights").get<std::vector<double>>()};
    }
    s.concepts = j.value("concepts", s.concepts);
    s.homograph_rate = j.value("homograph_rate", s.homograph_rate);
    s.false_friend_rate = j.value("false_friend_rate", s.false_friend_rate);
    s.label_noise = j.value("label_noise", s.label_noise);
    s.entity_rate = j.value("entity_rate", s.entity_rate);
    s.n_train = j.value("n_train", s.n_train);
    s.n_dev = j.value("n_dev", s.n_dev);
    s.n_test = j.value("n_test", s.n_test);
    s.n_unlabeled = j.value("n_unlabeled", s.n_unlabeled);
  } catch (const Json::exception& e) {
    throw DataError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

const LanguageData& Corpus::language(const std::string& code) const {
  for (const auto& l : languages)
    if (l.code == code) return l;
  throw DataError("unknown language '" + code + "'");
}

std::vector<std::string> Corpus::codes() const {
  std::vector<std::string> out;
  for (const auto& l : languages) out.push_back(l.code);
  return out;
}

std::vector<Example> Corpus::all_labeled() const {
  std::vector<Example> out;
  for (const auto& l : languages)
    for (const auto* split : {&l.train, &l.dev, &l.test}) out.insert(out.end(), split->begin(), split->end());
  return out;
}

std::vector<std::vector<std::string>> Corpus::all_sentences() const {
  std::vector<std::vector<std::string>> out;
  for (const auto& l : languages)
    for (const auto* split : {&l.train, &l.dev, &l.test, &l.unlabeled})
      for (const auto& ex : *split) out.push_back(ex.tokens);
  return out;
}

Corpus synth_generate(const SynthSpec& spec) {
  spec.validate();
  const Rng root = Rng(spec.seed).fork("synth");
  const Inventory inv = make_inventory(spec);
  WordFactory factory;
  std::vector<Language> langs;
  const std::size_t n = spec.sources.size();
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<std::pair<std::size_t, double>> ranked;
    for (std::size_t k = 0; k < j; ++k) ranked.emplace_back(k, spec.relatedness[j][k]);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    langs.push_back(make_language(spec.sources[j], j, RelatedDonor(ranked), langs, inv, spec, factory, root));
  }
  if (spec.target) {
    const auto& t = *spec.target;
    const MixtureDonor donor(index_of(spec.sources, t.mix[0]), index_of(spec.sources, t.mix[1]), t.weights[0],
                             t.weights[1]);
    langs.push_back(make_language(t.code, n, donor, langs, inv, spec, factory, root));
  }

  Corpus corpus;
  corpus.scheme = spec.scheme;
  if (spec.target) corpus.target = spec.target->code;
  for (std::size_t j = 0; j < langs.size(); ++j) {
    const SentenceSampler sampler(langs[j], inv, spec);
    const Rng lr = root.fork("sentences").fork(j);
    LanguageData d;
    d.code = langs[j].code;
    d.train = sample_split(sampler, spec.n_train, Split::train, lr.fork("train"));
    d.dev = sample_split(sampler, spec.n_dev, Split::dev, lr.fork("dev"));
    d.test = sample_split(sampler, spec.n_test, Split::test, lr.fork("test"));
    d.unlabeled = sample_split(sampler, spec.n_unlabeled, Split::unlabeled, lr.fork("unlabeled"));
    Rng noise = lr.fork("noise");
    for (auto& ex : d.train) apply_label_noise(ex, spec.label_noise, spec.scheme, noise);
    corpus.languages.push_back(std::move(d));
    corpus.profiles[langs[j].code] = profile_of(langs[j]);
  }

  const std::vector<std::string> codes = spec.languages();
  const std::size_t m = codes.size();
  Tensor genetic = Tensor::zeros(m, m), syntactic = Tensor::zeros(m, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) genetic.at(i, k) = spec.relatedness[i][k];
  if (spec.target) {
    const auto& t = *spec.target;
    const std::size_t a = index_of(spec.sources, t.mix[0]), b = index_of(spec.sources, t.mix[1]);
    for (std::size_t k = 0; k < n; ++k) {
      const double r = std::min(1.0, t.weights[0] * spec.relatedness[a][k] + t.weights[1] * spec.relatedness[b][k]);
      genetic.at(n, k) = r;
      genetic.at(k, n) = r;
    }
    genetic.at(n, n) = 1.0;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < m; ++k)
      syntactic.at(i, k) = feature_similarity(corpus.profiles.at(codes[i]), corpus.profiles.at(codes[k]));
  corpus.genetic = RelatednessMatrix(codes, std::move(genetic));
  corpus.syntactic = RelatednessMatrix(codes, std::move(syntactic));
  corpus.mean = RelatednessMatrix::mean_of(corpus.genetic, corpus.syntactic);
  return corpus;
}

void write_corpus_dir(const std::filesystem::path& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  for (const auto& l : corpus.languages) {
    write_conll(dir / l.code / "train.conll", l.train);
    write_conll(dir / l.code / "dev.conll", l.dev);
    write_conll(dir / l.code / "test.conll", l.test);
    write_corpus(dir / l.code / "unlabeled.txt", l.unlabeled);
  }
  write_langvec(dir / "langvec.tsv", corpus.profiles);
  write_relatedness(dir / "relatedness_genetic.tsv", corpus.genetic);
  write_relatedness(dir / "relatedness_syntactic.tsv", corpus.syntactic);
  write_relatedness(dir / "relatedness_mean.tsv", corpus.mean);
  const Json meta{{"scheme", std::string(to_string(corpus.scheme))},
                  {"languages", corpus.codes()},
                  {"target", corpus.target.empty() ? Json(nullptr) : Json(corpus.target)}};
  write_text_file(dir / "corpus.json", meta.dump(2) + "\n");
}

Corpus read_corpus_dir(const std::filesystem::path& dir) {
  Json meta;
  try {
    meta = Json::parse(read_text_file(dir / "corpus.json"));
  } catch (const Json::exception& e) {
    throw DataError((dir / "corpus.json").string() + ": " + e.what());
  }
  Corpus c;
  c.scheme = parse_scheme(meta.at("scheme").get<std::string>());
  if (meta.contains("target") && !meta.at("target").is_null()) c.target = meta.at("target").get<std::string>();
  for (const auto& code : meta.at("languages").get<std::vector<std::string>>()) {
    LanguageData d;
    d.code = code;
    d.train = read_conll(dir / code / "train.conll", ConllFormat::two_col, code, Split::train);
    d.dev = read_conll(dir / code / "dev.conll", ConllFormat::two_col, code, Split::dev);
    d.test = read_conll(dir / code / "test.conll", ConllFormat::two_col, code, Split::test);
    d.unlabeled = read_corpus(dir / code / "unlabeled.txt", code);
    c.languages.push_back(std::move(d));
  }
  c.profiles = read_langvec(dir / "langvec.tsv");
  c.genetic = read_relatedness(dir / "relatedness_genetic.tsv");
  c.syntactic = read_relatedness(dir / "relatedness_syntactic.tsv");
  c.mean = read_relatedness(dir / "relatedness_mean.tsv");
  return c;
}

double lexical_iou(const LanguageData& a, const LanguageData& b) {
  auto types = [](const LanguageData& d) {
    std::set<std::string> s;
    for (const auto* split : {&d.train, &d.dev, &d.test, &d.unlabeled})
      for (const auto& ex : *split) s.insert(ex.tokens.begin(), ex.tokens.end());
    return s;
  };
  const auto sa = types(a), sb = types(b);
  std::size_t inter = 0;
  for (const auto& w : sa) inter += sb.contains(w) ? 1 : 0;
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace polyadapt
