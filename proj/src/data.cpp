#include "polyadapt/data.hpp"

#include <fstream>
#include <sstream>

#include "polyadapt/error.hpp"

namespace polyadapt {

namespace {

std::vector<std::string> split_on(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool is_blank(std::string_view line) { return line.find_first_not_of(" \t") == std::string_view::npos; }

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t line_no, const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
    case Split::unlabeled: return "unlabeled";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  if (s == "unlabeled") return Split::unlabeled;
  throw DataError("unknown split '" + std::string(s) + "'");
}

std::string_view to_string(TagScheme s) { return s == TagScheme::token ? "token" : "bio_span"; }

TagScheme parse_scheme(std::string_view s) {
  if (s == "token" || s == "pos") return TagScheme::token;
  if (s == "bio_span" || s == "bio" || s == "ner") return TagScheme::bio_span;
  throw DataError("unknown tag scheme '" + std::string(s) + "'");
}

Vocab::Vocab() : words_{"<unk>", "<mask>"} {
  index_.emplace("<unk>", kUnk);
  index_.emplace("<mask>", kMask);
}

Vocab Vocab::build(std::span<const std::vector<std::string>> sentences, std::size_t max_size) {
  Vocab v;
  for (const auto& sent : sentences) {
    for (const auto& w : sent) {
      if (v.index_.contains(w)) continue;
      v.index_.emplace(w, static_cast<int>(v.words_.size()));
      v.words_.push_back(w);
    }
  }
  if (v.words_.size() > max_size) {
    throw DataError("vocabulary of corpus (" + std::to_string(v.words_.size()) + " entries) exceeds vocab_size " +
                    std::to_string(max_size));
  }
  return v;
}

Vocab Vocab::from_words(std::vector<std::string> words) {
  if (words.size() < 2 || words[0] != "<unk>" || words[1] != "<mask>") {
    throw DataError("vocabulary must start with <unk> and <mask>");
  }
  Vocab v;
  v.words_ = std::move(words);
  v.index_.clear();
  for (std::size_t i = 0; i < v.words_.size(); ++i) {
    if (!v.index_.emplace(v.words_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary entry '" + v.words_[i] + "'");
    }
  }
  return v;
}

int Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) throw Error("vocabulary id out of range");
  return words_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view word) const { return index_.contains(std::string(word)); }

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

LabelMap::LabelMap(std::vector<std::string> tags, TagScheme scheme) : tags_(std::move(tags)), scheme_(scheme) {
  for (std::size_t i = 0; i < tags_.size(); ++i) {
    if (!index_.emplace(tags_[i], static_cast<int>(i)).second) throw DataError("duplicate tag '" + tags_[i] + "'");
  }
}

LabelMap LabelMap::build(std::span<const Example> examples, TagScheme scheme) {
  std::vector<std::string> tags;
  std::unordered_map<std::string, int> seen;
  if (scheme == TagScheme::bio_span) {
    tags.push_back("O");
    seen.emplace("O", 0);
  }
  for (const auto& ex : examples) {
    for (const auto& t : ex.labels) {
      if (seen.emplace(t, 0).second) tags.push_back(t);
    }
  }
  return LabelMap(std::move(tags), scheme);
}

int LabelMap::id(std::string_view tag) const {
  auto it = index_.find(std::string(tag));
  if (it == index_.end()) throw DataError("unknown tag '" + std::string(tag) + "'");
  return it->second;
}

const std::string& LabelMap::tag(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tags_.size()) throw Error("label id out of range");
  return tags_[static_cast<std::size_t>(id)];
}

std::vector<int> LabelMap::encode(std::span<const std::string> tags) const {
  std::vector<int> ids;
  ids.reserve(tags.size());
  for (const auto& t : tags) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> LabelMap::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(tag(i));
  return out;
}

std::vector<std::string> repair_bio(std::span<const std::string> tags, bool strict) {
  std::vector<std::string> out(tags.begin(), tags.end());
  std::string prev_type;  // entity type of the previous token, empty for O
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::string& t = out[i];
    if (t == "O") {
      prev_type.clear();
      continue;
    }
    if (t.size() < 3 || (t[0] != 'B' && t[0] != 'I') || t[1] != '-') {
      throw DataError("malformed BIO tag '" + t + "' at position " + std::to_string(i));
    }
    const std::string type = t.substr(2);
    if (t[0] == 'I' && prev_type != type) {
      if (strict) throw DataError("'" + t + "' at position " + std::to_string(i) + " does not continue a span");
      out[i] = "B-" + type;
    }
    prev_type = type;
  }
  return out;
}

std::vector<Example> read_conll(const std::filesystem::path& path, ConllFormat format, const std::string& language,
                                Split split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Example> out;
  Example cur;
  cur.language = language;
  cur.split = split;
  auto flush = [&] {
    if (!cur.tokens.empty()) out.push_back(cur);
    cur.tokens.clear();
    cur.labels.clear();
  };
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_cr(raw);
    if (is_blank(line)) {
      flush();
      continue;
    }
    if (format == ConllFormat::two_col) {
      const auto cols = split_on(line, '\t');
      if (cols.size() != 2 || cols[0].empty() || cols[1].empty()) {
        fail_at(path, line_no, "expected token<TAB>tag, got " + std::to_string(cols.size()) + " column(s)");
      }
      cur.tokens.push_back(cols[0]);
      cur.labels.push_back(cols[1]);
    } else {
      if (line[0] == '#') continue;
      const auto cols = split_on(line, '\t');
      if (cols.size() != 10) fail_at(path, line_no, "expected 10 CoNLL-U columns, got " + std::to_string(cols.size()));
      const std::string& id = cols[0];
      if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
      if (id.empty() || id.find_first_not_of("0123456789") != std::string::npos) {
        fail_at(path, line_no, "bad token id '" + id + "'");
      }
      cur.tokens.push_back(cols[1]);
      cur.labels.push_back(cols[3]);
    }
  }
  flush();
  return out;
}

void write_conll(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ostringstream os;
  for (const auto& ex : examples) {
    if (ex.tokens.size() != ex.labels.size()) throw DataError("cannot write unlabeled example as CoNLL");
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) os << ex.tokens[i] << '\t' << ex.labels[i] << '\n';
    os << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<Example> read_corpus(const std::filesystem::path& path, const std::string& language) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Example> out;
  std::string raw;
  while (std::getline(in, raw)) {
    auto toks = split_whitespace(strip_cr(raw));
    if (toks.empty()) continue;
    Example ex;
    ex.tokens = std::move(toks);
    ex.language = language;
    ex.split = Split::unlabeled;
    out.push_back(std::move(ex));
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ostringstream os;
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) os << (i ? " " : "") << ex.tokens[i];
    os << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<std::vector<int>> encode_corpus(const Vocab& vocab, std::span<const Example> examples) {
  std::vector<std::vector<int>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(vocab.encode(ex.tokens));
  return out;
}

std::vector<EncodedExample> encode_examples(const Vocab& vocab, const LabelMap& labels,
                                            std::span<const Example> examples) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    if (!ex.labeled()) throw DataError("unlabeled sentence in a labeled split (" + ex.language + ")");
    if (ex.labels.size() != ex.tokens.size()) throw DataError("token/label count mismatch (" + ex.language + ")");
    out.push_back({vocab.encode(ex.tokens), labels.encode(ex.labels), ex.language, ex.split});
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace polyadapt
