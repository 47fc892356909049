#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace polyadapt {

enum class Split { train, dev, test, unlabeled };
enum class TagScheme { token, bio_span };
enum class ConllFormat { two_col, conllu };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);
std::string_view to_string(TagScheme s);
TagScheme parse_scheme(std::string_view s);

// One sentence. Unlabeled sentences carry an empty label vector.
struct Example {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::string language;
  Split split = Split::train;

  bool labeled() const { return !labels.empty(); }
};

// Word-level vocabulary with two reserved ids.
class Vocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kMask = 1;
  static constexpr int kNumSpecial = 2;

  Vocab();
  // Words in first-seen order over `corpora`. Throws DataError if the distinct
  // word count plus specials exceeds `max_size`.
  static Vocab build(std::span<const std::vector<std::string>> sentences, std::size_t max_size);
  static Vocab from_words(std::vector<std::string> words);

  int id(std::string_view word) const;  // <unk> fallback
  const std::string& word(int id) const;
  bool contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Bidirectional tag <-> id map.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::vector<std::string> tags, TagScheme scheme);
  static LabelMap build(std::span<const Example> examples, TagScheme scheme);

  int id(std::string_view tag) const;  // throws DataError on unknown tag
  const std::string& tag(int id) const;
  std::size_t size() const { return tags_.size(); }
  TagScheme scheme() const { return scheme_; }
  const std::vector<std::string>& tags() const { return tags_; }

  std::vector<int> encode(std::span<const std::string> tags) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

 private:
  std::vector<std::string> tags_;
  std::unordered_map<std::string, int> index_;
  TagScheme scheme_ = TagScheme::token;
};

// Repairs "I-X" that does not continue a B-X/I-X run by promoting it to "B-X".
// With strict = true such tags throw DataError instead.
std::vector<std::string> repair_bio(std::span<const std::string> tags, bool strict = false);

// Two-column CoNLL (token<TAB>tag, blank line between sentences) or the
// CoNLL-U subset (FORM and UPOS columns; comments, multiword ranges and empty
// nodes skipped). Errors carry the file name and line number.
std::vector<Example> read_conll(const std::filesystem::path& path, ConllFormat format,
                                const std::string& language, Split split);
void write_conll(const std::filesystem::path& path, std::span<const Example> examples);

// One whitespace-tokenized sentence per non-empty line.
std::vector<Example> read_corpus(const std::filesystem::path& path, const std::string& language);
void write_corpus(const std::filesystem::path& path, std::span<const Example> examples);

std::vector<std::vector<int>> encode_corpus(const Vocab& vocab, std::span<const Example> examples);

// Token and label ids of one labeled sentence.
struct EncodedExample {
  std::vector<int> ids;
  std::vector<int> labels;
  std::string language;
  Split split = Split::train;
};

std::vector<EncodedExample> encode_examples(const Vocab& vocab, const LabelMap& labels,
                                            std::span<const Example> examples);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace polyadapt
