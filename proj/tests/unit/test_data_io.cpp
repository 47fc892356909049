#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "polyadapt/checkpoint.hpp"
#include "polyadapt/error.hpp"
#include "polyadapt/metrics.hpp"
#include "polyadapt/synth.hpp"

using namespace polyadapt;
using namespace polyadapt::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir = fs::temp_directory_path() / "polyadapt_tests" / (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::set<std::string> word_types(const LanguageData& l) {
  std::set<std::string> out;
  for (const auto* split : {&l.train, &l.dev, &l.test, &l.unlabeled})
    for (const auto& ex : *split) out.insert(ex.tokens.begin(), ex.tokens.end());
  return out;
}

SynthSpec two_source_spec(double r) {
  SynthSpec s;
  s.seed = 11;
  s.sources = {"xa", "xb"};
  s.relatedness = {{1.0, r}, {r, 1.0}};
  s.concepts = 60;
  s.n_train = 30;
  s.n_dev = 5;
  s.n_test = 5;
  s.n_unlabeled = 400;
  return s;
}

const fs::path kGoldenAdapter = fs::path(POLYADAPT_TEST_DATA) / "adapter_v1.ckpt";
// Recorded from the first passing run.
constexpr std::uint64_t kGoldenAdapterChecksum = 341727425502960340ULL;

LanguageAdapter golden_adapter() {
  LanguageAdapter la = make_language_adapter("gg", 4, 2, 2, 11);
  perturb(la.adapter.parameters(), 0.25, 12);
  return la;
}

}  // namespace

TEST(Conll, ReadsTwoColumnFile) {
  const auto dir = scratch_dir();
  const auto p = write_file(dir / "a.conll", "the\tDET\ndog\tNOUN\n\n\nbarks\tVERB\r\n\n");
  const auto ex = read_conll(p, ConllFormat::two_col, "en", Split::dev);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].tokens, (std::vector<std::string>{"the", "dog"}));
  EXPECT_EQ(ex[0].labels, (std::vector<std::string>{"DET", "NOUN"}));
  EXPECT_EQ(ex[1].tokens, (std::vector<std::string>{"barks"}));
  EXPECT_EQ(ex[1].labels, (std::vector<std::string>{"VERB"}));
  EXPECT_EQ(ex[1].language, "en");
  EXPECT_EQ(ex[1].split, Split::dev);
}

TEST(Conll, ReadsConlluSkippingRangesAndEmptyNodes) {
  const auto dir = scratch_dir();
  const std::string text =
      "# sent_id = 1\n"
      "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "1\tde\tde\tADP\t_\t_\t0\t_\t_\t_\n"
      "2\tel\tel\tDET\t_\t_\t0\t_\t_\t_\n"
      "2.1\tx\tx\tX\t_\t_\t_\t_\t_\t_\n"
      "3\tpan\tpan\tNOUN\t_\t_\t0\t_\t_\t_\n"
      "\n";
  const auto ex = read_conll(write_file(dir / "a.conllu", text), ConllFormat::conllu, "es", Split::train);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].tokens, (std::vector<std::string>{"de", "el", "pan"}));
  EXPECT_EQ(ex[0].labels, (std::vector<std::string>{"ADP", "DET", "NOUN"}));
}

TEST(Conll, RaggedLineReportsFileAndLine) {
  const auto dir = scratch_dir();
  const auto p = write_file(dir / "bad.conll", "a\tDET\nb\tNOUN\n\nc NOUN\n");
  const std::string msg = error_of([&] { read_conll(p, ConllFormat::two_col, "en", Split::train); });
  EXPECT_NE(msg.find("bad.conll:4:"), std::string::npos) << msg;
  EXPECT_THROW(read_conll(p, ConllFormat::two_col, "en", Split::train), DataError);
}

TEST(Conll, EmptyFileGivesNoSentences) {
  const auto dir = scratch_dir();
  EXPECT_TRUE(read_conll(write_file(dir / "e.conll", ""), ConllFormat::two_col, "en", Split::test).empty());
  EXPECT_THROW(read_conll(dir / "missing.conll", ConllFormat::two_col, "en", Split::test), DataError);
}

TEST(Conll, WriteReadRoundTrip) {
  const auto dir = scratch_dir();
  const Corpus c = synth_generate(two_source_spec(0.5));
  const auto& src = c.language("xa").train;
  write_conll(dir / "t.conll", src);
  const auto back = read_conll(dir / "t.conll", ConllFormat::two_col, "xa", Split::train);
  ASSERT_EQ(back.size(), src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    EXPECT_EQ(back[i].tokens, src[i].tokens);
    EXPECT_EQ(back[i].labels, src[i].labels);
  }
}

TEST(Langvec, MissingValuesReadAsZero) {
  std::string row = "xx\t1,--";
  for (std::size_t i = 2; i < kTypologyDim; ++i) row += ",0";
  const auto m = parse_langvec(row + "\n");
  ASSERT_EQ(m.size(), 1u);
  const auto& f = m.at("xx").features;
  ASSERT_EQ(f.size(), kTypologyDim);
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[1], 0.0);
}

TEST(Langvec, AllZeroProfileIsValid) {
  std::string row = "zz\t0";
  for (std::size_t i = 1; i < kTypologyDim; ++i) row += ",0";
  const auto m = parse_langvec(row + "\n");
  EXPECT_EQ(m.at("zz").features, std::vector<double>(kTypologyDim, 0.0));
}

TEST(Langvec, WrongDimensionNamesLanguage) {
  const std::string msg = error_of([] { parse_langvec("qq\t1,0,1\n"); });
  EXPECT_NE(msg.find("'qq'"), std::string::npos) << msg;
  EXPECT_THROW(parse_langvec("qq\t1,0,1\n"), DataError);
  EXPECT_THROW(parse_langvec("qq 1,0\n"), DataError);
}

TEST(Langvec, RoundTrip) {
  const auto dir = scratch_dir();
  ProfileMap m;
  for (const char* code : {"aa", "bb", "cc"}) m[code] = random_profile(code, std::hash<std::string>{}(code));
  write_langvec(dir / "l.tsv", m);
  EXPECT_EQ(read_langvec(dir / "l.tsv"), m);
  EXPECT_EQ(parse_langvec(format_langvec(m)), m);
}

TEST(Relatedness, FileRoundTripAndValidation) {
  const auto dir = scratch_dir();
  const RelatednessMatrix r({"a", "b"}, Tensor::from_rows({{1.0, 0.25}, {0.25, 1.0}}));
  write_relatedness(dir / "r.tsv", r);
  const auto back = read_relatedness(dir / "r.tsv");
  EXPECT_EQ(back.codes(), r.codes());
  EXPECT_EQ(back.at("a", "b"), 0.25);
  EXPECT_THROW(RelatednessMatrix({"a", "b"}, Tensor::from_rows({{1.0, 0.2}, {0.3, 1.0}})), DataError);
  EXPECT_THROW(RelatednessMatrix({"a", "b"}, Tensor::from_rows({{1.0, 1.5}, {1.5, 1.0}})), DataError);
}

TEST(Bio, RepairPromotesStrayInside) {
  const std::vector<std::string> t{"I-PER", "O", "B-LOC", "I-LOC", "I-PER"};
  EXPECT_EQ(repair_bio(t), (std::vector<std::string>{"B-PER", "O", "B-LOC", "I-LOC", "B-PER"}));
  EXPECT_THROW(repair_bio(t, true), DataError);
  const std::vector<std::string> ok{"B-PER", "I-PER", "O"};
  EXPECT_EQ(repair_bio(ok, true), ok);
  EXPECT_THROW(repair_bio(std::vector<std::string>{"X-PER"}), DataError);
}

TEST(Vocab, SpecialsAndUnknownFallback) {
  const std::vector<std::vector<std::string>> s{{"a", "b"}, {"b", "c"}};
  const Vocab v = Vocab::build(s, 10);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(v.id("a"), 2);
  EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
  EXPECT_THROW(Vocab::build(s, 4), DataError);
  EXPECT_THROW(Vocab::from_words({"a", "b"}), DataError);
}

TEST(Synth, IdentityRelatednessGivesDisjointVocabularies) {
  const Corpus c = synth_generate(two_source_spec(0.0));
  EXPECT_EQ(lexical_iou(c.language("xa"), c.language("xb")), 0.0);
  const auto a = word_types(c.language("xa")), b = word_types(c.language("xb"));
  for (const auto& w : a) EXPECT_FALSE(b.contains(w)) << w;
}

TEST(Synth, FullRelatednessCopiesTheLanguage) {
  const Corpus c = synth_generate(two_source_spec(1.0));
  EXPECT_EQ(c.profiles.at("xa").features, c.profiles.at("xb").features);
  EXPECT_GT(lexical_iou(c.language("xa"), c.language("xb")), 0.9);
  const auto a = word_types(c.language("xa"));
  for (const auto& w : word_types(c.language("xb"))) EXPECT_TRUE(a.contains(w)) << w;
}

TEST(Synth, LexicalOverlapTracksPlantedRelatedness) {
  SynthSpec s;
  s.seed = 4;
  s.sources = {"p", "q", "r", "s"};
  s.relatedness = {{1.0, 0.8, 0.2, 0.05}, {0.8, 1.0, 0.4, 0.1}, {0.2, 0.4, 1.0, 0.6}, {0.05, 0.1, 0.6, 1.0}};
  s.concepts = 200;
  s.n_unlabeled = 1500;
  const Corpus c = synth_generate(s);
  std::vector<double> planted, iou;
  for (std::size_t i = 0; i < s.sources.size(); ++i)
    for (std::size_t j = i + 1; j < s.sources.size(); ++j) {
      planted.push_back(s.relatedness[i][j]);
      iou.push_back(lexical_iou(c.language(s.sources[i]), c.language(s.sources[j])));
    }
  ASSERT_EQ(planted.size(), 6u);
  EXPECT_GT(pearson(planted, iou), 0.9);
}

TEST(Synth, Deterministic) {
  const auto dir = scratch_dir();
  SynthSpec s = two_source_spec(0.4);
  s.target = SynthTarget{"tt", {"xa", "xb"}, {0.5, 0.3}};
  s.scheme = TagScheme::bio_span;
  s.label_noise = 0.1;
  write_corpus_dir(dir / "a", synth_generate(s));
  write_corpus_dir(dir / "b", synth_generate(s));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / fs::relative(e.path(), dir / "a"))) << e.path();
  }
  EXPECT_EQ(files, 3u * 4u + 5u);
  s.seed += 1;
  write_corpus_dir(dir / "c", synth_generate(s));
  EXPECT_NE(slurp(dir / "a" / "xa" / "train.conll"), slurp(dir / "c" / "xa" / "train.conll"));
}

TEST(Synth, CorpusDirRoundTrip) {
  const auto dir = scratch_dir();
  SynthSpec s = two_source_spec(0.4);
  s.target = SynthTarget{"tt", {"xa", "xb"}, {0.5, 0.3}};
  const Corpus c = synth_generate(s);
  write_corpus_dir(dir, c);
  const Corpus back = read_corpus_dir(dir);
  EXPECT_EQ(back.codes(), c.codes());
  EXPECT_EQ(back.target, "tt");
  EXPECT_EQ(back.profiles, c.profiles);
  EXPECT_EQ(back.language("tt").unlabeled.size(), c.language("tt").unlabeled.size());
  EXPECT_EQ(back.language("xb").test[3].labels, c.language("xb").test[3].labels);
  EXPECT_NEAR(back.genetic.at("tt", "xa"), c.genetic.at("tt", "xa"), 1e-12);
}

TEST(Synth, SpanSchemeEmitsValidBio) {
  SynthSpec s = two_source_spec(0.3);
  s.scheme = TagScheme::bio_span;
  const Corpus c = synth_generate(s);
  std::size_t spans = 0;
  for (const auto& ex : c.all_labeled()) {
    EXPECT_NO_THROW(repair_bio(ex.labels, true));
    spans += decode_spans(ex.labels).size();
  }
  EXPECT_GT(spans, 0u);
}

TEST(Synth, SpecValidation) {
  SynthSpec s = two_source_spec(0.3);
  s.relatedness[0][1] = 0.2;
  EXPECT_EQ(error_of([&] { synth_generate(s); }), "relatedness not symmetric");
  s = two_source_spec(0.3);
  s.target = SynthTarget{"tt", {"xa", "xa"}, {0.5, 0.3}};
  EXPECT_THROW(s.validate(), DataError);
  s = two_source_spec(0.3);
  s.target = SynthTarget{"tt", {"xa", "xb"}, {0.8, 0.3}};
  EXPECT_THROW(s.validate(), DataError);
  s = two_source_spec(0.3);
  s.concepts = 5;
  EXPECT_THROW(s.validate(), DataError);
}

TEST(Container, ByteLayoutMatchesHandEncoding) {
  const auto dir = scratch_dir();
  Parameter p{"w", Tensor::from_rows({{1.5, -2.0}})};
  const Parameter* ps[] = {&p};
  const Json header{{"kind", "x"}};
  write_container(dir / "c.bin", header, ps);

  std::string want = "PADAPTCK";
  put_le<std::uint32_t>(want, 1);
  const std::string h = header.dump();
  put_le<std::uint64_t>(want, h.size());
  want += h;
  put_le<std::uint64_t>(want, 1);
  put_le<std::uint32_t>(want, 1);
  want += "w";
  put_le<std::uint32_t>(want, 2);
  put_le<std::uint64_t>(want, 1);
  put_le<std::uint64_t>(want, 2);
  put_le<std::uint64_t>(want, std::bit_cast<std::uint64_t>(1.5));
  put_le<std::uint64_t>(want, std::bit_cast<std::uint64_t>(-2.0));
  EXPECT_EQ(slurp(dir / "c.bin"), want);
}

TEST(Container, VersionAndMagicChecked) {
  const auto dir = scratch_dir();
  Parameter p{"w", Tensor::scalar(1.0)};
  const Parameter* ps[] = {&p};
  write_container(dir / "c.bin", Json::object(), ps);
  std::string bytes = slurp(dir / "c.bin");
  bytes[8] = 2;
  write_file(dir / "v2.bin", bytes);
  EXPECT_NE(error_of([&] { read_container(dir / "v2.bin"); }).find("checkpoint version 2, expected 1"), std::string::npos);
  bytes[0] = 'X';
  write_file(dir / "bad.bin", bytes);
  EXPECT_THROW(read_container(dir / "bad.bin"), DataError);
  write_file(dir / "short.bin", slurp(dir / "c.bin").substr(0, 30));
  EXPECT_THROW(read_container(dir / "short.bin"), DataError);
}

TEST(Container, MissingAndMisshapedTensorsNamed) {
  const auto dir = scratch_dir();
  Parameter a{"a", Tensor::zeros(1, 2)};
  const Parameter* ps[] = {&a};
  write_container(dir / "c.bin", Json::object(), ps);
  const Container c = read_container(dir / "c.bin");
  Parameter b{"b", Tensor::zeros(1, 2)};
  Parameter* missing[] = {&b};
  EXPECT_NE(error_of([&] { assign_tensors(c, missing); }).find("missing tensor 'b'"), std::string::npos);
  Parameter a2{"a", Tensor::zeros(2, 2)};
  Parameter* wrong[] = {&a2};
  EXPECT_NE(error_of([&] { assign_tensors(c, wrong); }).find("tensor 'a'"), std::string::npos);
}

TEST(Checkpoint, TaskModelRoundTrip) {
  const auto dir = scratch_dir();
  const TaskModel m = tiny_model(3, {.head_noise = 0.2});
  save_checkpoint(dir / "m.ckpt", m);
  const EncoderConfig cfg = m.config.encoder;
  const TaskModel back = load_checkpoint(dir / "m.ckpt", &cfg);
  const auto a = std::as_const(m).parameters(), b = std::as_const(back).parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(vals(a[i]->value), vals(b[i]->value)) << a[i]->name;
    EXPECT_EQ(a[i]->trainable, b[i]->trainable) << a[i]->name;
  }
  const auto ids = sentence(6, 3);
  EXPECT_EQ(vals(zgul_forward(m, ids, "tgt")), vals(zgul_forward(back, ids, "tgt")));
  save_checkpoint(dir / "m2.ckpt", back);
  EXPECT_EQ(file_checksum(dir / "m.ckpt"), file_checksum(dir / "m2.ckpt"));
}

TEST(Checkpoint, MismatchedDimensionsRejected) {
  const auto dir = scratch_dir();
  save_checkpoint(dir / "m.ckpt", tiny_model(2));
  const EncoderConfig other = tiny_encoder_config(12, 2);
  const std::string msg = error_of([&] { load_checkpoint(dir / "m.ckpt", &other); });
  EXPECT_NE(msg.find("d=8"), std::string::npos) << msg;
  EXPECT_NE(msg.find("expected d=12"), std::string::npos) << msg;
  EXPECT_THROW(load_encoder(dir / "m.ckpt"), DataError);
}

TEST(Checkpoint, EncoderAndAdapterRoundTrip) {
  const auto dir = scratch_dir();
  Encoder e(tiny_encoder_config(), 4);
  const Vocab v = Vocab::from_words({"<unk>", "<mask>", "x", "y"});
  save_encoder(dir / "e.ckpt", e, v);
  Vocab v2;
  const Encoder e2 = load_encoder(dir / "e.ckpt", &v2);
  EXPECT_EQ(v2.words(), v.words());
  EXPECT_EQ(parameter_checksum(std::as_const(e).parameters()), parameter_checksum(std::as_const(e2).parameters()));

  const LanguageAdapter la = golden_adapter();
  save_language_adapter(dir / "a.ckpt", la);
  const LanguageAdapter la2 = load_language_adapter(dir / "a.ckpt");
  EXPECT_EQ(la2.code, "gg");
  EXPECT_EQ(parameter_checksum(std::as_const(la.adapter).parameters()),
            parameter_checksum(std::as_const(la2.adapter).parameters()));
}

TEST(Checkpoint, GoldenAdapterFileLoads) {
  ASSERT_TRUE(fs::exists(kGoldenAdapter));
  EXPECT_EQ(file_checksum(kGoldenAdapter), kGoldenAdapterChecksum);
  const LanguageAdapter la = load_language_adapter(kGoldenAdapter);
  const LanguageAdapter want = golden_adapter();
  const auto a = std::as_const(la.adapter).parameters(), b = std::as_const(want.adapter).parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(vals(a[i]->value), vals(b[i]->value)) << a[i]->name;
  const auto dir = scratch_dir();
  save_language_adapter(dir / "again.ckpt", want);
  EXPECT_EQ(slurp(dir / "again.ckpt"), slurp(kGoldenAdapter));
}
