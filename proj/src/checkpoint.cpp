#include "polyadapt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "polyadapt/error.hpp"

namespace polyadapt {

namespace {

constexpr std::array<char, 8> kMagic{'P', 'A', 'D', 'A', 'P', 'T', 'C', 'K'};
// Upper bounds that reject corrupt length fields before allocating.
constexpr std::uint64_t kMaxHeaderBytes = 1ULL << 30;
constexpr std::uint64_t kMaxElements = 1ULL << 31;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <class T>
  void uint(T v) {
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os_.write(reinterpret_cast<const char*>(b), sizeof(T));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string origin) : is_(is), origin_(std::move(origin)) {}
  template <class T>
  T uint() {
    unsigned char b[sizeof(T)];
    read(reinterpret_cast<char*>(b), sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  void read(char* dst, std::size_t n) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw DataError(origin_ + ": truncated checkpoint");
  }
  std::istream& is_;
  std::string origin_;
};

Json profiles_to_json(const ProfileMap& profiles) {
  Json j = Json::object();
  for (const auto& [code, p] : profiles) j[code] = p.features;
  return j;
}

ProfileMap profiles_from_json(const Json& j) {
  ProfileMap out;
  for (const auto& [code, feats] : j.items()) out[code] = LanguageProfile{code, feats.get<std::vector<double>>()};
  return out;
}

void check_kind(const Container& c, const std::string& kind, const std::filesystem::path& path) {
  if (c.header.value("kind", std::string{}) != kind) {
    throw DataError(path.string() + ": not a " + kind + " checkpoint");
  }
}

}  // namespace

void write_container(const std::filesystem::path& path, const Json& header,
                     std::span<const Parameter* const> tensors) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  Writer w(os);
  w.bytes({kMagic.data(), kMagic.size()});
  w.uint<std::uint32_t>(kCheckpointVersion);
  const std::string h = header.dump();
  w.uint<std::uint64_t>(h.size());
  w.bytes(h);
  w.uint<std::uint64_t>(tensors.size());
  for (const Parameter* p : tensors) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p->name.size()));
    w.bytes(p->name);
    const auto& shape = p->value.shape();
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) w.uint<std::uint64_t>(d);
    for (double v : p->value.data()) w.f64(v);
  }
  if (!os) throw DataError("write failed for " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  Reader r(is, path.string());
  const std::string magic = r.bytes(kMagic.size());
  if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto header_len = r.uint<std::uint64_t>();
  if (header_len > kMaxHeaderBytes) throw DataError(path.string() + ": corrupt header length");
  Container c;
  try {
    c.header = Json::parse(r.bytes(header_len));
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  }
  const auto count = r.uint<std::uint64_t>();
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::string name = r.bytes(r.uint<std::uint32_t>());
    const auto ndim = r.uint<std::uint32_t>();
    std::vector<std::size_t> shape(ndim);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = r.uint<std::uint64_t>();
      n *= d;
      if (n > kMaxElements) throw DataError(path.string() + ": tensor '" + name + "' too large");
    }
    std::vector<double> data(n);
    for (double& v : data) v = r.f64();
    if (!c.tensors.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw DataError(path.string() + ": duplicate tensor '" + name + "'");
    }
  }
  return c;
}

void assign_tensors(const Container& c, std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    const auto it = c.tensors.find(p->name);
    if (it == c.tensors.end()) throw DataError("checkpoint is missing tensor '" + p->name + "'");
    if (it->second.shape() != p->value.shape()) {
      throw DataError("tensor '" + p->name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                      shape_string(p->value.shape()));
    }
    p->value = it->second;
  }
}

void save_encoder(const std::filesystem::path& path, const Encoder& encoder, const Vocab& vocab) {
  const Json header{{"kind", "encoder"}, {"encoder", to_json(encoder.config())}, {"vocab", vocab.words()}};
  write_container(path, header, encoder.parameters());
}

Encoder load_encoder(const std::filesystem::path& path, Vocab* vocab) {
  const Container c = read_container(path);
  check_kind(c, "encoder", path);
  Encoder enc(encoder_config_from_json(c.header.at("encoder")), 0);
  assign_tensors(c, enc.parameters());
  if (vocab) *vocab = Vocab::from_words(c.header.at("vocab").get<std::vector<std::string>>());
  return enc;
}

void save_language_adapter(const std::filesystem::path& path, const LanguageAdapter& la) {
  const Json header{{"kind", "language_adapter"},
                    {"code", la.code},
                    {"hidden", la.adapter.hidden()},
                    {"n_layers", la.adapter.n_layers()},
                    {"reduction_factor", la.adapter.reduction_factor()}};
  write_container(path, header, la.adapter.parameters());
}

LanguageAdapter load_language_adapter(const std::filesystem::path& path) {
  const Container c = read_container(path);
  check_kind(c, "language_adapter", path);
  const Json& h = c.header;
  LanguageAdapter la = make_language_adapter(h.at("code").get<std::string>(), h.at("hidden").get<std::size_t>(),
                                             h.at("n_layers").get<std::size_t>(),
                                             h.at("reduction_factor").get<std::size_t>(), 0);
  assign_tensors(c, la.adapter.parameters());
  return la;
}

void save_checkpoint(const std::filesystem::path& path, const TaskModel& model) {
  Json sources = Json::array();
  std::size_t la_rf = 0;
  const auto members = model.bank.members();
  for (std::size_t i = 0; i < members.size(); ++i) {
    la_rf = members[i]->adapter.reduction_factor();
    if (!model.bank.has_target() || i + 1 < members.size()) sources.push_back(members[i]->code);
  }
  const Json header{{"kind", "task_model"},
                    {"model", to_json(model.config)},
                    {"labels", to_json(model.labels)},
                    {"bank", {{"sources", sources},
                              {"target", model.bank.has_target() ? Json(members.back()->code) : Json(nullptr)},
                              {"reduction_factor", la_rf}}},
                    {"profiles", profiles_to_json(model.profiles)},
                    {"vocab", model.vocab.words()}};
  write_container(path, header, model.parameters());
}

TaskModel load_checkpoint(const std::filesystem::path& path, const EncoderConfig* expected) {
  const Container c = read_container(path);
  check_kind(c, "task_model", path);
  try {
    const ModelConfig config = model_config_from_json(c.header.at("model"));
    const EncoderConfig& ec = config.encoder;
    if (expected && (expected->hidden != ec.hidden || expected->n_layers != ec.n_layers)) {
      throw DataError(path.string() + ": checkpoint has d=" + std::to_string(ec.hidden) + " and " +
                      std::to_string(ec.n_layers) + " layers, expected d=" + std::to_string(expected->hidden) +
                      " and " + std::to_string(expected->n_layers) + " layers");
    }
    const Json& b = c.header.at("bank");
    const auto rf = b.at("reduction_factor").get<std::size_t>();
    AdapterBank bank;
    for (const auto& code : b.at("sources").get<std::vector<std::string>>())
      bank.add_source(make_language_adapter(code, ec.hidden, ec.n_layers, rf, 0));
    if (!b.at("target").is_null())
      bank.set_target(make_language_adapter(b.at("target").get<std::string>(), ec.hidden, ec.n_layers, rf, 0));
    TaskModel m = make_task_model(config, Encoder(ec, 0), std::move(bank), profiles_from_json(c.header.at("profiles")),
                                  Vocab::from_words(c.header.at("vocab").get<std::vector<std::string>>()),
                                  label_map_from_json(c.header.at("labels")));
    assign_tensors(c, m.parameters());
    m.configure_trainable();
    return m;
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  }
}

std::uint64_t file_checksum(const std::filesystem::path& path) { return hash_string(read_text_file(path)); }

}  // namespace polyadapt
