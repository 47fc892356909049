#include "polyadapt/language.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "polyadapt/data.hpp"
#include "polyadapt/error.hpp"

namespace polyadapt {

namespace {

std::vector<std::string> split_on(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void LanguageProfile::validate() const {
  if (features.size() != kTypologyDim) {
    throw DataError("language '" + code + "' has " + std::to_string(features.size()) + " typology features, expected " +
                    std::to_string(kTypologyDim));
  }
  for (double v : features) {
    if (v != 0.0 && v != 1.0) throw DataError("language '" + code + "' has a non-binary typology feature");
  }
}

ProfileMap parse_langvec(const std::string& text, const std::string& origin) {
  ProfileMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (tab == std::string::npos) throw DataError(where + "expected code<TAB>features");
    LanguageProfile p;
    p.code = line.substr(0, tab);
    if (p.code.empty()) throw DataError(where + "empty language code");
    for (const auto& cell : split_on(line.substr(tab + 1), ',')) {
      if (cell == "--") {
        p.features.push_back(0.0);
      } else if (cell == "0" || cell == "1") {
        p.features.push_back(cell == "1" ? 1.0 : 0.0);
      } else {
        throw DataError(where + "language '" + p.code + "': bad feature value '" + cell + "'");
      }
    }
    if (p.features.size() != kTypologyDim) {
      throw DataError(where + "language '" + p.code + "' has " + std::to_string(p.features.size()) +
                      " features, expected " + std::to_string(kTypologyDim));
    }
    if (out.contains(p.code)) throw DataError(where + "duplicate language '" + p.code + "'");
    out.emplace(p.code, std::move(p));
  }
  return out;
}

ProfileMap read_langvec(const std::filesystem::path& path) { return parse_langvec(read_text_file(path), path.string()); }

std::string format_langvec(const ProfileMap& profiles) {
  std::ostringstream os;
  for (const auto& [code, p] : profiles) {
    p.validate();
    os << code << '\t';
    for (std::size_t i = 0; i < p.features.size(); ++i) os << (i ? "," : "") << (p.features[i] != 0.0 ? '1' : '0');
    os << '\n';
  }
  return os.str();
}

void write_langvec(const std::filesystem::path& path, const ProfileMap& profiles) {
  write_text_file(path, format_langvec(profiles));
}

RelatednessMatrix::RelatednessMatrix(std::vector<std::string> codes, Tensor values)
    : codes_(std::move(codes)), values_(std::move(values)) {
  const std::size_t n = codes_.size();
  if (values_.rows() != n || values_.cols() != n) throw DataError("relatedness matrix shape does not match codes");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = values_.at(i, j);
      if (!(v >= 0.0 && v <= 1.0)) throw DataError("relatedness values must lie in [0, 1]");
      if (std::abs(v - values_.at(j, i)) > 1e-12) {
        throw DataError("relatedness not symmetric for (" + codes_[i] + ", " + codes_[j] + ")");
      }
    }
  }
}

std::size_t RelatednessMatrix::index(const std::string& code) const {
  for (std::size_t i = 0; i < codes_.size(); ++i)
    if (codes_[i] == code) return i;
  throw DataError("missing relatedness entry for '" + code + "'");
}

double RelatednessMatrix::at(const std::string& a, const std::string& b) const {
  return values_.at(index(a), index(b));
}

bool RelatednessMatrix::has(const std::string& code) const {
  for (const auto& c : codes_)
    if (c == code) return true;
  return false;
}

RelatednessMatrix RelatednessMatrix::mean_of(const RelatednessMatrix& a, const RelatednessMatrix& b) {
  if (a.codes_ != b.codes_) throw DataError("relatedness matrices cover different languages");
  Tensor v = a.values_;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 * (a.values_[i] + b.values_[i]);
  return RelatednessMatrix(a.codes_, std::move(v));
}

std::string RelatednessMatrix::most_related(const std::string& code, std::span<const std::string> candidates) const {
  if (candidates.empty()) throw Error("no candidate languages");
  std::string best = candidates[0];
  double best_v = at(code, best);
  for (const auto& c : candidates.subspan(1)) {
    const double v = at(code, c);
    if (v > best_v) {
      best_v = v;
      best = c;
    }
  }
  return best;
}

RelatednessMatrix read_relatedness(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty relatedness file");
  auto header = split_on(line, '\t');
  if (header.empty() || !header[0].empty()) throw DataError(path.string() + ":1: header must start with an empty cell");
  std::vector<std::string> codes(header.begin() + 1, header.end());
  Tensor v = Tensor::zeros(codes.size(), codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (!std::getline(in, line)) throw DataError(path.string() + ": missing row for '" + codes[i] + "'");
    const auto cells = split_on(line, '\t');
    if (cells.size() != codes.size() + 1 || cells[0] != codes[i]) {
      throw DataError(path.string() + ":" + std::to_string(i + 2) + ": malformed relatedness row");
    }
    for (std::size_t j = 0; j < codes.size(); ++j) {
      try {
        v.at(i, j) = std::stod(cells[j + 1]);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(i + 2) + ": bad number '" + cells[j + 1] + "'");
      }
    }
  }
  return RelatednessMatrix(std::move(codes), std::move(v));
}

void write_relatedness(const std::filesystem::path& path, const RelatednessMatrix& m) {
  std::ostringstream os;
  for (const auto& c : m.codes()) os << '\t' << c;
  os << '\n';
  for (std::size_t i = 0; i < m.codes().size(); ++i) {
    os << m.codes()[i];
    for (std::size_t j = 0; j < m.codes().size(); ++j) os << '\t' << format_number(m.values().at(i, j));
    os << '\n';
  }
  write_text_file(path, os.str());
}

double feature_similarity(const LanguageProfile& a, const LanguageProfile& b) {
  if (a.features.size() != b.features.size() || a.features.empty()) throw Error("feature vectors differ in length");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.features.size(); ++i) same += a.features[i] == b.features[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.features.size());
}

}  // namespace polyadapt
