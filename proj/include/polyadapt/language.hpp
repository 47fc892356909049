#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "polyadapt/tensor.hpp"

namespace polyadapt {

inline constexpr std::size_t kTypologyDim = 103;

// A language code with its binary typological feature vector.
struct LanguageProfile {
  std::string code;
  std::vector<double> features;  // kTypologyDim entries in {0, 1}

  void validate() const;
  friend bool operator==(const LanguageProfile&, const LanguageProfile&) = default;
};

using ProfileMap = std::map<std::string, LanguageProfile>;

// TSV: code<TAB>comma-separated values in {0, 1, --}; "--" (missing) is read as 0.
ProfileMap read_langvec(const std::filesystem::path& path);
ProfileMap parse_langvec(const std::string& text, const std::string& origin = "<string>");
void write_langvec(const std::filesystem::path& path, const ProfileMap& profiles);
std::string format_langvec(const ProfileMap& profiles);

enum class RelatednessKind { genetic, syntactic, mean };

// Symmetric similarity matrix over language codes with values in [0, 1].
class RelatednessMatrix {
 public:
  RelatednessMatrix() = default;
  RelatednessMatrix(std::vector<std::string> codes, Tensor values);

  double at(const std::string& a, const std::string& b) const;
  bool has(const std::string& code) const;
  const std::vector<std::string>& codes() const { return codes_; }
  const Tensor& values() const { return values_; }

  // Element-wise average of two matrices over the same codes.
  static RelatednessMatrix mean_of(const RelatednessMatrix& a, const RelatednessMatrix& b);

  // The code in `candidates` most related to `code` (first one on ties).
  std::string most_related(const std::string& code, std::span<const std::string> candidates) const;

 private:
  std::size_t index(const std::string& code) const;
  std::vector<std::string> codes_;
  Tensor values_;
};

// TSV with a header row of codes, then one row per code: code<TAB>v1<TAB>v2...
RelatednessMatrix read_relatedness(const std::filesystem::path& path);
void write_relatedness(const std::filesystem::path& path, const RelatednessMatrix& m);

// 1 - normalized Hamming distance between feature vectors.
double feature_similarity(const LanguageProfile& a, const LanguageProfile& b);

}  // namespace polyadapt
