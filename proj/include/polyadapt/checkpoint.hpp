#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

#include "polyadapt/adapter.hpp"
#include "polyadapt/config.hpp"
#include "polyadapt/encoder.hpp"
#include "polyadapt/model.hpp"

namespace polyadapt {

// Container layout, all integers little-endian:
//   8 bytes magic "PADAPTCK", u32 version,
//   u64 header length, header JSON (UTF-8),
//   u64 tensor count, then per tensor:
//     u32 name length, name, u32 ndim, u64 dims[ndim], f64 data[prod(dims)].
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Container {
  Json header;
  std::map<std::string, Tensor> tensors;
};

void write_container(const std::filesystem::path& path, const Json& header,
                     std::span<const Parameter* const> tensors);
Container read_container(const std::filesystem::path& path);

// Copies every named tensor from the container into `params`; throws naming
// the first missing or mis-shaped tensor.
void assign_tensors(const Container& c, std::span<Parameter* const> params);

void save_encoder(const std::filesystem::path& path, const Encoder& encoder, const Vocab& vocab);
Encoder load_encoder(const std::filesystem::path& path, Vocab* vocab = nullptr);

void save_language_adapter(const std::filesystem::path& path, const LanguageAdapter& la);
LanguageAdapter load_language_adapter(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const TaskModel& model);
// `expected`, when given, must match the stored encoder dimensions.
TaskModel load_checkpoint(const std::filesystem::path& path, const EncoderConfig* expected = nullptr);

// FNV-1a over the file bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace polyadapt
