#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "polyadapt/config.hpp"

namespace polyadapt::cli {

// Git blob id: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_hash(std::string_view content);

// Hash of a file, or of a directory as the hash of its sorted
// "relative-path hash" lines.
std::string content_hash(const std::filesystem::path& path);

// Everything needed to re-run one command and check its outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // arguments after the program name
  std::string cwd;
  std::string config_path;
  Json config;  // contents of the config file, null when none was given
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  // path -> content hash
  std::string input_hash;                     // hash over `inputs`
  std::string out_dir;
  std::map<std::string, std::string> outputs;  // file relative to out_dir -> hash

  void add_input(const std::filesystem::path& path);
};

inline constexpr const char* kManifestFile = "manifest.json";

Json to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);

// Hashes every file in out_dir except the manifest and writes manifest.json.
void write_manifest(RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

// Files in `dir` (except the manifest) keyed by relative path, with hashes.
std::map<std::string, std::string> hash_outputs(const std::filesystem::path& dir);

}  // namespace polyadapt::cli
