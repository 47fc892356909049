#include "manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>

#include "polyadapt/data.hpp"
#include "polyadapt/error.hpp"

namespace polyadapt::cli {

namespace fs = std::filesystem;

std::string git_blob_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  std::string hex;
  char buf[3];
  for (unsigned char b : std::string_view(reinterpret_cast<const char*>(digest), len)) {
    std::snprintf(buf, sizeof buf, "%02x", b);
    hex += buf;
  }
  return hex;
}

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::string content_hash(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::string listing;
    for (const auto& f : sorted_files(path)) listing += f.generic_string() + ' ' + content_hash(path / f) + '\n';
    return git_blob_hash(listing);
  }
  if (!fs::exists(path)) throw DataError("input does not exist: " + path.string());
  return git_blob_hash(read_text_file(path));
}

void RunManifest::add_input(const fs::path& path) {
  inputs[path.string()] = content_hash(path);
  std::string listing;
  for (const auto& [p, h] : inputs) listing += p + ' ' + h + '\n';
  input_hash = git_blob_hash(listing);
}

Json to_json(const RunManifest& m) {
  return {{"command", m.command}, {"argv", m.argv},           {"cwd", m.cwd},
          {"config_path", m.config_path}, {"config", m.config}, {"seed", m.seed},
          {"inputs", m.inputs},   {"input_hash", m.input_hash}, {"out_dir", m.out_dir},
          {"outputs", m.outputs}};
}

RunManifest manifest_from_json(const Json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.cwd = j.at("cwd").get<std::string>();
    m.config_path = j.at("config_path").get<std::string>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.input_hash = j.at("input_hash").get<std::string>();
    m.out_dir = j.at("out_dir").get<std::string>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("bad manifest: ") + e.what());
  }
  return m;
}

std::map<std::string, std::string> hash_outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& f : sorted_files(dir)) {
    if (f == kManifestFile) continue;
    out[f.generic_string()] = content_hash(dir / f);
  }
  return out;
}

void write_manifest(RunManifest& m) {
  m.outputs = hash_outputs(m.out_dir);
  write_text_file(fs::path(m.out_dir) / kManifestFile, to_json(m).dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& path) {
  try {
    return manifest_from_json(Json::parse(read_text_file(path)));
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace polyadapt::cli
