#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>

namespace milcnn::cli {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written next to every run's artifacts. The id hashes
/// everything except the output paths, so reruns of one config into
/// different directories share it.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::map<std::string, std::string> dataset_checksums;
  std::map<std::string, std::string> outputs;

  std::string id() const;
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

const char* engine_version();

}  // namespace milcnn::cli
