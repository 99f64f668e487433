#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace deepgap::cli {

inline constexpr const char* kManifestFile = "manifest.jsonl";

/// One line of manifest.jsonl. Lines are only ever appended.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::string dataset_digest;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string started;
  std::string finished;

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

void append_manifest(const std::filesystem::path& dir, const RunManifest& entry);
std::vector<RunManifest> read_manifests(const std::filesystem::path& dir);

/// If `dir` carries an ingest manifest, recomputes the dataset digest and
/// throws DataError when it differs from the recorded one.
void verify_dataset_manifest(const std::filesystem::path& dir);

}  // namespace deepgap::cli
