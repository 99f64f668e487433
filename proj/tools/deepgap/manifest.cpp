#include "deepgap/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "deepgap/error.hpp"
#include "deepgap/experiment.hpp"
#include "deepgap/text.hpp"

namespace deepgap::cli {

namespace fs = std::filesystem;

void append_manifest(const fs::path& dir, const RunManifest& entry) {
  fs::create_directories(dir);
  nlohmann::ordered_json line{
      {"command", entry.command},
      {"config_path", entry.config_path},
      {"dataset_digest", entry.dataset_digest},
      {"seed", entry.seed},
      {"tool_version", entry.tool_version},
      {"started", entry.started},
      {"finished", entry.finished},
  };
  std::ofstream out(dir / kManifestFile, std::ios::binary | std::ios::app);
  out << line.dump() << '\n';
  if (!out) {
    throw Error("cannot append to " + (dir / kManifestFile).string());
  }
}

std::vector<RunManifest> read_manifests(const fs::path& dir) {
  std::vector<RunManifest> entries;
  std::ifstream in(dir / kManifestFile, std::ios::binary);
  if (!in) {
    return entries;
  }
  std::string line;
  std::size_t number = 0;
  while (read_line(in, line)) {
    ++number;
    if (trim(line).empty()) {
      continue;
    }
    try {
      auto doc = nlohmann::json::parse(line);
      RunManifest m;
      m.command = doc.at("command").get<std::string>();
      m.config_path = doc.at("config_path").get<std::string>();
      m.dataset_digest = doc.at("dataset_digest").get<std::string>();
      m.seed = doc.at("seed").get<std::uint64_t>();
      m.tool_version = doc.at("tool_version").get<std::string>();
      m.started = doc.at("started").get<std::string>();
      m.finished = doc.at("finished").get<std::string>();
      entries.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / kManifestFile).string() + ":" + std::to_string(number) + ": " +
                      e.what());
    }
  }
  return entries;
}

void verify_dataset_manifest(const fs::path& dir) {
  const RunManifest* ingest = nullptr;
  auto entries = read_manifests(dir);
  for (const auto& m : entries) {
    if (m.command == "ingest") {
      ingest = &m;
    }
  }
  if (ingest == nullptr) {
    return;
  }
  auto actual = dataset_digest(dir);
  if (actual != ingest->dataset_digest) {
    throw DataError("dataset under " + dir.string() + " changed since ingest: digest " + actual +
                    " != recorded " + ingest->dataset_digest);
  }
}

}  // namespace deepgap::cli
