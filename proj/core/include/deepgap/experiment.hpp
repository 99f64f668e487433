#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepgap/ingest.hpp"
#include "deepgap/model.hpp"
#include "deepgap/series.hpp"

namespace deepgap {

/// A directory of ingested data:
///   series/<region>.csv   one GapSeries per region
///   external.csv          optional per-bin external records
///   regions.txt           optional region model (trip inputs only)
struct Dataset {
  std::vector<GapSeries> series;
  std::optional<ExternalData> external;
  std::string digest;
};

inline constexpr const char* kSeriesDir = "series";
inline constexpr const char* kExternalFile = "external.csv";
inline constexpr const char* kRegionsFile = "regions.txt";

void write_dataset(const std::filesystem::path& dir, const std::vector<GapSeries>& series,
                   const ExternalData* external);

/// Sorted data files of a dataset directory (series files, then external).
std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir);

std::string dataset_digest(const std::filesystem::path& dir);

Dataset load_dataset(const std::filesystem::path& dir);

struct CurvePoint {
  Timestamp time;
  double actual = 0.0;
  double predicted = 0.0;
};

struct ModelResult {
  std::string name;
  double rmse = 0.0;
  std::size_t count = 0;
  std::vector<double> training_log;
  /// Test-split actual vs predicted, per region.
  std::map<std::string, std::vector<CurvePoint>> curves;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::string dataset_digest;
  DeepGapConfig config;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::vector<ModelResult> models;
  std::vector<std::string> warnings;
  std::string status = "running";
  std::string error;
};

/// Encoded samples and the chronological split of every region.
struct PreparedData {
  struct Region {
    const GapSeries* series = nullptr;
    std::vector<EncodedSample> samples;
    std::size_t train_count = 0;
  };
  std::vector<Region> regions;
  std::vector<EncodedSample> train;  // pooled training samples, region-major order

  std::size_t test_count() const;
};

/// Encodes and splits every region 85/15 in time order. Checks that within
/// each region the last training target precedes the first test target.
PreparedData prepare(const Dataset& dataset, const DeepGapConfig& config);

ModelResult evaluate_model(const DeepGapModel& model, const PreparedData& data,
                           const std::string& name);
ModelResult evaluate_persistence(const PreparedData& data);
/// AR(p) fitted per region on the values up to the first test target.
ModelResult evaluate_ar(const PreparedData& data, std::size_t order,
                        std::vector<std::string>* warnings = nullptr);

struct ExperimentOptions {
  /// Also train the residual-free variant of the baseline mode.
  bool include_plain_cnn = false;
  /// When set, the report is (re)written after every model so partial
  /// results survive a failure.
  std::optional<std::filesystem::path> out_dir;
  bool svg = true;
};

/// Trains deepgap without external data, with external data (only when
/// the dataset has it), optionally the plain-CNN variant, then scores those
/// and the persistence and AR baselines on the same test split.
ExperimentReport run_experiment(const DeepGapConfig& config, const Dataset& dataset,
                                const ExperimentOptions& options = {});

std::string report_json(const ExperimentReport& report);

/// report.json, curves/<region>_<model>.csv (`timestamp,actual,predicted`)
/// and, with `svg`, curves/<region>.svg plus rmse.svg.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report, bool svg);

}  // namespace deepgap
