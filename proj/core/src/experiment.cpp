#include "deepgap/experiment.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "deepgap/baselines.hpp"
#include "deepgap/digest.hpp"
#include "deepgap/error.hpp"
#include "deepgap/plot.hpp"
#include "deepgap/text.hpp"

namespace deepgap {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << content)) {
    throw Error("cannot write " + path.string());
  }
}

}  // namespace

void write_dataset(const fs::path& dir, const std::vector<GapSeries>& series,
                   const ExternalData* external) {
  fs::create_directories(dir / kSeriesDir);
  for (const auto& s : series) {
    std::ofstream out(dir / kSeriesDir / (s.region_id() + ".csv"), std::ios::binary);
    write_gap_series(out, s);
    if (!out) {
      throw Error("cannot write series for region " + s.region_id());
    }
  }
  if (external != nullptr) {
    std::ofstream out(dir / kExternalFile, std::ios::binary);
    write_external(out, external->records);
    if (!out) {
      throw Error("cannot write external records");
    }
  }
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (fs::is_directory(dir / kSeriesDir)) {
    for (const auto& entry : fs::directory_iterator(dir / kSeriesDir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".csv") {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());
  if (fs::is_regular_file(dir / kExternalFile)) {
    files.push_back(dir / kExternalFile);
  }
  return files;
}

std::string dataset_digest(const fs::path& dir) {
  auto files = dataset_files(dir);
  return digest_files(dir, files);
}

Dataset load_dataset(const fs::path& dir) {
  Dataset data;
  for (const auto& file : dataset_files(dir)) {
    if (file.filename() == kExternalFile) {
      std::ifstream in(file, std::ios::binary);
      data.external = read_external(in);
      continue;
    }
    std::ifstream in(file, std::ios::binary);
    data.series.push_back(read_gap_series(in, file.stem().string()));
  }
  if (data.series.empty()) {
    throw DataError("no series files under " + (dir / kSeriesDir).string());
  }
  data.digest = dataset_digest(dir);
  return data;
}

std::size_t PreparedData::test_count() const {
  std::size_t n = 0;
  for (const auto& r : regions) {
    n += r.samples.size() - r.train_count;
  }
  return n;
}

PreparedData prepare(const Dataset& dataset, const DeepGapConfig& config) {
  std::optional<ExternalTable> table;
  if (dataset.external) {
    table.emplace(dataset.external->records, dataset.external->vocabulary);
  }
  auto encode_config = config;
  encode_config.use_external = false;

  PreparedData data;
  for (const auto& series : dataset.series) {
    PreparedData::Region region;
    region.series = &series;
    region.samples = make_samples(series, encode_config, table ? &*table : nullptr,
                                  dataset.external ? dataset.external->vocabulary : Vocabulary{});
    region.train_count = split_counts(region.samples.size()).train_count;
    const auto& last_train = region.samples[region.train_count - 1];
    const auto& first_test = region.samples[region.train_count];
    if (!(last_train.target_time < first_test.target_time)) {
      throw Error("split of region '" + series.region_id() + "' is not chronological");
    }
    data.train.insert(data.train.end(), region.samples.begin(),
                      region.samples.begin() + static_cast<std::ptrdiff_t>(region.train_count));
    data.regions.push_back(std::move(region));
  }
  return data;
}

namespace {

ModelResult score(std::string name, std::map<std::string, std::vector<CurvePoint>> curves) {
  ModelResult result;
  result.name = std::move(name);
  std::vector<double> actual, pred;
  for (const auto& [region, points] : curves) {
    for (const auto& p : points) {
      actual.push_back(p.actual);
      pred.push_back(p.predicted);
    }
  }
  result.rmse = rmse(actual, pred);
  result.count = actual.size();
  result.curves = std::move(curves);
  return result;
}

}  // namespace

ModelResult evaluate_model(const DeepGapModel& model, const PreparedData& data,
                           const std::string& name) {
  nn::NoGradGuard no_grad;
  std::map<std::string, std::vector<CurvePoint>> curves;
  constexpr std::size_t kChunk = 64;
  for (const auto& region : data.regions) {
    auto& points = curves[region.series->region_id()];
    for (std::size_t i = region.train_count; i < region.samples.size(); i += kChunk) {
      std::vector<const EncodedSample*> batch;
      for (std::size_t j = i; j < std::min(region.samples.size(), i + kChunk); ++j) {
        batch.push_back(&region.samples[j]);
      }
      auto pred = model.forward(batch);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        points.push_back({batch[j]->target_time, batch[j]->target, pred.data()[j]});
      }
    }
  }
  auto result = score(name, std::move(curves));
  result.training_log = model.training_log();
  return result;
}

ModelResult evaluate_persistence(const PreparedData& data) {
  std::map<std::string, std::vector<CurvePoint>> curves;
  for (const auto& region : data.regions) {
    auto values = region.series->values();
    auto& points = curves[region.series->region_id()];
    for (std::size_t i = region.train_count; i < region.samples.size(); ++i) {
      const auto& s = region.samples[i];
      auto pred = persistence_forecast(values.first(s.target_index + 1), s.target_index);
      points.push_back({s.target_time, s.target, pred.front()});
    }
  }
  return score("persistence", std::move(curves));
}

ModelResult evaluate_ar(const PreparedData& data, std::size_t order,
                        std::vector<std::string>* warnings) {
  std::map<std::string, std::vector<CurvePoint>> curves;
  for (const auto& region : data.regions) {
    auto values = region.series->values();
    const auto first_test = region.samples[region.train_count].target_index;
    auto model = fit_ar(values.first(first_test), order);
    if (model.ridge_fallback && warnings != nullptr) {
      warnings->push_back("ar" + std::to_string(order) + ": singular normal matrix in region '" +
                          region.series->region_id() + "', used ridge fallback");
    }
    auto& points = curves[region.series->region_id()];
    for (std::size_t i = region.train_count; i < region.samples.size(); ++i) {
      const auto& s = region.samples[i];
      auto pred = ar_forecast(model, values.first(s.target_index + 1), s.target_index);
      points.push_back({s.target_time, s.target, pred.front()});
    }
  }
  return score("ar" + std::to_string(order), std::move(curves));
}

std::string report_json(const ExperimentReport& report) {
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& m : report.models) {
    nlohmann::ordered_json entry{{"name", m.name}, {"rmse", m.rmse}, {"count", m.count}};
    if (!m.training_log.empty()) {
      entry["training_log"] = m.training_log;
    }
    models.push_back(std::move(entry));
  }
  nlohmann::ordered_json doc{
      {"status", report.status},
      {"seed", report.seed},
      {"dataset_digest", report.dataset_digest},
      {"config", report.config.to_key_values()},
      {"config_hash", report.config.hash()},
      {"train_samples", report.train_samples},
      {"test_samples", report.test_samples},
      {"models", models},
      {"warnings", report.warnings},
  };
  if (!report.error.empty()) {
    doc["error"] = report.error;
  }
  return doc.dump(2) + "\n";
}

void write_report(const fs::path& dir, const ExperimentReport& report, bool svg) {
  fs::create_directories(dir / "curves");
  write_file(dir / "report.json", report_json(report));
  std::map<std::string, std::vector<PlotSeries>> plots;
  for (const auto& m : report.models) {
    for (const auto& [region, points] : m.curves) {
      std::string csv = "timestamp,actual,predicted\n";
      PlotSeries actual{"actual", {}};
      PlotSeries pred{m.name, {}};
      for (const auto& p : points) {
        csv += format_timestamp(p.time) + "," + format_double(p.actual) + "," +
               format_double(p.predicted) + "\n";
        actual.values.push_back(p.actual);
        pred.values.push_back(p.predicted);
      }
      write_file(dir / "curves" / (region + "_" + m.name + ".csv"), csv);
      auto& plot = plots[region];
      if (plot.empty()) {
        plot.push_back(std::move(actual));
      }
      plot.push_back(std::move(pred));
    }
  }
  if (!svg) {
    return;
  }
  for (const auto& [region, series] : plots) {
    write_file(dir / "curves" / (region + ".svg"),
               line_chart_svg("Region " + region + ": actual vs prediction", series));
  }
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const auto& m : report.models) {
    labels.push_back(m.name);
    values.push_back(m.rmse);
  }
  write_file(dir / "rmse.svg", bar_chart_svg("Test RMSE", labels, values));
}

ExperimentReport run_experiment(const DeepGapConfig& config, const Dataset& dataset,
                                const ExperimentOptions& options) {
  ExperimentReport report;
  report.seed = config.seed;
  report.dataset_digest = dataset.digest;
  report.config = config;
  auto persist = [&] {
    if (options.out_dir) {
      write_report(*options.out_dir, report, options.svg);
    }
  };
  try {
    auto data = prepare(dataset, config);
    report.train_samples = data.train.size();
    report.test_samples = data.test_count();

    auto run_deepgap = [&](bool use_external, bool use_residual, const std::string& name) {
      auto variant = config;
      variant.use_external = use_external;
      variant.use_residual = use_residual;
      auto model = DeepGapModel::build(
          variant, dataset.external ? dataset.external->vocabulary : Vocabulary{});
      train(model, data.train);
      report.models.push_back(evaluate_model(model, data, name));
      persist();
    };
    run_deepgap(false, true, "deepgap_baseline_mode");
    if (dataset.external) {
      run_deepgap(true, true, "deepgap_main_mode");
    }
    if (options.include_plain_cnn) {
      run_deepgap(false, false, "deepgap_plain_cnn");
    }
    report.models.push_back(evaluate_persistence(data));
    report.models.push_back(evaluate_ar(data, config.ar_order, &report.warnings));
    report.status = "complete";
    persist();
  } catch (const std::exception& e) {
    report.status = "failed";
    report.error = e.what();
    persist();
    throw;
  }
  return report;
}

}  // namespace deepgap
