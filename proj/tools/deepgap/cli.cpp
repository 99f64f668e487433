#include "deepgap/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "deepgap/digest.hpp"
#include "deepgap/error.hpp"
#include "deepgap/experiment.hpp"
#include "deepgap/imaging.hpp"
#include "deepgap/ingest.hpp"
#include "deepgap/manifest.hpp"
#include "deepgap/model.hpp"
#include "deepgap/text.hpp"

#ifndef DEEPGAP_VERSION
#define DEEPGAP_VERSION "unknown"
#endif

namespace deepgap::cli {

namespace fs = std::filesystem;

namespace {

/// Bad invocation: missing input, out-of-range selection. Exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool dry_run = false;
};

struct IngestOptions {
  std::string trips;
  std::string columns;
  std::string gaps;
  std::size_t k = 0;
  std::size_t bin_minutes = 10;
  std::string weather;
  std::string holidays;
};

struct EncodeOptions {
  std::string series;
  std::string data;
  std::string region;
  std::optional<std::size_t> from;
  std::optional<std::size_t> to;
  std::string format = "txt";
};

struct TrainOptionsCli {
  std::string data;
};

struct PredictOptions {
  std::string checkpoint;
  std::string series;
  std::string data;
  std::string region;
  std::string external;
};

struct EvaluateOptions {
  std::string checkpoint;
  std::string data;
  bool no_svg = false;
};

struct ExperimentOptionsCli {
  std::string data;
  bool plain_cnn = false;
  bool no_svg = false;
};

std::string now_text() {
  return format_timestamp(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

void require_exists(const std::string& path, const char* what) {
  if (path.empty()) {
    throw UsageError(std::string("missing ") + what);
  }
  if (!fs::exists(path)) {
    throw UsageError(std::string(what) + " does not exist: " + path);
  }
}

std::ifstream open_input(const std::string& path, const char* what) {
  require_exists(path, what);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw UsageError(std::string("cannot open ") + what + ": " + path);
  }
  return in;
}

DeepGapConfig load_config(const GlobalOptions& g) {
  DeepGapConfig config;
  if (!g.config_path.empty()) {
    auto in = open_input(g.config_path, "config file");
    config = DeepGapConfig::load(in);
  }
  if (g.seed) {
    config.seed = *g.seed;
    config.validate();
  }
  return config;
}

class Session {
 public:
  Session(const GlobalOptions& g, std::string command)
      : global_(g), started_(now_text()), command_(std::move(command)) {}

  void finish(const std::string& dataset_digest, std::uint64_t seed) const {
    if (global_.dry_run) {
      return;
    }
    RunManifest m;
    m.command = command_;
    m.config_path = global_.config_path;
    m.dataset_digest = dataset_digest;
    m.seed = seed;
    m.tool_version = DEEPGAP_VERSION;
    m.started = started_;
    m.finished = now_text();
    append_manifest(global_.out_dir, m);
  }

 private:
  const GlobalOptions& global_;
  std::string started_;
  std::string command_;
};

std::string sha256_of_series(const GapSeries& series) {
  std::ostringstream text;
  write_gap_series(text, series);
  return sha256_hex(text.str());
}

Dataset open_dataset(const std::string& dir) {
  require_exists(dir, "data directory");
  verify_dataset_manifest(dir);
  return load_dataset(dir);
}

// --- ingest ---------------------------------------------------------------

ColumnMapping default_mapping() {
  ColumnMapping m;
  m.pickup_time = "pickup_datetime";
  m.pickup_lat = "pickup_latitude";
  m.pickup_lon = "pickup_longitude";
  m.dropoff_time = "dropoff_datetime";
  m.dropoff_lat = "dropoff_latitude";
  m.dropoff_lon = "dropoff_longitude";
  return m;
}

int cmd_ingest(const GlobalOptions& g, const IngestOptions& o, std::ostream& out) {
  Session session(g, "ingest");
  auto config = load_config(g);
  if (o.trips.empty() == o.gaps.empty()) {
    throw UsageError("ingest needs exactly one of --trips or --gaps");
  }
  if (o.bin_minutes < 1) {
    throw UsageError("--bin-minutes must be at least 1");
  }
  const Duration bin_width = std::chrono::minutes{o.bin_minutes};

  std::vector<GapSeries> series;
  std::optional<RegionModel> regions;
  if (!o.trips.empty()) {
    if (o.k < 1) {
      throw UsageError("--k is required with --trips");
    }
    auto mapping = default_mapping();
    if (!o.columns.empty()) {
      auto in = open_input(o.columns, "column mapping");
      mapping = ColumnMapping::load(in);
    }
    auto in = open_input(o.trips, "trip file");
    auto parsed = parse_trips(in, mapping);
    if (parsed.events.empty()) {
      throw DataError("no valid trip rows in " + o.trips);
    }
    std::vector<GeoPoint> points;
    points.reserve(parsed.events.size());
    for (const auto& e : parsed.events) {
      points.push_back({e.latitude, e.longitude});
    }
    regions = fit_regions(points, o.k, config.seed);
    auto span = covering_span(parsed.events, bin_width);
    series = build_gap_series(parsed.events, *regions, bin_width, span);
    out << "trips: " << parsed.rows_read << " rows, " << parsed.rows_rejected << " rejected, "
        << parsed.events.size() << " events\n";
  } else {
    auto in = open_input(o.gaps, "gap file");
    series = load_region_gaps(in, bin_width);
  }

  std::optional<ExternalData> external;
  if (!o.weather.empty()) {
    std::set<std::chrono::sys_days> holidays;
    if (!o.holidays.empty()) {
      auto in = open_input(o.holidays, "holiday file");
      holidays = read_holidays(in);
    }
    TimeSpan span{series.front().start_time(), series.front().end_time()};
    for (const auto& s : series) {
      span.start = std::min(span.start, s.start_time());
      span.end = std::max(span.end, s.end_time());
    }
    auto in = open_input(o.weather, "weather file");
    external = load_external(in, bin_width, span, holidays);
  } else if (!o.holidays.empty()) {
    throw UsageError("--holidays needs --weather");
  }

  out << "regions: " << series.size() << ", bins: " << series.front().size() << "\n";
  if (g.dry_run) {
    out << "dry run: nothing written\n";
    return kExitOk;
  }
  const fs::path dir = g.out_dir;
  fs::create_directories(dir);
  write_dataset(dir, series, external ? &*external : nullptr);
  if (regions) {
    std::ofstream rf(dir / kRegionsFile, std::ios::binary);
    write_region_model(rf, *regions);
  }
  session.finish(dataset_digest(dir), config.seed);
  return kExitOk;
}

// --- encode ---------------------------------------------------------------

GapSeries select_series(const std::string& series_path, const std::string& data,
                        const std::string& region) {
  if (!series_path.empty()) {
    auto in = open_input(series_path, "series file");
    return read_gap_series(in, fs::path(series_path).stem().string());
  }
  if (data.empty()) {
    throw UsageError("need --series, or --data with --region");
  }
  if (region.empty()) {
    throw UsageError("--data needs --region");
  }
  require_exists(data, "data directory");
  auto path = fs::path(data) / kSeriesDir / (region + ".csv");
  auto in = open_input(path.string(), "series file");
  return read_gap_series(in, region);
}

int cmd_encode(const GlobalOptions& g, const EncodeOptions& o, std::ostream& out) {
  Session session(g, "encode");
  auto config = load_config(g);
  ImageFormat format;
  if (o.format == "txt") {
    format = ImageFormat::kText;
  } else if (o.format == "pgm") {
    format = ImageFormat::kPgm;
  } else {
    throw UsageError("--format must be txt or pgm, got '" + o.format + "'");
  }
  auto series = select_series(o.series, o.data, o.region);
  auto windows = sliding_windows(series, config.w, config.stride);
  const std::size_t last = windows.back().origin_index;
  const std::size_t from = o.from.value_or(0);
  const std::size_t to = o.to.value_or(last);
  if (from > to || to > last) {
    throw UsageError("window range " + std::to_string(from) + ".." + std::to_string(to) +
                     " outside 0.." + std::to_string(last) + " for region " +
                     series.region_id());
  }
  std::size_t files = 0;
  for (const auto& block : windows) {
    if (block.origin_index < from || block.origin_index > to) {
      continue;
    }
    auto images = encode(block, config.epsilon, config.rec_input);
    if (!g.dry_run) {
      fs::create_directories(g.out_dir);
      files += export_triple(g.out_dir, series.region_id(), block.origin_index, images, format)
                   .size();
    } else {
      files += 3;
    }
  }
  if (files == 0) {
    throw UsageError("no window origin in " + std::to_string(from) + ".." + std::to_string(to) +
                     " (stride " + std::to_string(config.stride) + ")");
  }
  out << (g.dry_run ? "would write " : "wrote ") << files << " image files\n";
  session.finish(sha256_of_series(series), config.seed);
  return kExitOk;
}

// --- train ----------------------------------------------------------------

int cmd_train(const GlobalOptions& g, const TrainOptionsCli& o, std::ostream& out) {
  Session session(g, "train");
  auto config = load_config(g);
  auto dataset = open_dataset(o.data);
  if (config.use_external && !dataset.external) {
    throw ConfigError("use_external = true but " + o.data + " has no " + kExternalFile);
  }
  auto data = prepare(dataset, config);
  out << "samples: " << data.train.size() << " train, " << data.test_count() << " test\n";
  if (g.dry_run) {
    out << "dry run: nothing written\n";
    return kExitOk;
  }
  auto model = DeepGapModel::build(
      config, dataset.external ? dataset.external->vocabulary : Vocabulary{});

  const fs::path dir = g.out_dir;
  fs::create_directories(dir);
  std::ofstream log(dir / "train_log.csv", std::ios::binary);
  log << "epoch,loss\n" << std::flush;
  TrainOptions options;
  options.on_epoch = [&](std::size_t epoch, double loss) {
    log << epoch + 1 << ',' << format_double(loss) << '\n' << std::flush;
  };
  auto result = train(model, data.train, options);
  out << "epochs: " << result.epochs_run << (result.stopped_early ? " (early stop)" : "") << "\n";
  if (!model.training_log().empty()) {
    out << "final loss: " << format_double(model.training_log().back()) << "\n";
  }
  std::ofstream ck(dir / "checkpoint.bin", std::ios::binary);
  save_checkpoint(ck, model);
  ck.close();
  if (!ck) {
    throw Error("cannot write " + (dir / "checkpoint.bin").string());
  }
  session.finish(dataset.digest, config.seed);
  return kExitOk;
}

// --- predict --------------------------------------------------------------

DeepGapModel read_checkpoint(const std::string& path) {
  auto in = open_input(path, "checkpoint");
  return load_checkpoint(in);
}

void check_config_matches(const GlobalOptions& g, const DeepGapModel& model) {
  if (g.config_path.empty()) {
    return;
  }
  auto config = load_config(g);
  if (config.architecture_hash() != model.config().architecture_hash()) {
    throw ConfigError("checkpoint architecture does not match config " + g.config_path);
  }
}

int cmd_predict(const GlobalOptions& g, const PredictOptions& o, std::ostream& out) {
  Session session(g, "predict");
  auto model = read_checkpoint(o.checkpoint);
  check_config_matches(g, model);
  auto series = select_series(o.series, o.data, o.region);

  std::optional<ExternalData> external;
  if (!o.external.empty()) {
    auto in = open_input(o.external, "external file");
    external = read_external(in);
  } else if (!o.data.empty() && fs::exists(fs::path(o.data) / kExternalFile)) {
    std::ifstream in(fs::path(o.data) / kExternalFile, std::ios::binary);
    external = read_external(in);
  }
  const auto target_time = series.end_time();
  std::optional<ExternalRecord> record;
  if (model.config().use_external) {
    if (!external) {
      throw DataError("model uses external data; no external record for bin " +
                      format_timestamp(target_time));
    }
    for (const auto& r : external->records) {
      if (r.bin_time == target_time) {
        record = r;
      }
    }
    if (!record) {
      throw DataError("no external record for bin " + format_timestamp(target_time));
    }
  }
  const double value = predict(model, series, record ? &*record : nullptr);
  if (g.dry_run) {
    return kExitOk;
  }
  out << series.region_id() << ',' << format_timestamp(target_time) << ','
      << format_double(value) << '\n';
  session.finish(sha256_of_series(series), model.config().seed);
  return kExitOk;
}

// --- evaluate -------------------------------------------------------------

std::string mode_name(const DeepGapConfig& config) {
  if (!config.use_residual) {
    return "deepgap_plain_cnn";
  }
  return config.use_external ? "deepgap_main_mode" : "deepgap_baseline_mode";
}

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, std::ostream& out) {
  Session session(g, "evaluate");
  auto model = read_checkpoint(o.checkpoint);
  check_config_matches(g, model);
  auto dataset = open_dataset(o.data);
  const auto& config = model.config();
  if (config.use_external) {
    if (!dataset.external) {
      throw ConfigError("checkpoint uses external data but " + o.data + " has no " +
                        kExternalFile);
    }
    if (!(dataset.external->vocabulary == model.vocabulary())) {
      throw ConfigError("weather vocabulary of " + o.data + " differs from the checkpoint's");
    }
  }
  auto data = prepare(dataset, config);
  if (g.dry_run) {
    out << "dry run: " << data.test_count() << " test samples\n";
    return kExitOk;
  }
  ExperimentReport report;
  report.seed = config.seed;
  report.dataset_digest = dataset.digest;
  report.config = config;
  report.train_samples = data.train.size();
  report.test_samples = data.test_count();
  report.models.push_back(evaluate_model(model, data, mode_name(config)));
  report.models.push_back(evaluate_persistence(data));
  report.models.push_back(evaluate_ar(data, config.ar_order, &report.warnings));
  report.status = "complete";
  write_report(g.out_dir, report, !o.no_svg);
  for (const auto& m : report.models) {
    out << m.name << ',' << format_double(m.rmse) << '\n';
  }
  session.finish(dataset.digest, config.seed);
  return kExitOk;
}

// --- experiment -----------------------------------------------------------

int cmd_experiment(const GlobalOptions& g, const ExperimentOptionsCli& o, std::ostream& out) {
  Session session(g, "experiment");
  auto config = load_config(g);
  auto dataset = open_dataset(o.data);
  if (g.dry_run) {
    auto data = prepare(dataset, config);
    out << "dry run: " << data.train.size() << " train, " << data.test_count()
        << " test samples\n";
    return kExitOk;
  }
  ExperimentOptions options;
  options.include_plain_cnn = o.plain_cnn;
  options.out_dir = fs::path(g.out_dir);
  options.svg = !o.no_svg;
  auto report = run_experiment(config, dataset, options);
  for (const auto& m : report.models) {
    out << m.name << ',' << format_double(m.rmse) << '\n';
  }
  session.finish(dataset.digest, config.seed);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Supply-demand gap forecasting from image-encoded time series", "deepgap"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DEEPGAP_VERSION);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Config file (key = value)");
  app.add_option("--seed", g.seed, "Seed for every random choice; overrides the config");
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_flag("--dry-run", g.dry_run, "Validate inputs, write nothing");
  app.fallthrough();

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Trips or region gaps to per-region series");
  ingest_cmd->add_option("--trips", ingest.trips, "Trip records (delimited text with header)");
  ingest_cmd->add_option("--columns", ingest.columns, "Column mapping file");
  ingest_cmd->add_option("--gaps", ingest.gaps, "Pre-computed region,timestamp,gap rows");
  ingest_cmd->add_option("--k", ingest.k, "Number of regions to cluster trips into");
  ingest_cmd->add_option("--bin-minutes", ingest.bin_minutes, "Bin width")->capture_default_str();
  ingest_cmd->add_option("--weather", ingest.weather, "timestamp,weather,temperature_c rows");
  ingest_cmd->add_option("--holidays", ingest.holidays, "One YYYY-MM-DD per line");

  EncodeOptions encode_opts;
  auto* encode_cmd = app.add_subcommand("encode", "Write GASF, GADF and REC images of windows");
  encode_cmd->add_option("--series", encode_opts.series, "Series file");
  encode_cmd->add_option("--data", encode_opts.data, "Ingested data directory");
  encode_cmd->add_option("--region", encode_opts.region, "Region id within --data");
  encode_cmd->add_option("--from", encode_opts.from, "First window origin (bin index)");
  encode_cmd->add_option("--to", encode_opts.to, "Last window origin (bin index)");
  encode_cmd->add_option("--format", encode_opts.format, "txt or pgm")->capture_default_str();

  TrainOptionsCli train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train on the 85% training split");
  train_cmd->add_option("--data", train_opts.data, "Ingested data directory")->required();

  PredictOptions predict_opts;
  auto* predict_cmd = app.add_subcommand("predict", "Forecast the bin after a series");
  predict_cmd->add_option("--checkpoint", predict_opts.checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--series", predict_opts.series, "Series file");
  predict_cmd->add_option("--data", predict_opts.data, "Ingested data directory");
  predict_cmd->add_option("--region", predict_opts.region, "Region id within --data");
  predict_cmd->add_option("--external", predict_opts.external, "Aligned external records");

  EvaluateOptions evaluate_opts;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a checkpoint and the baselines");
  evaluate_cmd->add_option("--checkpoint", evaluate_opts.checkpoint, "Checkpoint file")
      ->required();
  evaluate_cmd->add_option("--data", evaluate_opts.data, "Ingested data directory")->required();
  evaluate_cmd->add_flag("--no-svg", evaluate_opts.no_svg, "Skip SVG plots");

  ExperimentOptionsCli experiment_opts;
  auto* experiment_cmd =
      app.add_subcommand("experiment", "Train every deepgap mode and score all models");
  experiment_cmd->add_option("--data", experiment_opts.data, "Ingested data directory")
      ->required();
  experiment_cmd->add_flag("--plain-cnn", experiment_opts.plain_cnn,
                           "Also train the variant without residual connections");
  experiment_cmd->add_flag("--no-svg", experiment_opts.no_svg, "Skip SVG plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << DEEPGAP_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "deepgap: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(g, ingest, out);
    if (*encode_cmd) return cmd_encode(g, encode_opts, out);
    if (*train_cmd) return cmd_train(g, train_opts, out);
    if (*predict_cmd) return cmd_predict(g, predict_opts, out);
    if (*evaluate_cmd) return cmd_evaluate(g, evaluate_opts, out);
    if (*experiment_cmd) return cmd_experiment(g, experiment_opts, out);
  } catch (const UsageError& e) {
    err << "deepgap: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "deepgap: config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "deepgap: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace deepgap::cli
