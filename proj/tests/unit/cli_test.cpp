#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deepgap/baselines.hpp"
#include "deepgap/cli.hpp"
#include "deepgap/experiment.hpp"
#include "deepgap/manifest.hpp"
#include "deepgap/model.hpp"
#include "deepgap/text.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

namespace deepgap {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::TempDir;
using testing::write_file;

const fs::path kData = DEEPGAP_TEST_DATA_DIR;

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "deepgap");
  std::ostringstream out, err;
  CliRun r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const char* kSmallConfig =
    "w = 8\nL = 1\nfilter_size = 3x3\nchannels = 3\nhead_widths = 6,1\n"
    "batch_size = 8\nepochs = 3\n";

std::string small_config(const TempDir& dir, const std::string& extra = "") {
  auto path = dir / "model.cfg";
  write_file(path, std::string(kSmallConfig) + extra);
  return path.string();
}

std::vector<double> column(const std::string& csv, std::size_t index) {
  std::istringstream in(csv);
  std::string line;
  read_line(in, line);
  std::vector<double> v;
  while (read_line(in, line)) v.push_back(*parse_double(split_fields(line, ',')[index]));
  return v;
}

std::vector<double> all_parameters(const DeepGapModel& m) {
  std::vector<double> v;
  for (const auto& t : m.parameters().tensors()) v.insert(v.end(), t.data().begin(), t.data().end());
  return v;
}

DeepGapModel load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return load_checkpoint(in);
}

// --- ingest -----------------------------------------------------------------

TEST(CliIngest, TripFixtureGapSums) {
  TempDir dir;
  auto r = cli({"--out", dir.path().string(), "--seed", "3", "ingest", "--trips",
                (kData / "trips20.csv").string(), "--k", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("2 rejected"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("35 events"), std::string::npos) << r.out;
  auto ds = load_dataset(dir.path());
  ASSERT_EQ(ds.series.size(), 2u);
  std::vector<double> sums;
  for (const auto& s : ds.series) {
    double total = 0.0;
    for (double v : s.values()) total += v;
    sums.push_back(total);
  }
  std::sort(sums.begin(), sums.end());
  EXPECT_EQ(sums, (std::vector<double>{-2.0, 3.0}));
  EXPECT_TRUE(fs::exists(dir / kRegionsFile));
  auto manifests = cli::read_manifests(dir.path());
  ASSERT_EQ(manifests.size(), 1u);
  EXPECT_EQ(manifests[0].command, "ingest");
  EXPECT_EQ(manifests[0].seed, 3u);
  EXPECT_EQ(manifests[0].dataset_digest, ds.digest);
}

TEST(CliIngest, RerunIsByteIdentical) {
  TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    ASSERT_EQ(cli({"--out", dir->path().string(), "ingest", "--trips",
                   (kData / "trips20.csv").string(), "--k", "2"})
                  .code,
              0);
  }
  EXPECT_EQ(dataset_digest(a.path()), dataset_digest(b.path()));
  EXPECT_EQ(read_file(a / kRegionsFile), read_file(b / kRegionsFile));
}

TEST(CliIngest, MissingInputIsUsageError) {
  TempDir dir;
  const auto missing = (dir / "nowhere.csv").string();
  auto r = cli({"--out", (dir / "o").string(), "ingest", "--trips", missing, "--k", "2"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "o"));
  EXPECT_EQ(cli({"ingest", "--k", "2"}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"ingest", "--trips", (kData / "trips20.csv").string()}).code, cli::kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, cli::kExitUsage);
}

TEST(CliIngest, DryRunWritesNothing) {
  TempDir dir;
  auto out = dir / "o";
  auto r = cli({"--out", out.string(), "--dry-run", "ingest", "--gaps",
                (kData / "district_gaps.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("regions: 3"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(out));
}

TEST(CliIngest, GapsWithWeather) {
  TempDir dir;
  const std::string trips = testing::synthetic_trips_csv(600, 6, 1);
  write_file(dir / "trips.csv", trips);
  auto r = cli({"--out", (dir / "o").string(), "ingest", "--trips", (dir / "trips.csv").string(),
                "--k", "2", "--weather", (kData / "weather.csv").string(), "--holidays",
                (kData / "holidays.txt").string()});
  // The weather fixture starts at 06:00, after the first trips.
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("2016-01-04T00:00:00"), std::string::npos) << r.err;
}

TEST(CliIngest, ManifestIsAppendOnlyAndGuardsTheData) {
  TempDir dir;
  const auto out = dir.path().string();
  const std::vector<std::string> args{"--out", out, "ingest", "--gaps",
                                      (kData / "district_gaps.csv").string()};
  ASSERT_EQ(cli(args).code, 0);
  const auto first = read_file(dir / cli::kManifestFile);
  ASSERT_EQ(cli(args).code, 0);
  const auto second = read_file(dir / cli::kManifestFile);
  EXPECT_EQ(second.substr(0, first.size()), first);
  EXPECT_EQ(cli::read_manifests(dir.path()).size(), 2u);

  auto series_file = dir.path() / kSeriesDir / "d01.csv";
  write_file(series_file, read_file(series_file) + "2016-01-01T10:00:00,1\n");
  auto r = cli({"--out", (dir / "train").string(), "--config", small_config(dir), "train",
                "--data", out});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("changed since ingest"), std::string::npos) << r.err;
}

// --- encode -----------------------------------------------------------------

TEST(CliEncode, WritesOneTriplePerWindow) {
  TempDir dir;
  auto series = testing::seasonal_series(12, 4, "r05");
  {
    std::ofstream f(dir / "r05.csv", std::ios::binary);
    write_gap_series(f, series);
  }
  auto r = cli({"--out", (dir / "img").string(), "encode", "--series", (dir / "r05.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "img")) names.push_back(e.path().filename());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names, (std::vector<std::string>{"manifest.jsonl", "r05_0_gadf.txt", "r05_0_gasf.txt",
                                             "r05_0_rec.txt"}));

  auto scaled = minmax_scale(series.values());
  auto expect = testing::trig_gasf(scaled);
  std::istringstream txt(read_file(dir / "img/r05_0_gasf.txt"));
  std::string line;
  for (std::size_t i = 0; i < 12; ++i) {
    ASSERT_TRUE(read_line(txt, line));
    auto f = split_fields(line, ',');
    ASSERT_EQ(f.size(), 12u);
    for (std::size_t j = 0; j < 12; ++j) EXPECT_NEAR(*parse_double(f[j]), expect[i][j], 1e-9);
  }
}

TEST(CliEncode, ConstantSeriesHasEmptyRecurrence) {
  TempDir dir;
  GapSeries flat("r00", parse_timestamp("2016-01-04"), kDefaultBinWidth,
                 std::vector<double>(14, 4.0));
  {
    std::ofstream f(dir / "flat.csv", std::ios::binary);
    write_gap_series(f, flat);
  }
  auto r = cli({"--out", (dir / "img").string(), "encode", "--series", (dir / "flat.csv").string(),
                "--from", "2", "--to", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rec = read_file(dir / "img/flat_2_rec.txt");
  EXPECT_EQ(std::count(rec.begin(), rec.end(), '1'), 0);
  EXPECT_EQ(std::count(rec.begin(), rec.end(), '0'), 144);
  EXPECT_FALSE(fs::exists(dir / "img/flat_1_rec.txt"));

  auto bad = cli({"--out", (dir / "img").string(), "encode", "--series",
                  (dir / "flat.csv").string(), "--from", "5"});
  EXPECT_EQ(bad.code, cli::kExitUsage);
  EXPECT_NE(bad.err.find("0..2"), std::string::npos) << bad.err;
  EXPECT_EQ(cli({"encode", "--series", (dir / "flat.csv").string(), "--format", "png"}).code,
            cli::kExitUsage);
}

// --- train / evaluate / predict ---------------------------------------------

class CliModel : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = (dir_ / "data").string();
    Dataset d;
    d.series = {testing::seasonal_series(120, 1, "r00"), testing::seasonal_series(120, 2, "r01")};
    write_dataset(data_, d.series, nullptr);
  }

  CliRun train_cli(const std::string& out, const std::string& extra = "") {
    return cli({"--out", out, "--config", small_config(dir_, extra), "train", "--data", data_});
  }

  TempDir dir_;
  std::string data_;
};

TEST_F(CliModel, TrainIsDeterministic) {
  ASSERT_EQ(train_cli((dir_ / "a").string()).code, 0);
  ASSERT_EQ(train_cli((dir_ / "b").string()).code, 0);
  EXPECT_EQ(read_file(dir_ / "a/checkpoint.bin"), read_file(dir_ / "b/checkpoint.bin"));
  EXPECT_EQ(read_file(dir_ / "a/train_log.csv"), read_file(dir_ / "b/train_log.csv"));
  EXPECT_EQ(column(read_file(dir_ / "a/train_log.csv"), 1).size(), 3u);
}

TEST_F(CliModel, ZeroEpochsKeepsInitialization) {
  auto r = train_cli((dir_ / "a").string(), "epochs = 0\n");
  ASSERT_EQ(r.code, 0) << r.err;
  auto m = load(dir_ / "a/checkpoint.bin");
  auto fresh = DeepGapModel::build(m.config());
  EXPECT_EQ(all_parameters(m), all_parameters(fresh));
  EXPECT_TRUE(m.training_log().empty());
}

TEST_F(CliModel, LossDecreases) {
  ASSERT_EQ(train_cli((dir_ / "a").string(), "epochs = 12\noptimizer = adam\n").code, 0);
  auto losses = column(read_file(dir_ / "a/train_log.csv"), 1);
  ASSERT_GE(losses.size(), 2u);
  EXPECT_LT(losses.back(), losses.front());
}

TEST_F(CliModel, DivergenceKeepsPartialLog) {
  auto r = train_cli((dir_ / "a").string(), "learning_rate = 1e12\nepochs = 30\n");
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("learning rate"), std::string::npos) << r.err;
  EXPECT_EQ(read_file(dir_ / "a/train_log.csv").rfind("epoch,loss\n", 0), 0u);
  EXPECT_FALSE(fs::exists(dir_ / "a/checkpoint.bin"));
}

TEST_F(CliModel, EvaluateReportRows) {
  ASSERT_EQ(train_cli((dir_ / "a").string()).code, 0);
  const auto ev = (dir_ / "ev").string();
  auto r = cli({"--out", ev, "evaluate", "--checkpoint", (dir_ / "a/checkpoint.bin").string(),
                "--data", data_, "--no-svg"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream rows(r.out);
  std::string line;
  std::vector<std::string> names;
  while (read_line(rows, line)) names.push_back(split_fields(line, ',')[0]);
  EXPECT_EQ(names, (std::vector<std::string>{"deepgap_baseline_mode", "persistence", "ar3"}));
  EXPECT_TRUE(fs::exists(dir_ / "ev/report.json"));
  EXPECT_FALSE(fs::exists(dir_ / "ev/rmse.svg"));

  std::vector<double> actual, pred;
  for (const char* region : {"r00", "r01"}) {
    auto csv = read_file(dir_ / (std::string("ev/curves/") + region + "_persistence.csv"));
    auto a = column(csv, 1), p = column(csv, 2);
    actual.insert(actual.end(), a.begin(), a.end());
    pred.insert(pred.end(), p.begin(), p.end());
  }
  std::istringstream again(r.out);
  read_line(again, line);
  read_line(again, line);
  EXPECT_NEAR(rmse(actual, pred), *parse_double(split_fields(line, ',')[1]), 1e-12);
}

TEST_F(CliModel, EvaluateRejectsMismatchedConfig) {
  ASSERT_EQ(train_cli((dir_ / "a").string()).code, 0);
  auto path = dir_ / "other.cfg";
  write_file(path, std::string(kSmallConfig) + "channels = 4\n");
  auto r = cli({"--out", (dir_ / "ev").string(), "--config", path.string(), "evaluate",
                "--checkpoint", (dir_ / "a/checkpoint.bin").string(), "--data", data_});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("architecture"), std::string::npos) << r.err;
}

TEST_F(CliModel, PredictMatchesLibrary) {
  ASSERT_EQ(train_cli((dir_ / "a").string()).code, 0);
  auto r = cli({"--out", (dir_ / "p").string(), "predict", "--checkpoint",
                (dir_ / "a/checkpoint.bin").string(), "--data", data_, "--region", "r01"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto fields = split_fields(r.out.substr(0, r.out.size() - 1), ',');
  ASSERT_EQ(fields.size(), 3u);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
  auto series = testing::seasonal_series(120, 2, "r01");
  EXPECT_EQ(fields[0], "r01");
  EXPECT_EQ(fields[1], format_timestamp(series.end_time()));
  auto m = load(dir_ / "a/checkpoint.bin");
  EXPECT_EQ(*parse_double(fields[2]), predict(m, series));
}

TEST(CliEvaluate, PerfectCheckpointScoresZero) {
  TempDir dir;
  GapSeries flat("r00", parse_timestamp("2016-01-04"), kDefaultBinWidth,
                 std::vector<double>(80, 6.0));
  write_dataset(dir / "data", {flat}, nullptr);
  DeepGapConfig c;
  c.w = 8;
  c.residual_units = 1;
  c.channels = 2;
  c.filter_rows = c.filter_cols = 3;
  c.head_widths = {4, 1};
  auto m = DeepGapModel::build(c);
  for (auto& t : m.parameters().tensors()) std::fill(t.data().begin(), t.data().end(), 0.0);
  auto bias = m.head().back().bias;
  bias.data()[0] = 6.0;
  {
    std::ofstream f(dir / "perfect.bin", std::ios::binary);
    save_checkpoint(f, m);
  }
  auto r = cli({"--out", (dir / "ev").string(), "evaluate", "--checkpoint",
                (dir / "perfect.bin").string(), "--data", (dir / "data").string(), "--no-svg"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "deepgap_baseline_mode,0");
  EXPECT_NE(r.out.find("persistence,0\n"), std::string::npos) << r.out;
}

TEST(CliPredict, MissingExternalRecordNamesTheBin) {
  TempDir dir;
  auto d = testing::day_type_dataset(60, 1);
  write_dataset(dir / "data", d.series, &*d.external);
  write_file(dir / "ext.cfg", std::string(kSmallConfig) + "use_external = true\n");
  ASSERT_EQ(cli({"--out", (dir / "a").string(), "--config", (dir / "ext.cfg").string(), "train",
                 "--data", (dir / "data").string()})
                .code,
            0);
  // The records end with the last bin; the forecast bin comes after it.
  auto r = cli({"predict", "--checkpoint", (dir / "a/checkpoint.bin").string(), "--data",
                (dir / "data").string(), "--region", d.series[0].region_id()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find(format_timestamp(d.series[0].end_time())), std::string::npos) << r.err;

  auto records = d.external->records;
  records.push_back({d.series[0].end_time(), DayType::kWeekend, "rain", 3.0});
  {
    std::ofstream f(dir / "ext.csv", std::ios::binary);
    write_external(f, records);
  }
  auto ok = cli({"--out", (dir / "p").string(), "predict", "--checkpoint",
                 (dir / "a/checkpoint.bin").string(), "--data", (dir / "data").string(),
                 "--region", d.series[0].region_id(), "--external", (dir / "ext.csv").string()});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(std::isfinite(*parse_double(split_fields(ok.out.substr(0, ok.out.size() - 1), ',')[2])));
}

TEST(CliMisc, HelpAndVersion) {
  auto h = cli({"--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("ingest"), std::string::npos);
  EXPECT_EQ(cli({"train", "--help"}).code, 0);
}

}  // namespace
}  // namespace deepgap
