#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deepgap/error.hpp"
#include "deepgap/model.hpp"
#include "deepgap/nn/ops.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace deepgap {
namespace {

DeepGapConfig small_config() {
  DeepGapConfig c;
  c.w = 8;
  c.residual_units = 1;
  c.filter_rows = c.filter_cols = 3;
  c.channels = 3;
  c.embed_dim = 2;
  c.external_width = 4;
  c.head_widths = {6, 1};
  c.batch_size = 8;
  c.epochs = 5;
  return c;
}

std::vector<double> all_parameters(const DeepGapModel& m) {
  std::vector<double> v;
  for (const auto& t : m.parameters().tensors()) v.insert(v.end(), t.data().begin(), t.data().end());
  return v;
}

TEST(Config, DefaultsAndPresets) {
  DeepGapConfig c;
  EXPECT_EQ(c.w, 12u);
  EXPECT_EQ(c.stride, 1u);
  EXPECT_EQ(c.epsilon, 0.5);
  EXPECT_EQ(c.residual_units, 3u);
  EXPECT_EQ(c.filter_rows, 5u);
  EXPECT_EQ(c.filter_cols, 5u);
  EXPECT_EQ(c.head_widths, (std::vector<std::size_t>{64, 1}));
  EXPECT_EQ(DeepGapConfig::preset("yellow").residual_units, 3u);
  EXPECT_EQ(DeepGapConfig::preset("porto").residual_units, 3u);
  EXPECT_EQ(DeepGapConfig::preset("didi").residual_units, 2u);
  EXPECT_THROW(DeepGapConfig::preset("lyft"), ConfigError);
}

TEST(Config, KeyValueRoundTripAndErrors) {
  auto c = small_config();
  c.use_external = true;
  c.optimizer = OptimizerKind::kAdam;
  c.rec_input = RecurrenceInput::kRaw;
  EXPECT_EQ(DeepGapConfig::from_key_values(c.to_key_values()), c);
  std::istringstream text(c.to_text());
  EXPECT_EQ(DeepGapConfig::load(text), c);
  EXPECT_EQ(c.hash().size(), 64u);
  auto d = c;
  d.epochs = 99;
  EXPECT_NE(d.hash(), c.hash());
  EXPECT_EQ(d.architecture_hash(), c.architecture_hash());

  std::istringstream preset("preset = didi\nepochs = 3\n");
  auto p = DeepGapConfig::load(preset);
  EXPECT_EQ(p.residual_units, 2u);
  EXPECT_EQ(p.epochs, 3u);

  auto expect_field = [](const std::map<std::string, std::string>& kv, const std::string& field) {
    try {
      DeepGapConfig::from_key_values(kv);
      ADD_FAILURE() << "accepted " << field;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_field({{"w", "1"}}, "w");
  expect_field({{"L", "0"}}, "L");
  expect_field({{"filter_size", "4x5"}}, "filter_size");
  expect_field({{"head_widths", "64,2"}}, "head_widths");
  expect_field({{"epsilon", "-1"}}, "epsilon");
  expect_field({{"learning_rate", "fast"}}, "learning_rate");
  expect_field({{"dropout", "0.5"}}, "dropout");
}

TEST(Build, DefaultParameterCountFromShapes) {
  DeepGapConfig c;
  auto m = DeepGapModel::build(c);
  const std::size_t k = 25, ch = 16, L = 3, w = 12;
  const std::size_t stem = ch * 1 * k + ch;
  const std::size_t conv = ch * ch * k + ch;
  const std::size_t pathway = stem + 2 * L * conv;
  const std::size_t head = (3 * ch * w * w) * 64 + 64 + 64 * 1 + 1;
  EXPECT_EQ(m.parameter_count(), 3 * pathway + head);
  EXPECT_EQ(m.parameter_count(), 559233u);
  EXPECT_FALSE(m.external().has_value());
  EXPECT_EQ(m.head_input_width(), 6912u);

  c.use_external = true;
  const std::string tokens[] = {"clear", "rain"};
  auto e = DeepGapModel::build(c, Vocabulary(tokens));
  const std::size_t ext = (3 + 3) * 8 + (2 * 8 + 1) * 16 + 16;
  EXPECT_EQ(e.parameter_count(), 3 * pathway + (6912 + 16) * 64 + 64 + 65 + ext);
}

TEST(Build, SeedDeterminismAndPlainVariant) {
  auto c = small_config();
  auto a = DeepGapModel::build(c);
  auto b = DeepGapModel::build(c);
  EXPECT_EQ(all_parameters(a), all_parameters(b));
  c.seed = 1;
  EXPECT_NE(all_parameters(DeepGapModel::build(c)), all_parameters(a));
  c.use_residual = false;
  EXPECT_EQ(DeepGapModel::build(c).parameter_count(), a.parameter_count());
  EXPECT_THROW(DeepGapModel::build([] {
                 auto bad = small_config();
                 bad.filter_rows = 4;
                 return bad;
               }()),
               ConfigError);
}

TEST(Forward, ZeroParametersGiveFinalBias) {
  auto c = small_config();
  auto m = DeepGapModel::build(c);
  for (auto& t : m.parameters().tensors()) std::fill(t.data().begin(), t.data().end(), 0.0);
  auto bias = m.head().back().bias;
  bias.data()[0] = 2.75;
  EncodedSample s;
  s.images = {Image::Zero(8, 8), Image::Zero(8, 8), Image::Zero(8, 8)};
  EXPECT_EQ(m.forward(s), 2.75);
}

// Layer-by-layer recomposition with the loop convolution and plain loops.
double oracle_forward(const DeepGapModel& m, const EncodedSample& s) {
  const auto& c = m.config();
  const std::size_t w = c.w, ch = c.channels, n = c.filter_rows, k = c.filter_cols;
  auto conv = [&](const std::vector<double>& x, std::size_t cin, const nn::ConvLayer& l) {
    auto z = testing::loop_conv2d(x, cin, w, w, l.filters.data(), l.out_channels(), n, k,
                                  l.bias.data());
    for (auto& v : z) v = std::max(v, 0.0);
    return z;
  };
  std::vector<double> features;
  for (std::size_t p = 0; p < kPathwayCount; ++p) {
    const auto& img = image_of(s.images, static_cast<ImageKind>(p));
    std::vector<double> x(img.data(), img.data() + img.size());
    const auto& path = m.pathways()[p];
    x = conv(x, 1, path.stem);
    for (const auto& u : path.units) {
      auto y = conv(conv(x, ch, u.conv1), ch, u.conv2);
      if (u.skip) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
      }
      x = y;
    }
    features.insert(features.end(), x.begin(), x.end());
  }
  auto dense = [](const std::vector<double>& x, const nn::DenseLayer& l, bool relu) {
    const auto q = l.weights.dim(0), p = l.weights.dim(1);
    std::vector<double> y(q);
    for (std::size_t r = 0; r < q; ++r) {
      double acc = l.bias.data()[r];
      for (std::size_t j = 0; j < p; ++j) acc += l.weights.data()[r * p + j] * x[j];
      y[r] = relu ? std::max(acc, 0.0) : acc;
    }
    return y;
  };
  if (m.external()) {
    const auto& table = m.external()->table.weights;
    const auto D = table.dim(1);
    std::vector<double> e;
    for (auto token : {m.day_token(s.day_type), m.weather_token(s.weather)}) {
      e.insert(e.end(), table.data().begin() + token * D, table.data().begin() + (token + 1) * D);
    }
    e.push_back(s.temperature);
    auto ext = dense(e, m.external()->dense, true);
    features.insert(features.end(), ext.begin(), ext.end());
  }
  for (std::size_t i = 0; i < m.head().size(); ++i) {
    features = dense(features, m.head()[i], i + 1 < m.head().size());
  }
  return features[0];
}

TEST(Forward, MatchesLayerOracle) {
  auto series = testing::seasonal_series(60, 2);
  for (bool external : {false, true}) {
    for (bool residual : {true, false}) {
      auto c = small_config();
      c.use_external = external;
      c.use_residual = residual;
      const std::string tokens[] = {"fog", "sun"};
      auto m = DeepGapModel::build(c, Vocabulary(tokens));
      auto plain = c;
      plain.use_external = false;
      auto samples = make_samples(series, plain, nullptr, {});
      for (std::size_t i = 0; i < samples.size(); i += 13) {
        auto s = samples[i];
        s.day_type = DayType::kHoliday;
        s.weather = 2;
        s.temperature = -3.5;
        EXPECT_NEAR(m.forward(s), oracle_forward(m, s), 1e-10);
      }
    }
  }
}

TEST(Forward, BatchEqualsSingle) {
  auto c = small_config();
  auto m = DeepGapModel::build(c);
  auto samples = make_samples(testing::seasonal_series(40, 3), c, nullptr, {});
  std::vector<const EncodedSample*> batch;
  for (const auto& s : samples) batch.push_back(&s);
  nn::NoGradGuard g;
  auto out = m.forward(batch);
  for (std::size_t i = 0; i < samples.size(); ++i) EXPECT_NEAR(out.data()[i], m.forward(samples[i]), 1e-12);
}

TEST(Forward, ShapeMismatch) {
  auto m = DeepGapModel::build(small_config());
  EncodedSample s;
  s.images = {Image::Zero(12, 12), Image::Zero(12, 12), Image::Zero(12, 12)};
  EXPECT_THROW(m.forward(s), ShapeError);
}

TEST(Gradients, FullFiniteDifferenceSmallModels) {
  auto series = testing::seasonal_series(40, 4);
  for (bool external : {false, true}) {
    auto c = small_config();
    c.use_external = external;
    const std::string tokens[] = {"fog", "sun"};
    auto m = DeepGapModel::build(c, Vocabulary(tokens));
    // Nonzero biases keep every ReLU input away from exact zero.
    Rng rng(8);
    for (auto& t : m.parameters().tensors()) {
      if (t.rank() == 1) {
        for (auto& v : t.data()) v = rng.uniform(-0.1, 0.1);
      }
    }
    auto plain = c;
    plain.use_external = false;
    auto s = make_samples(series, plain, nullptr, {})[10];
    s.weather = 1;
    s.temperature = 0.7;
    auto r = testing::full_gradcheck(m, s, 1e-5, 1e-3);
    EXPECT_EQ(r.parameters, m.parameter_count());
    EXPECT_LT(r.max_relative_error, 1e-5) << r.worst_tensor << "[" << r.worst_index << "] "
                                          << r.worst_analytic << " vs " << r.worst_numeric;
  }
}

TEST(Gradients, StagedOracleAgreesWithFullOracle) {
  auto c = small_config();
  c.residual_units = 2;
  auto m = DeepGapModel::build(c);
  auto s = make_samples(testing::seasonal_series(40, 5), c, nullptr, {})[7];
  auto staged = testing::staged_gradcheck(m, s, 1e-4, 1e-3);
  auto full = testing::full_gradcheck(m, s, 1e-4, 1e-3);
  EXPECT_EQ(staged.parameters, m.parameter_count());
  EXPECT_EQ(full.parameters, m.parameter_count());
  EXPECT_LT(staged.forward_deviation, 1e-12);
  EXPECT_NEAR(staged.max_relative_error, full.max_relative_error,
              1e-6 + 1e-6 * full.max_relative_error);
}

// Central differences are only a gradient oracle where the loss is smooth
// within +-h; a ReLU input crossing zero there breaks the comparison. Every
// disagreement must therefore come with a crossing, and every parameter
// without one must agree.
TEST(Gradients, ComposedNetworkOverSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = small_config();
    c.seed = seed;
    c.residual_units = 2;
    auto m = DeepGapModel::build(c);
    auto s = make_samples(testing::seasonal_series(40, 100 + seed), c, nullptr, {})[seed];
    auto r = testing::staged_gradcheck(m, s, 1e-4, 1e-3, 1e-4);
    EXPECT_EQ(r.parameters, m.parameter_count());
    EXPECT_LT(r.max_relative_error_kink_free, 1e-4) << "seed " << seed;
    EXPECT_EQ(r.over_tolerance, r.over_tolerance_with_kink) << "seed " << seed;
  }
}

TEST(Loss, PermutationInvariantWithinBatch) {
  auto c = small_config();
  auto m = DeepGapModel::build(c);
  auto samples = make_samples(testing::seasonal_series(30, 6), c, nullptr, {});
  std::vector<const EncodedSample*> a, b;
  std::vector<double> ta, tb;
  for (const auto& s : samples) {
    a.push_back(&s);
    ta.push_back(s.target);
  }
  for (auto it = samples.rbegin(); it != samples.rend(); ++it) {
    b.push_back(&*it);
    tb.push_back(it->target);
  }
  nn::NoGradGuard g;
  auto la = nn::mse_loss(m.forward(a), nn::Tensor::from({ta.size()}, ta)).item();
  auto lb = nn::mse_loss(m.forward(b), nn::Tensor::from({tb.size()}, tb)).item();
  EXPECT_NEAR(la, lb, 1e-12 * la);
}

TEST(Samples, TargetsAndExternalJoin) {
  auto c = small_config();
  auto series = testing::seasonal_series(20, 7);
  auto samples = make_samples(series, c, nullptr, {});
  ASSERT_EQ(samples.size(), 12u);
  EXPECT_EQ(samples[3].target, series.values()[3 + 8]);
  EXPECT_EQ(samples[3].target_time, series.time_at(11));
  EXPECT_EQ(samples[3].region, "r00");

  std::vector<ExternalRecord> records;
  for (std::size_t i = 0; i + 1 < 20; ++i) {
    records.push_back({series.time_at(i), DayType::kWeekend, i % 2 ? "rain" : "hail", 4.0});
  }
  const std::string tokens[] = {"rain"};
  Vocabulary vocab(tokens);
  ExternalTable table(records, vocab);
  try {
    make_samples(series, c, &table, vocab);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(format_timestamp(series.time_at(19))), std::string::npos);
  }
  records.push_back({series.time_at(19), DayType::kWeekday, "rain", 5.0});
  ExternalTable full(records, vocab);
  auto joined = make_samples(series, c, &full, vocab);
  EXPECT_EQ(joined[0].weather, 0u);  // "hail" is not in the vocabulary
  EXPECT_EQ(joined[1].weather, 1u);
  EXPECT_EQ(joined.back().temperature, 5.0);
}

TEST(Train, SinusoidLossDecreasesAndIsDeterministic) {
  auto c = small_config();
  c.channels = 4;
  c.w = 12;
  c.epochs = 15;
  c.batch_size = 16;
  c.optimizer = OptimizerKind::kAdam;
  auto samples = make_samples(testing::seasonal_series(200, 0), c, nullptr, {});
  auto a = DeepGapModel::build(c);
  auto b = DeepGapModel::build(c);
  std::vector<std::size_t> seen;
  TrainOptions opts;
  opts.on_epoch = [&](std::size_t e, double) { seen.push_back(e); };
  train(a, samples, opts);
  train(b, samples);
  ASSERT_EQ(a.training_log().size(), 15u);
  EXPECT_LT(a.training_log().back(), a.training_log().front());
  EXPECT_EQ(a.training_log(), b.training_log());
  EXPECT_EQ(seen.size(), 15u);
}

TEST(Train, ZeroLearningRateLeavesParametersAndStopsEarly) {
  auto c = small_config();
  c.learning_rate = 0.0;
  c.epochs = 50;
  auto samples = make_samples(testing::seasonal_series(40, 1), c, nullptr, {});
  auto m = DeepGapModel::build(c);
  const auto before = all_parameters(m);
  auto r = train(m, samples);
  EXPECT_EQ(all_parameters(m), before);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.epochs_run, 1 + kEarlyStopPatience);
}

TEST(Train, DivergenceReportsContext) {
  auto c = small_config();
  c.learning_rate = 1e12;
  c.epochs = 20;
  auto samples = make_samples(testing::seasonal_series(60, 1), c, nullptr, {});
  auto m = DeepGapModel::build(c);
  try {
    train(m, samples);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
    EXPECT_NE(msg.find("learning rate"), std::string::npos) << msg;
  }
  EXPECT_LT(m.training_log().size(), 20u);
}

TEST(Train, TooFewSamples) {
  auto c = small_config();
  auto samples = make_samples(testing::seasonal_series(12, 1), c, nullptr, {});
  auto m = DeepGapModel::build(c);
  EXPECT_THROW(train(m, samples), InvalidArgument);
}

TEST(Predict, ConstantSeriesAndPreconditions) {
  auto c = small_config();
  c.optimizer = OptimizerKind::kAdam;
  c.learning_rate = 1e-2;
  c.epochs = 60;
  GapSeries flat("r00", parse_timestamp("2016-01-04T00:00:00"), kDefaultBinWidth,
                 std::vector<double>(60, 5.0));
  auto m = DeepGapModel::build(c);
  train(m, make_samples(flat, c, nullptr, {}));
  const double p = predict(m, flat);
  EXPECT_NEAR(p, 5.0, 0.05);
  EXPECT_EQ(predict(m, flat), p);
  GapSeries short_series("r00", flat.start_time(), kDefaultBinWidth, std::vector<double>(7, 5.0));
  try {
    predict(m, short_series);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("8"), std::string::npos) << e.what();
  }
}

TEST(Predict, ExternalModelNeedsRecord) {
  auto c = small_config();
  c.use_external = true;
  auto m = DeepGapModel::build(c);
  auto series = testing::seasonal_series(20, 1);
  EXPECT_THROW(predict(m, series), DataError);
  ExternalRecord r{series.end_time(), DayType::kWeekday, "storm", 1.0};
  EXPECT_TRUE(std::isfinite(predict(m, series, &r)));
}

TEST(Checkpoint, RoundTripAndMismatch) {
  auto c = small_config();
  c.use_external = true;
  const std::string tokens[] = {"rain"};
  auto m = DeepGapModel::build(c, Vocabulary(tokens));
  m.training_log() = {3.0, 2.5};
  std::stringstream buf;
  save_checkpoint(buf, m);
  const auto bytes = buf.str();
  auto back = load_checkpoint(buf);
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.vocabulary(), m.vocabulary());
  EXPECT_EQ(back.training_log(), m.training_log());
  EXPECT_EQ(all_parameters(back), all_parameters(m));
  std::stringstream again;
  save_checkpoint(again, back);
  EXPECT_EQ(again.str(), bytes);

  auto other = c;
  other.channels = 4;
  auto different = DeepGapModel::build(other, Vocabulary(tokens));
  std::istringstream in(bytes);
  EXPECT_THROW(load_parameters(in, different), ConfigError);
  std::istringstream garbage("not a checkpoint\n");
  EXPECT_THROW(load_checkpoint(garbage), Error);
  std::istringstream truncated(bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_checkpoint(truncated), Error);
}

TEST(Clone, IndependentStorage) {
  auto m = DeepGapModel::build(small_config());
  auto copy = m.clone();
  EXPECT_EQ(all_parameters(copy), all_parameters(m));
  copy.parameters().tensors()[0].data()[0] += 1.0;
  EXPECT_NE(all_parameters(copy), all_parameters(m));
}

}  // namespace
}  // namespace deepgap
