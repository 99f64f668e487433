#include "deepgap/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "deepgap/digest.hpp"
#include "deepgap/error.hpp"
#include "deepgap/nn/ops.hpp"
#include "deepgap/random.hpp"
#include "deepgap/text.hpp"

namespace deepgap {

// --- config ---------------------------------------------------------------

void DeepGapConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
  };
  if (w < 2) fail("w", "window length must be at least 2");
  if (stride < 1) fail("stride", "must be at least 1");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("epsilon", "must be positive");
  if (residual_units < 1) fail("L", "need at least one residual unit");
  if (filter_rows % 2 == 0 || filter_cols % 2 == 0) fail("filter_size", "n and m must be odd");
  if (filter_rows > w || filter_cols > w) fail("filter_size", "kernel larger than the w x w image");
  if (channels < 1) fail("channels", "must be at least 1");
  if (embed_dim < 1) fail("embed_dim", "must be at least 1");
  if (external_width < 1) fail("external_width", "must be at least 1");
  if (head_widths.empty()) fail("head_widths", "need at least one layer");
  for (auto width : head_widths) {
    if (width < 1) fail("head_widths", "widths must be positive");
  }
  if (head_widths.back() != 1) fail("head_widths", "final width must be 1");
  if (batch_size < 1) fail("batch_size", "must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate", "must be a finite non-negative number");
  }
  if (ar_order < 1) fail("ar_order", "must be at least 1");
}

DeepGapConfig DeepGapConfig::preset(std::string_view dataset) {
  DeepGapConfig config;
  if (dataset == "yellow" || dataset == "porto") {
    config.residual_units = 3;
  } else if (dataset == "didi") {
    config.residual_units = 2;
  } else {
    throw ConfigError("unknown preset '" + std::string(dataset) + "'");
  }
  return config;
}

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
  auto v = parse_int(value);
  if (!v || *v < 0) {
    throw ConfigError("config field '" + key + "': expected a non-negative integer, got '" +
                      value + "'");
  }
  return static_cast<std::size_t>(*v);
}

double parse_real(const std::string& key, const std::string& value) {
  auto v = parse_double(value);
  if (!v) {
    throw ConfigError("config field '" + key + "': expected a number, got '" + value + "'");
  }
  return *v;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config field '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value, char sep) {
  std::vector<std::size_t> out;
  for (const auto& field : split_fields(value, sep)) {
    out.push_back(parse_count(key, field));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& values, char sep) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) s += sep;
    s += std::to_string(values[i]);
  }
  return s;
}

}  // namespace

DeepGapConfig DeepGapConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  DeepGapConfig c;
  if (auto it = kv.find("preset"); it != kv.end()) {
    c = preset(it->second);
  }
  for (const auto& [key, value] : kv) {
    if (key == "preset") {
      continue;
    } else if (key == "w") {
      c.w = parse_count(key, value);
    } else if (key == "stride") {
      c.stride = parse_count(key, value);
    } else if (key == "epsilon") {
      c.epsilon = parse_real(key, value);
    } else if (key == "rec_input") {
      if (value == "scaled") {
        c.rec_input = RecurrenceInput::kScaled;
      } else if (value == "raw") {
        c.rec_input = RecurrenceInput::kRaw;
      } else {
        throw ConfigError("config field 'rec_input': expected scaled or raw");
      }
    } else if (key == "L") {
      c.residual_units = parse_count(key, value);
    } else if (key == "filter_size") {
      auto dims = parse_list(key, value, value.find('x') != std::string::npos ? 'x' : ',');
      if (dims.size() == 1) {
        dims.push_back(dims[0]);
      }
      if (dims.size() != 2) {
        throw ConfigError("config field 'filter_size': expected 'n,m'");
      }
      c.filter_rows = dims[0];
      c.filter_cols = dims[1];
    } else if (key == "channels") {
      c.channels = parse_count(key, value);
    } else if (key == "embed_dim") {
      c.embed_dim = parse_count(key, value);
    } else if (key == "external_width") {
      c.external_width = parse_count(key, value);
    } else if (key == "head_widths") {
      c.head_widths = parse_list(key, value, ',');
    } else if (key == "batch_size") {
      c.batch_size = parse_count(key, value);
    } else if (key == "epochs") {
      c.epochs = parse_count(key, value);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_real(key, value);
    } else if (key == "optimizer") {
      if (value == "sgd") {
        c.optimizer = OptimizerKind::kSgd;
      } else if (value == "adam") {
        c.optimizer = OptimizerKind::kAdam;
      } else {
        throw ConfigError("config field 'optimizer': expected sgd or adam");
      }
    } else if (key == "use_external") {
      c.use_external = parse_flag(key, value);
    } else if (key == "use_residual") {
      c.use_residual = parse_flag(key, value);
    } else if (key == "ar_order") {
      c.ar_order = parse_count(key, value);
    } else if (key == "seed") {
      auto v = parse_int(value);
      if (!v) {
        throw ConfigError("config field 'seed': expected an integer");
      }
      c.seed = static_cast<std::uint64_t>(*v);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

DeepGapConfig DeepGapConfig::load(std::istream& in) { return from_key_values(parse_key_values(in)); }

std::map<std::string, std::string> DeepGapConfig::to_key_values() const {
  return {
      {"w", std::to_string(w)},
      {"stride", std::to_string(stride)},
      {"epsilon", format_double(epsilon)},
      {"rec_input", rec_input == RecurrenceInput::kScaled ? "scaled" : "raw"},
      {"L", std::to_string(residual_units)},
      {"filter_size", std::to_string(filter_rows) + "," + std::to_string(filter_cols)},
      {"channels", std::to_string(channels)},
      {"embed_dim", std::to_string(embed_dim)},
      {"external_width", std::to_string(external_width)},
      {"head_widths", join(head_widths, ',')},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"learning_rate", format_double(learning_rate)},
      {"optimizer", optimizer == OptimizerKind::kSgd ? "sgd" : "adam"},
      {"use_external", use_external ? "true" : "false"},
      {"use_residual", use_residual ? "true" : "false"},
      {"ar_order", std::to_string(ar_order)},
      {"seed", std::to_string(seed)},
  };
}

std::string DeepGapConfig::to_text() const {
  std::string text;
  for (const auto& [key, value] : to_key_values()) {
    text += key + " = " + value + "\n";
  }
  return text;
}

std::string DeepGapConfig::hash() const { return sha256_hex(to_text()); }

std::string DeepGapConfig::architecture_hash() const {
  auto kv = to_key_values();
  std::string text;
  for (const char* key : {"w", "L", "filter_size", "channels", "embed_dim", "external_width",
                          "head_widths", "use_external", "use_residual"}) {
    text += std::string(key) + " = " + kv.at(key) + "\n";
  }
  return sha256_hex(text);
}

// --- samples --------------------------------------------------------------

ExternalTable::ExternalTable(std::span<const ExternalRecord> records, Vocabulary vocabulary)
    : vocabulary_(std::move(vocabulary)) {
  for (const auto& r : records) {
    by_time_.insert_or_assign(r.bin_time, r);
  }
}

const ExternalRecord* ExternalTable::find(Timestamp bin_time) const {
  auto it = by_time_.find(bin_time);
  return it == by_time_.end() ? nullptr : &it->second;
}

std::vector<EncodedSample> make_samples(const GapSeries& series, const DeepGapConfig& config,
                                        const ExternalTable* external,
                                        const Vocabulary& vocabulary) {
  if (config.use_external && external == nullptr) {
    throw ConfigError("use_external is set but no external data was supplied");
  }
  std::vector<EncodedSample> samples;
  for (auto& block : segment(series, config.w, config.stride)) {
    EncodedSample s;
    s.images = encode(block, config.epsilon, config.rec_input);
    s.target = *block.target;
    s.scale_min = block.raw_min();
    s.scale_max = block.raw_max();
    s.region = series.region_id();
    s.target_index = block.origin_index + config.w;
    s.target_time = series.time_at(s.target_index);
    if (external != nullptr) {
      const auto* record = external->find(s.target_time);
      if (record == nullptr) {
        throw DataError("no external record for bin " + format_timestamp(s.target_time));
      }
      s.day_type = record->day_type;
      s.weather = vocabulary.index_of(record->weather);
      s.temperature = record->temperature;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// --- model ----------------------------------------------------------------

const Image& image_of(const ImageTriple& images, ImageKind kind) {
  switch (kind) {
    case ImageKind::kGasf:
      return images.gasf;
    case ImageKind::kGadf:
      return images.gadf;
    case ImageKind::kRec:
      return images.rec;
  }
  return images.gasf;
}

namespace {

const char* kind_name(std::size_t k) {
  static constexpr const char* kNames[] = {"gasf", "gadf", "rec"};
  return kNames[k];
}

}  // namespace

DeepGapModel DeepGapModel::build(const DeepGapConfig& config, Vocabulary weather_vocabulary) {
  config.validate();
  DeepGapModel model;
  model.config_ = config;
  model.vocabulary_ = std::move(weather_vocabulary);
  Rng rng(config.seed);
  for (std::size_t k = 0; k < kPathwayCount; ++k) {
    const std::string prefix = std::string("pathway.") + kind_name(k);
    auto& p = model.pathways_[k];
    p.stem = nn::ConvLayer::create(1, config.channels, config.filter_rows, config.filter_cols, rng,
                                   prefix + ".stem");
    for (std::size_t u = 0; u < config.residual_units; ++u) {
      p.units.push_back(nn::ResidualUnit::create(config.channels, config.filter_rows,
                                                 config.filter_cols, config.use_residual, rng,
                                                 prefix + ".unit" + std::to_string(u)));
    }
  }
  if (config.use_external) {
    ExternalNet ext;
    ext.table = nn::EmbeddingTable::create(kDayTypeCount + model.vocabulary_.size(),
                                           config.embed_dim, rng, "external.embedding");
    ext.dense = nn::DenseLayer::create(2 * config.embed_dim + 1, config.external_width, rng,
                                       "external.dense");
    model.external_ = std::move(ext);
  }
  std::size_t width = model.head_input_width();
  for (std::size_t i = 0; i < config.head_widths.size(); ++i) {
    model.head_.push_back(
        nn::DenseLayer::create(width, config.head_widths[i], rng, "head." + std::to_string(i)));
    width = config.head_widths[i];
  }
  model.collect_parameters();
  return model;
}

void DeepGapModel::collect_parameters() {
  params_ = {};
  for (const auto& p : pathways_) {
    params_.add(p.stem);
    for (const auto& u : p.units) {
      params_.add(u);
    }
  }
  if (external_) {
    params_.add(external_->table);
    params_.add(external_->dense);
  }
  for (const auto& layer : head_) {
    params_.add(layer);
  }
}

DeepGapModel DeepGapModel::clone() const {
  DeepGapModel copy;
  copy.config_ = config_;
  copy.vocabulary_ = vocabulary_;
  auto dup = [](const nn::Tensor& t) {
    auto c = nn::Tensor::from(t.shape(), {t.data().begin(), t.data().end()}, true);
    c.set_name(t.name());
    return c;
  };
  auto dup_conv = [&](const nn::ConvLayer& l) { return nn::ConvLayer{dup(l.filters), dup(l.bias)}; };
  auto dup_dense = [&](const nn::DenseLayer& l) {
    return nn::DenseLayer{dup(l.weights), dup(l.bias)};
  };
  for (std::size_t k = 0; k < kPathwayCount; ++k) {
    copy.pathways_[k].stem = dup_conv(pathways_[k].stem);
    for (const auto& u : pathways_[k].units) {
      copy.pathways_[k].units.push_back({dup_conv(u.conv1), dup_conv(u.conv2), u.skip});
    }
  }
  if (external_) {
    copy.external_ = ExternalNet{{dup(external_->table.weights)}, dup_dense(external_->dense)};
  }
  for (const auto& layer : head_) {
    copy.head_.push_back(dup_dense(layer));
  }
  copy.training_log_ = training_log_;
  copy.collect_parameters();
  return copy;
}

std::size_t DeepGapModel::pathway_width() const { return config_.channels * config_.w * config_.w; }

std::size_t DeepGapModel::head_input_width() const {
  return kPathwayCount * pathway_width() + (config_.use_external ? config_.external_width : 0);
}

nn::Tensor DeepGapModel::images_tensor(std::span<const EncodedSample* const> batch,
                                       ImageKind kind) const {
  const std::size_t w = config_.w;
  std::vector<double> values;
  values.reserve(batch.size() * w * w);
  for (const auto* s : batch) {
    const auto& img = image_of(s->images, kind);
    if (static_cast<std::size_t>(img.rows()) != w || static_cast<std::size_t>(img.cols()) != w) {
      throw ShapeError("sample image is " + std::to_string(img.rows()) + "x" +
                       std::to_string(img.cols()) + ", model expects " + std::to_string(w) + "x" +
                       std::to_string(w));
    }
    values.insert(values.end(), img.data(), img.data() + img.size());
  }
  return nn::Tensor::from({batch.size(), 1, w, w}, std::move(values));
}

nn::Tensor DeepGapModel::pathway_forward(ImageKind kind, const nn::Tensor& images) const {
  const auto& p = pathways_[static_cast<std::size_t>(kind)];
  auto h = nn::relu(nn::conv2d(images, p.stem));
  for (const auto& unit : p.units) {
    h = nn::residual_forward(h, unit);
  }
  return nn::reshape(h, {images.dim(0), pathway_width()});
}

nn::Tensor DeepGapModel::external_forward(std::span<const EncodedSample* const> batch) const {
  if (!external_) {
    throw ConfigError("model was built without the external network");
  }
  std::vector<std::vector<std::size_t>> tokens;
  std::vector<double> temps;
  for (const auto* s : batch) {
    if (s->weather >= vocabulary_.size()) {
      throw ShapeError("weather index " + std::to_string(s->weather) +
                       " outside the model vocabulary of " + std::to_string(vocabulary_.size()));
    }
    tokens.push_back({day_token(s->day_type), weather_token(s->weather)});
    temps.push_back(s->temperature);
  }
  auto embedded = nn::embed(tokens, external_->table.weights);
  auto temperature = nn::Tensor::from({batch.size(), 1}, std::move(temps));
  return nn::relu(nn::dense(nn::concat({embedded, temperature}), external_->dense));
}

nn::Tensor DeepGapModel::head_forward(const nn::Tensor& features) const {
  auto x = features;
  for (std::size_t i = 0; i < head_.size(); ++i) {
    x = nn::dense(x, head_[i]);
    if (i + 1 < head_.size()) {
      x = nn::relu(x);
    }
  }
  return x;
}

nn::Tensor DeepGapModel::forward(std::span<const EncodedSample* const> batch) const {
  if (batch.empty()) {
    throw ShapeError("forward: empty batch");
  }
  std::vector<nn::Tensor> parts;
  for (std::size_t k = 0; k < kPathwayCount; ++k) {
    auto kind = static_cast<ImageKind>(k);
    parts.push_back(pathway_forward(kind, images_tensor(batch, kind)));
  }
  if (config_.use_external) {
    parts.push_back(external_forward(batch));
  }
  auto out = head_forward(nn::concat(parts));
  return nn::reshape(out, {batch.size()});
}

double DeepGapModel::forward(const EncodedSample& sample) const {
  nn::NoGradGuard no_grad;
  const EncodedSample* batch[] = {&sample};
  return forward(batch).item();
}

// --- training -------------------------------------------------------------

namespace {

std::unique_ptr<nn::Optimizer> make_optimizer(const DeepGapConfig& config) {
  if (config.optimizer == OptimizerKind::kAdam) {
    return std::make_unique<nn::Adam>(config.learning_rate);
  }
  return std::make_unique<nn::Sgd>(config.learning_rate);
}

// Shuffling draws from its own stream so that it does not depend on how
// many draws initialization consumed.
constexpr std::uint64_t kShuffleStream = 0x5DEECE66Dull;

}  // namespace

TrainResult train(DeepGapModel& model, std::span<const EncodedSample> samples,
                  const TrainOptions& options) {
  const auto& config = model.config();
  if (samples.size() < config.batch_size) {
    throw InvalidArgument("training needs at least batch_size=" +
                          std::to_string(config.batch_size) + " samples, got " +
                          std::to_string(samples.size()));
  }
  auto optimizer = make_optimizer(config);
  Rng rng(config.seed ^ kShuffleStream);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  model.parameters().zero_grad();

  TrainResult result;
  std::size_t stalled = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const EncodedSample*> batch;
      std::vector<double> targets;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&samples[order[i]]);
        targets.push_back(samples[order[i]].target);
      }
      const auto n = batch.size();
      auto loss = nn::mse_loss(model.forward(batch), nn::Tensor::from({n}, std::move(targets)));
      const double value = loss.item();
      const auto where = [&] {
        return " at epoch " + std::to_string(epoch + 1) + ", batch " +
               std::to_string(batch_index + 1) + " (learning rate " +
               format_double(config.learning_rate) + ")";
      };
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss" + where());
      }
      nn::backward(loss);
      try {
        optimizer->step(model.parameters());
      } catch (const NumericError& e) {
        throw NumericError(e.what() + where());
      }
      total += value * static_cast<double>(n);
    }
    const double mean = total / static_cast<double>(samples.size());
    auto& log = model.training_log();
    const bool has_previous = !log.empty();
    const double previous = has_previous ? log.back() : 0.0;
    log.push_back(mean);
    result.epochs_run = epoch + 1;
    if (options.on_epoch) {
      options.on_epoch(epoch, mean);
    }
    if (has_previous && previous - mean < kEarlyStopDelta) {
      if (++stalled >= kEarlyStopPatience) {
        result.stopped_early = true;
        break;
      }
    } else {
      stalled = 0;
    }
  }
  return result;
}

double predict(const DeepGapModel& model, const GapSeries& series, const ExternalRecord* external) {
  const auto& config = model.config();
  auto block = last_window(series, config.w);
  EncodedSample sample;
  sample.images = encode(block, config.epsilon, config.rec_input);
  sample.region = series.region_id();
  sample.target_index = series.size();
  sample.target_time = series.end_time();
  sample.scale_min = block.raw_min();
  sample.scale_max = block.raw_max();
  if (config.use_external) {
    if (external == nullptr) {
      throw DataError("model uses external data but no record was given for bin " +
                      format_timestamp(sample.target_time));
    }
    sample.day_type = external->day_type;
    sample.weather = model.vocabulary().index_of(external->weather);
    sample.temperature = external->temperature;
  }
  return model.forward(sample);
}

// --- checkpoints ----------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "DEEPGAP-CHECKPOINT 1";

nlohmann::json manifest_of(const DeepGapModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& t : model.parameters().tensors()) {
    params.push_back({{"name", t.name()}, {"shape", t.shape()}});
  }
  std::vector<std::string> vocab(model.vocabulary().tokens().begin(),
                                 model.vocabulary().tokens().end());
  return {{"format", 1},
          {"config", model.config().to_key_values()},
          {"config_hash", model.config().hash()},
          {"seed", model.config().seed},
          {"vocabulary", vocab},
          {"parameters", params},
          {"training_log", model.training_log()}};
}

nlohmann::json read_manifest(std::istream& in) {
  std::string line;
  if (!read_line(in, line) || line != kMagic) {
    throw DataError("not a deepgap checkpoint");
  }
  if (!read_line(in, line)) {
    throw DataError("checkpoint: missing manifest");
  }
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad manifest: ") + e.what());
  }
}

void read_values(std::istream& in, const nlohmann::json& manifest, DeepGapModel& model) {
  auto tensors = model.parameters().tensors();
  const auto& params = manifest.at("parameters");
  if (params.size() != tensors.size()) {
    throw ConfigError("checkpoint has " + std::to_string(params.size()) +
                      " parameter tensors, model has " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto name = params[i].at("name").get<std::string>();
    const auto shape = params[i].at("shape").get<nn::Shape>();
    if (name != tensors[i].name() || shape != tensors[i].shape()) {
      throw ConfigError("checkpoint parameter '" + name + "' " + nn::shape_string(shape) +
                        " does not match model parameter '" + tensors[i].name() + "' " +
                        nn::shape_string(tensors[i].shape()));
    }
  }
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
  for (auto& t : tensors) {
    auto data = t.data();
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(data.size() * sizeof(double))) {
      throw DataError("checkpoint truncated in parameter '" + t.name() + "'");
    }
  }
  model.training_log() = manifest.at("training_log").get<std::vector<double>>();
}

}  // namespace

void save_checkpoint(std::ostream& out, const DeepGapModel& model) {
  out << kMagic << '\n' << manifest_of(model).dump() << '\n';
  for (const auto& t : model.parameters().tensors()) {
    auto data = t.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) {
    throw Error("failed writing checkpoint");
  }
}

DeepGapModel load_checkpoint(std::istream& in) {
  auto manifest = read_manifest(in);
  auto config = DeepGapConfig::from_key_values(
      manifest.at("config").get<std::map<std::string, std::string>>());
  if (config.hash() != manifest.at("config_hash").get<std::string>()) {
    throw DataError("checkpoint config hash does not match its config");
  }
  auto tokens = manifest.at("vocabulary").get<std::vector<std::string>>();
  auto model = DeepGapModel::build(config, Vocabulary(tokens));
  if (std::vector<std::string>(model.vocabulary().tokens().begin(),
                               model.vocabulary().tokens().end()) != tokens) {
    throw DataError("checkpoint vocabulary is not in canonical order");
  }
  read_values(in, manifest, model);
  return model;
}

void load_parameters(std::istream& in, DeepGapModel& model) {
  read_values(in, read_manifest(in), model);
}

}  // namespace deepgap
