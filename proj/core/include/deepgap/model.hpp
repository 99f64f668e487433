#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "deepgap/imaging.hpp"
#include "deepgap/ingest.hpp"
#include "deepgap/nn/layers.hpp"
#include "deepgap/series.hpp"

namespace deepgap {

enum class OptimizerKind { kSgd, kAdam };

/// Every knob of the network, the encoder and training. Defaults follow the
/// trip-dataset setup (w = 12, stride 1, epsilon = 0.5, L = 3, 5x5 kernels);
/// the remaining sizes are small desk-scale choices.
struct DeepGapConfig {
  std::size_t w = 12;
  std::size_t stride = 1;
  double epsilon = 0.5;
  RecurrenceInput rec_input = RecurrenceInput::kScaled;
  std::size_t residual_units = 3;  // L, per pathway
  std::size_t filter_rows = 5;
  std::size_t filter_cols = 5;
  std::size_t channels = 16;
  std::size_t embed_dim = 8;
  std::size_t external_width = 16;
  std::vector<std::size_t> head_widths{64, 1};
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  bool use_external = false;
  bool use_residual = true;
  std::size_t ar_order = 3;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// `yellow` and `porto` use L = 3, `didi` uses L = 2.
  static DeepGapConfig preset(std::string_view dataset);

  /// Applies `preset` first if present, then the other keys. Unknown keys
  /// and unparsable values are a ConfigError. The result is validated.
  static DeepGapConfig from_key_values(const std::map<std::string, std::string>& kv);
  static DeepGapConfig load(std::istream& in);

  /// Canonical `key = value` text covering every field; from_key_values()
  /// of this map reproduces the config.
  std::map<std::string, std::string> to_key_values() const;
  std::string to_text() const;

  /// SHA-256 of to_text().
  std::string hash() const;
  /// SHA-256 over the fields that determine parameter shapes.
  std::string architecture_hash() const;

  friend bool operator==(const DeepGapConfig&, const DeepGapConfig&) = default;
};

/// One training or evaluation instance: the images of a window, the
/// external context of the bin being predicted, and the raw target gap.
struct EncodedSample {
  ImageTriple images;
  DayType day_type = DayType::kWeekday;
  std::size_t weather = 0;  // index into the weather vocabulary
  double temperature = 0.0;
  double target = 0.0;
  double scale_min = 0.0;
  double scale_max = 0.0;
  std::string region;
  std::size_t target_index = 0;
  Timestamp target_time;
};

/// Per-bin external records keyed by bin start.
class ExternalTable {
 public:
  ExternalTable() = default;
  ExternalTable(std::span<const ExternalRecord> records, Vocabulary vocabulary);

  const ExternalRecord* find(Timestamp bin_time) const;
  const Vocabulary& vocabulary() const { return vocabulary_; }
  bool empty() const { return by_time_.empty(); }

 private:
  std::map<Timestamp, ExternalRecord> by_time_;
  Vocabulary vocabulary_;
};

/// Encodes every target-bearing window of the series. When `external` is
/// given every target bin must have a record (DataError otherwise); weather
/// tokens are mapped through `vocabulary`.
std::vector<EncodedSample> make_samples(const GapSeries& series, const DeepGapConfig& config,
                                        const ExternalTable* external,
                                        const Vocabulary& vocabulary);

/// A convolution followed by L residual (or plain) units, over one image type.
struct Pathway {
  nn::ConvLayer stem;
  std::vector<nn::ResidualUnit> units;
};

/// Embedding of (day type, weather) followed by one dense layer; the raw
/// temperature is appended to the embedding output before the dense layer.
struct ExternalNet {
  nn::EmbeddingTable table;
  nn::DenseLayer dense;
};

enum class ImageKind : std::size_t { kGasf = 0, kGadf = 1, kRec = 2 };
inline constexpr std::size_t kPathwayCount = 3;

const Image& image_of(const ImageTriple& images, ImageKind kind);

class DeepGapModel {
 public:
  /// Seeded initialization; throws ConfigError for an invalid config.
  static DeepGapModel build(const DeepGapConfig& config, Vocabulary weather_vocabulary = {});

  DeepGapModel(DeepGapModel&&) = default;
  DeepGapModel& operator=(DeepGapModel&&) = default;
  DeepGapModel(const DeepGapModel&) = delete;
  DeepGapModel& operator=(const DeepGapModel&) = delete;

  /// Deep copy with independent parameter storage.
  DeepGapModel clone() const;

  const DeepGapConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  const std::array<Pathway, kPathwayCount>& pathways() const { return pathways_; }
  const std::optional<ExternalNet>& external() const { return external_; }
  const std::vector<nn::DenseLayer>& head() const { return head_; }
  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  std::vector<double>& training_log() { return training_log_; }
  const std::vector<double>& training_log() const { return training_log_; }

  /// Width of the feature vector a pathway emits (channels * w * w).
  std::size_t pathway_width() const;
  /// Input width of the first head layer.
  std::size_t head_input_width() const;
  /// Embedding row of a day type / weather index.
  std::size_t day_token(DayType day) const { return static_cast<std::size_t>(day); }
  std::size_t weather_token(std::size_t weather) const { return kDayTypeCount + weather; }

  /// Predictions, shape (N), for a batch of samples. Records a graph when
  /// gradients are enabled.
  nn::Tensor forward(std::span<const EncodedSample* const> batch) const;
  double forward(const EncodedSample& sample) const;

  /// Building blocks of forward(), exposed for inspection and testing.
  nn::Tensor images_tensor(std::span<const EncodedSample* const> batch, ImageKind kind) const;
  nn::Tensor pathway_forward(ImageKind kind, const nn::Tensor& images) const;
  nn::Tensor external_forward(std::span<const EncodedSample* const> batch) const;
  nn::Tensor head_forward(const nn::Tensor& features) const;

 private:
  DeepGapModel() = default;
  void collect_parameters();

  DeepGapConfig config_;
  Vocabulary vocabulary_;
  std::array<Pathway, kPathwayCount> pathways_;
  std::optional<ExternalNet> external_;
  std::vector<nn::DenseLayer> head_;
  nn::ParameterSet params_;
  std::vector<double> training_log_;
};

struct TrainOptions {
  /// Called after each epoch with (epoch index from 0, mean epoch loss).
  std::function<void(std::size_t, double)> on_epoch;
};

struct TrainResult {
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

inline constexpr double kEarlyStopDelta = 1e-6;
inline constexpr std::size_t kEarlyStopPatience = 5;

/// Mini-batch training with a seeded per-epoch shuffle. Appends the mean
/// loss of every epoch to model.training_log(). Stops after config.epochs,
/// or earlier once the epoch loss has improved by less than 1e-6 for five
/// epochs in a row. Throws NumericError (epoch, batch, learning rate in the
/// message) on a non-finite loss; the log keeps the finished epochs.
TrainResult train(DeepGapModel& model, std::span<const EncodedSample> samples,
                  const TrainOptions& options = {});

/// Forecast for the bin after the series from its last w values.
/// `external` must be given for models that use external data.
double predict(const DeepGapModel& model, const GapSeries& series,
               const ExternalRecord* external = nullptr);

/// Checkpoint container:
///   line 1: `DEEPGAP-CHECKPOINT 1`
///   line 2: JSON manifest (config, vocabulary, seed, config hash,
///           parameter names and shapes, training log)
///   rest:   every parameter as little-endian float64, in manifest order.
void save_checkpoint(std::ostream& out, const DeepGapModel& model);
DeepGapModel load_checkpoint(std::istream& in);

/// Loads parameter values into an existing model. Throws ConfigError when
/// the checkpoint's names or shapes differ from the model's.
void load_parameters(std::istream& in, DeepGapModel& model);

}  // namespace deepgap
