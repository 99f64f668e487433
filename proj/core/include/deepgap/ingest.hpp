#pragma once

#include <chrono>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "deepgap/series.hpp"
#include "deepgap/time.hpp"

namespace deepgap {

// --- trip events ----------------------------------------------------------

enum class EventKind { kPickup, kDropoff };

/// A pickup is one unit of demand, a dropoff one unit of supply.
struct TripEvent {
  Timestamp event_time;
  double latitude = 0.0;
  double longitude = 0.0;
  EventKind kind = EventKind::kPickup;

  friend bool operator==(const TripEvent&, const TripEvent&) = default;
};

/// Which header columns carry the trip fields. Dropoff columns are optional;
/// leave them empty for layouts without dropoff data.
struct ColumnMapping {
  char delimiter = ',';
  std::string pickup_time;
  std::string pickup_lat;
  std::string pickup_lon;
  std::string dropoff_time;
  std::string dropoff_lat;
  std::string dropoff_lon;

  /// Keys: delimiter, pickup_time, pickup_lat, pickup_lon, dropoff_time,
  /// dropoff_lat, dropoff_lon. Unknown keys are a ConfigError.
  static ColumnMapping from_key_values(const std::map<std::string, std::string>& kv);
  static ColumnMapping load(std::istream& in);
};

struct TripParseResult {
  std::vector<TripEvent> events;
  std::size_t rows_read = 0;
  std::size_t rows_rejected = 0;
};

/// One pickup per valid row, plus a dropoff when the row has dropoff fields.
/// Invalid rows are skipped and counted. Throws ConfigError if mandatory
/// columns are missing and DataError if more than half the rows are rejected.
TripParseResult parse_trips(std::istream& source, const ColumnMapping& mapping);

// --- regions --------------------------------------------------------------

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
  friend auto operator<=>(const GeoPoint&, const GeoPoint&) = default;
};

struct RegionModel {
  std::vector<GeoPoint> centroids;

  std::size_t k() const { return centroids.size(); }
};

struct KMeansTrace {
  std::size_t iterations = 0;
  /// Within-cluster sum of squares after each assignment step.
  std::vector<double> objective;
};

inline constexpr std::size_t kMaxLloydIterations = 300;

/// k-means++ seeding followed by Lloyd iterations on (lat, lon) with plain
/// Euclidean distance. Stops when no assignment changes or after 300
/// iterations. Throws InvalidArgument if there are fewer than k distinct
/// points.
RegionModel fit_regions(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed,
                        KMeansTrace* trace = nullptr);

/// Index of the nearest centroid; ties go to the lowest index.
std::size_t assign_region(const RegionModel& model, GeoPoint point);

/// `k` on the first line, then one `lat,lon` row per centroid.
void write_region_model(std::ostream& out, const RegionModel& model);
RegionModel read_region_model(std::istream& in);

/// Zero-padded region identifiers `r00`, `r01`, ... for a model of size k.
std::string region_name(std::size_t index, std::size_t k);

// --- gap series -----------------------------------------------------------

struct TimeSpan {
  Timestamp start;
  Timestamp end;  // exclusive
};

/// gap(region, bin) = pickups - dropoffs located in that region and bin.
/// Empty bins are 0, events outside the span are ignored. Throws ConfigError
/// if end <= start or bin_width does not divide the span.
std::vector<GapSeries> build_gap_series(std::span<const TripEvent> events,
                                        const RegionModel& model, Duration bin_width,
                                        TimeSpan span);

/// Smallest bin-aligned span covering every event.
TimeSpan covering_span(std::span<const TripEvent> events, Duration bin_width);

/// Pre-computed gaps as `region,timestamp,gap` rows (header required).
/// Each region becomes one series spanning its first to last row; missing
/// bins are zero-filled. Duplicate or misaligned bins are a DataError.
std::vector<GapSeries> load_region_gaps(std::istream& source, Duration bin_width);

// --- external data --------------------------------------------------------

enum class DayType { kWeekday = 0, kWeekend = 1, kHoliday = 2 };
inline constexpr std::size_t kDayTypeCount = 3;

const char* to_string(DayType type);
DayType parse_day_type(std::string_view text);

/// Holiday first, then Saturday/Sunday as weekend, else weekday.
DayType classify_day(Timestamp t, const std::set<std::chrono::sys_days>& holidays);

/// Frozen token -> index map. Index 0 is always the reserved `unknown`.
class Vocabulary {
 public:
  static constexpr const char* kUnknown = "unknown";

  Vocabulary();
  /// Sorted, de-duplicated tokens after `unknown`.
  explicit Vocabulary(std::span<const std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  /// Unknown tokens map to 0.
  std::size_t index_of(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::span<const std::string> tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> tokens_;
};

struct ExternalRecord {
  Timestamp bin_time;
  DayType day_type = DayType::kWeekday;
  std::string weather;
  double temperature = 0.0;

  friend bool operator==(const ExternalRecord&, const ExternalRecord&) = default;
};

struct ExternalData {
  std::vector<ExternalRecord> records;
  Vocabulary vocabulary;
};

inline constexpr Duration kMaxWeatherGap = std::chrono::hours{24};

/// Reads `timestamp,weather_token,temperature_c` observations and forward
/// fills them onto every bin of the span. A bin more than 24 h after the
/// latest observation (or before the first) is a DataError.
ExternalData load_external(std::istream& source, Duration bin_width, TimeSpan span,
                           const std::set<std::chrono::sys_days>& holidays = {});

/// One `YYYY-MM-DD` per line; blank lines and `#` comments ignored.
std::set<std::chrono::sys_days> read_holidays(std::istream& in);

/// `timestamp,day_type,weather,temperature_c` (the aligned per-bin form).
void write_external(std::ostream& out, std::span<const ExternalRecord> records);
ExternalData read_external(std::istream& in);

// --- split ----------------------------------------------------------------

struct SplitIndices {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

inline constexpr double kTrainFraction = 0.85;

/// First floor(0.85 n) items train, the rest test. Throws InvalidArgument
/// for n < 2, or if the rule would leave either side empty.
SplitIndices split_counts(std::size_t n);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_test(std::span<const T> ordered) {
  auto counts = split_counts(ordered.size());
  auto mid = ordered.begin() + static_cast<std::ptrdiff_t>(counts.train_count);
  return {std::vector<T>(ordered.begin(), mid), std::vector<T>(mid, ordered.end())};
}

}  // namespace deepgap
