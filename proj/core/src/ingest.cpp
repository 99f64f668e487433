#include "deepgap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "deepgap/error.hpp"
#include "deepgap/random.hpp"
#include "deepgap/text.hpp"

namespace deepgap {

// --- trip events ----------------------------------------------------------

ColumnMapping ColumnMapping::from_key_values(const std::map<std::string, std::string>& kv) {
  ColumnMapping m;
  for (const auto& [key, value] : kv) {
    if (key == "delimiter") {
      if (value == "\\t" || value == "tab") {
        m.delimiter = '\t';
      } else if (value.size() == 1) {
        m.delimiter = value[0];
      } else {
        throw ConfigError("column mapping: delimiter must be a single character");
      }
    } else if (key == "pickup_time") {
      m.pickup_time = value;
    } else if (key == "pickup_lat") {
      m.pickup_lat = value;
    } else if (key == "pickup_lon") {
      m.pickup_lon = value;
    } else if (key == "dropoff_time") {
      m.dropoff_time = value;
    } else if (key == "dropoff_lat") {
      m.dropoff_lat = value;
    } else if (key == "dropoff_lon") {
      m.dropoff_lon = value;
    } else {
      throw ConfigError("column mapping: unknown key '" + key + "'");
    }
  }
  if (m.pickup_time.empty() || m.pickup_lat.empty() || m.pickup_lon.empty()) {
    throw ConfigError("column mapping: pickup_time, pickup_lat and pickup_lon are required");
  }
  const int dropoff_given =
      !m.dropoff_time.empty() + !m.dropoff_lat.empty() + !m.dropoff_lon.empty();
  if (dropoff_given != 0 && dropoff_given != 3) {
    throw ConfigError("column mapping: dropoff_time, dropoff_lat and dropoff_lon go together");
  }
  return m;
}

ColumnMapping ColumnMapping::load(std::istream& in) { return from_key_values(parse_key_values(in)); }

namespace {

std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    return std::nullopt;
  }
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t require_column(const std::vector<std::string>& header, const std::string& name) {
  auto index = find_column(header, name);
  if (!index) {
    throw ConfigError("trip input: header has no column '" + name + "'");
  }
  return *index;
}

std::optional<TripEvent> read_event(const std::vector<std::string>& fields, std::size_t time_col,
                                    std::size_t lat_col, std::size_t lon_col, EventKind kind) {
  auto lat = parse_double(fields[lat_col]);
  auto lon = parse_double(fields[lon_col]);
  if (!lat || !lon || !(*lat >= -90.0 && *lat <= 90.0) || !(*lon >= -180.0 && *lon <= 180.0)) {
    return std::nullopt;
  }
  try {
    return TripEvent{parse_timestamp(fields[time_col]), *lat, *lon, kind};
  } catch (const InvalidArgument&) {
    return std::nullopt;
  }
}

}  // namespace

TripParseResult parse_trips(std::istream& source, const ColumnMapping& mapping) {
  std::string line;
  if (!read_line(source, line)) {
    throw ConfigError("trip input: missing header row");
  }
  auto header = split_fields(line, mapping.delimiter);
  const auto pt = require_column(header, mapping.pickup_time);
  const auto pla = require_column(header, mapping.pickup_lat);
  const auto plo = require_column(header, mapping.pickup_lon);
  const bool has_dropoff = !mapping.dropoff_time.empty();
  std::size_t dt = 0, dla = 0, dlo = 0;
  if (has_dropoff) {
    dt = require_column(header, mapping.dropoff_time);
    dla = require_column(header, mapping.dropoff_lat);
    dlo = require_column(header, mapping.dropoff_lon);
  }

  TripParseResult result;
  while (read_line(source, line)) {
    if (trim(line).empty()) {
      continue;
    }
    ++result.rows_read;
    auto fields = split_fields(line, mapping.delimiter);
    if (fields.size() != header.size()) {
      ++result.rows_rejected;
      continue;
    }
    auto pickup = read_event(fields, pt, pla, plo, EventKind::kPickup);
    if (!pickup) {
      ++result.rows_rejected;
      continue;
    }
    std::optional<TripEvent> dropoff;
    if (has_dropoff) {
      const bool blank = fields[dt].empty() && fields[dla].empty() && fields[dlo].empty();
      if (!blank) {
        dropoff = read_event(fields, dt, dla, dlo, EventKind::kDropoff);
        if (!dropoff) {
          ++result.rows_rejected;
          continue;
        }
      }
    }
    result.events.push_back(*pickup);
    if (dropoff) {
      result.events.push_back(*dropoff);
    }
  }
  if (2 * result.rows_rejected > result.rows_read) {
    throw DataError("trip input: " + std::to_string(result.rows_rejected) + " of " +
                    std::to_string(result.rows_read) + " rows rejected (more than 50%)");
  }
  return result;
}

// --- regions --------------------------------------------------------------

namespace {

double squared_distance(GeoPoint a, GeoPoint b) {
  const double dlat = a.lat - b.lat;
  const double dlon = a.lon - b.lon;
  return dlat * dlat + dlon * dlon;
}

std::vector<GeoPoint> kmeans_plus_plus(std::span<const GeoPoint> points, std::size_t k, Rng& rng) {
  std::vector<GeoPoint> centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points[i], centroids.back()));
      total += nearest[i];
    }
    // total > 0 because at least k distinct points exist.
    double pick = rng.uniform() * total;
    std::size_t chosen = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (nearest[i] <= 0.0) {
        continue;
      }
      chosen = i;
      pick -= nearest[i];
      if (pick < 0.0) {
        break;
      }
    }
    centroids.push_back(points[chosen]);
  }
  return centroids;
}

}  // namespace

RegionModel fit_regions(std::span<const GeoPoint> points, std::size_t k, std::uint64_t seed,
                        KMeansTrace* trace) {
  if (k == 0) {
    throw InvalidArgument("region count k must be positive");
  }
  std::vector<GeoPoint> distinct(points.begin(), points.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < k) {
    throw InvalidArgument("cannot fit " + std::to_string(k) + " regions to " +
                          std::to_string(distinct.size()) + " distinct points");
  }

  Rng rng(seed);
  RegionModel model{kmeans_plus_plus(points, k, rng)};
  std::vector<std::size_t> assignment(points.size(), k);
  if (trace) {
    *trace = {};
  }
  for (std::size_t iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto a = assign_region(model, points[i]);
      changed |= a != assignment[i];
      assignment[i] = a;
      objective += squared_distance(points[i], model.centroids[a]);
    }
    if (trace) {
      trace->iterations = iter + 1;
      trace->objective.push_back(objective);
    }
    if (!changed) {
      break;
    }
    std::vector<GeoPoint> sums(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[assignment[i]].lat += points[i].lat;
      sums[assignment[i]].lon += points[i].lon;
      ++counts[assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      // An emptied cluster keeps its previous centroid.
      if (counts[c] > 0) {
        const auto n = static_cast<double>(counts[c]);
        model.centroids[c] = {sums[c].lat / n, sums[c].lon / n};
      }
    }
  }
  return model;
}

std::size_t assign_region(const RegionModel& model, GeoPoint point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.centroids.size(); ++c) {
    double d = squared_distance(point, model.centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

void write_region_model(std::ostream& out, const RegionModel& model) {
  out << model.k() << '\n';
  for (const auto& c : model.centroids) {
    out << format_double(c.lat) << ',' << format_double(c.lon) << '\n';
  }
}

RegionModel read_region_model(std::istream& in) {
  std::string line;
  if (!read_line(in, line)) {
    throw DataError("region model: empty file");
  }
  auto k = parse_int(line);
  if (!k || *k < 1) {
    throw DataError("region model: first line must be a positive count");
  }
  RegionModel model;
  for (long long i = 0; i < *k; ++i) {
    if (!read_line(in, line)) {
      throw DataError("region model: expected " + std::to_string(*k) + " centroid rows");
    }
    auto fields = split_fields(line, ',');
    auto lat = fields.size() == 2 ? parse_double(fields[0]) : std::nullopt;
    auto lon = fields.size() == 2 ? parse_double(fields[1]) : std::nullopt;
    if (!lat || !lon) {
      throw DataError("region model: bad centroid row " + std::to_string(i + 1));
    }
    model.centroids.push_back({*lat, *lon});
  }
  return model;
}

std::string region_name(std::size_t index, std::size_t k) {
  std::size_t width = 2;
  for (std::size_t n = k > 0 ? k - 1 : 0; n >= 100; n /= 10) {
    ++width;
  }
  auto digits = std::to_string(index);
  if (digits.size() < width) {
    digits.insert(0, width - digits.size(), '0');
  }
  return "r" + digits;
}

// --- gap series -----------------------------------------------------------

namespace {

std::size_t bin_count(TimeSpan span, Duration bin_width) {
  if (span.end <= span.start) {
    throw ConfigError("time span end must be after its start");
  }
  if (bin_width <= Duration::zero()) {
    throw ConfigError("bin width must be positive");
  }
  const auto length = span.end - span.start;
  if (length % bin_width != Duration::zero()) {
    throw ConfigError("bin width does not divide the time span");
  }
  return static_cast<std::size_t>(length / bin_width);
}

}  // namespace

std::vector<GapSeries> build_gap_series(std::span<const TripEvent> events,
                                        const RegionModel& model, Duration bin_width,
                                        TimeSpan span) {
  const auto bins = bin_count(span, bin_width);
  std::vector<std::vector<double>> gaps(model.k(), std::vector<double>(bins, 0.0));
  for (const auto& e : events) {
    if (e.event_time < span.start || e.event_time >= span.end) {
      continue;
    }
    const auto bin = static_cast<std::size_t>((e.event_time - span.start) / bin_width);
    const auto region = assign_region(model, {e.latitude, e.longitude});
    gaps[region][bin] += e.kind == EventKind::kPickup ? 1.0 : -1.0;
  }
  std::vector<GapSeries> out;
  out.reserve(model.k());
  for (std::size_t r = 0; r < model.k(); ++r) {
    out.emplace_back(region_name(r, model.k()), span.start, bin_width, std::move(gaps[r]));
  }
  return out;
}

TimeSpan covering_span(std::span<const TripEvent> events, Duration bin_width) {
  if (events.empty()) {
    throw DataError("no events to derive a time span from");
  }
  auto [lo, hi] = std::minmax_element(events.begin(), events.end(), [](const auto& a, const auto& b) {
    return a.event_time < b.event_time;
  });
  return {floor_to(lo->event_time, bin_width), floor_to(hi->event_time, bin_width) + bin_width};
}

std::vector<GapSeries> load_region_gaps(std::istream& source, Duration bin_width) {
  std::string line;
  if (!read_line(source, line)) {
    throw DataError("region gap input: missing header");
  }
  auto header = split_fields(line, ',');
  if (header != std::vector<std::string>{"region", "timestamp", "gap"}) {
    throw DataError("region gap input: expected header 'region,timestamp,gap'");
  }
  std::map<std::string, std::map<Timestamp, double>> rows;
  int row = 1;
  while (read_line(source, line)) {
    ++row;
    if (trim(line).empty()) {
      continue;
    }
    auto fields = split_fields(line, ',');
    auto gap = fields.size() == 3 ? parse_double(fields[2]) : std::nullopt;
    if (!gap) {
      throw DataError("region gap input: bad row " + std::to_string(row));
    }
    auto t = parse_timestamp(fields[1]);
    if (!rows[fields[0]].emplace(t, *gap).second) {
      throw DataError("region gap input: duplicate bin for region '" + fields[0] + "' at row " +
                      std::to_string(row));
    }
  }
  std::vector<GapSeries> out;
  for (auto& [region, by_time] : rows) {
    const auto start = by_time.begin()->first;
    const auto last = by_time.rbegin()->first;
    if ((last - start) % bin_width != Duration::zero()) {
      throw DataError("region '" + region + "': timestamps not aligned to the bin width");
    }
    std::vector<double> values(static_cast<std::size_t>((last - start) / bin_width) + 1, 0.0);
    for (const auto& [t, gap] : by_time) {
      if ((t - start) % bin_width != Duration::zero()) {
        throw DataError("region '" + region + "': timestamp " + format_timestamp(t) +
                        " not aligned to the bin width");
      }
      values[static_cast<std::size_t>((t - start) / bin_width)] = gap;
    }
    out.emplace_back(region, start, bin_width, std::move(values));
  }
  return out;
}

// --- external data --------------------------------------------------------

const char* to_string(DayType type) {
  switch (type) {
    case DayType::kWeekday:
      return "weekday";
    case DayType::kWeekend:
      return "weekend";
    case DayType::kHoliday:
      return "holiday";
  }
  return "weekday";
}

DayType parse_day_type(std::string_view text) {
  if (text == "weekday") return DayType::kWeekday;
  if (text == "weekend") return DayType::kWeekend;
  if (text == "holiday") return DayType::kHoliday;
  throw DataError("unknown day type '" + std::string(text) + "'");
}

DayType classify_day(Timestamp t, const std::set<std::chrono::sys_days>& holidays) {
  const auto day = std::chrono::floor<std::chrono::days>(t);
  if (holidays.contains(day)) {
    return DayType::kHoliday;
  }
  const std::chrono::weekday wd{day};
  if (wd == std::chrono::Saturday || wd == std::chrono::Sunday) {
    return DayType::kWeekend;
  }
  return DayType::kWeekday;
}

Vocabulary::Vocabulary() : tokens_{kUnknown} {}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : tokens_{kUnknown} {
  std::vector<std::string> sorted(tokens.begin(), tokens.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (auto& t : sorted) {
    if (t != kUnknown) {
      tokens_.push_back(std::move(t));
    }
  }
}

std::size_t Vocabulary::index_of(std::string_view token) const {
  auto it = std::lower_bound(tokens_.begin() + 1, tokens_.end(), token);
  if (it != tokens_.end() && *it == token) {
    return static_cast<std::size_t>(it - tokens_.begin());
  }
  return 0;
}

namespace {

Vocabulary vocabulary_of(std::span<const ExternalRecord> records) {
  std::vector<std::string> tokens;
  tokens.reserve(records.size());
  for (const auto& r : records) {
    tokens.push_back(r.weather);
  }
  return Vocabulary(tokens);
}

}  // namespace

ExternalData load_external(std::istream& source, Duration bin_width, TimeSpan span,
                           const std::set<std::chrono::sys_days>& holidays) {
  const auto bins = bin_count(span, bin_width);
  std::string line;
  if (!read_line(source, line)) {
    throw DataError("weather input: missing header");
  }
  struct Observation {
    Timestamp time;
    std::string token;
    double temperature;
  };
  std::vector<Observation> obs;
  int row = 1;
  while (read_line(source, line)) {
    ++row;
    if (trim(line).empty()) {
      continue;
    }
    auto fields = split_fields(line, ',');
    auto temp = fields.size() == 3 ? parse_double(fields[2]) : std::nullopt;
    if (!temp || fields[1].empty()) {
      throw DataError("weather input: bad row " + std::to_string(row));
    }
    obs.push_back({parse_timestamp(fields[0]), fields[1], *temp});
  }
  std::stable_sort(obs.begin(), obs.end(),
                   [](const auto& a, const auto& b) { return a.time < b.time; });

  ExternalData out;
  out.records.reserve(bins);
  std::size_t next = 0;
  const Observation* current = nullptr;
  for (std::size_t b = 0; b < bins; ++b) {
    const auto t = span.start + bin_width * static_cast<std::int64_t>(b);
    while (next < obs.size() && obs[next].time <= t) {
      current = &obs[next++];
    }
    if (current == nullptr) {
      throw DataError("weather input: no observation at or before " + format_timestamp(t));
    }
    if (t - current->time > kMaxWeatherGap) {
      throw DataError("weather input: coverage gap over 24h before " + format_timestamp(t));
    }
    out.records.push_back({t, classify_day(t, holidays), current->token, current->temperature});
  }
  out.vocabulary = vocabulary_of(out.records);
  return out;
}

std::set<std::chrono::sys_days> read_holidays(std::istream& in) {
  std::set<std::chrono::sys_days> days;
  std::string line;
  while (read_line(in, line)) {
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (!view.empty()) {
      days.insert(parse_date(view));
    }
  }
  return days;
}

void write_external(std::ostream& out, std::span<const ExternalRecord> records) {
  out << "timestamp,day_type,weather,temperature_c\n";
  for (const auto& r : records) {
    out << format_timestamp(r.bin_time) << ',' << to_string(r.day_type) << ',' << r.weather << ','
        << format_double(r.temperature) << '\n';
  }
}

ExternalData read_external(std::istream& in) {
  std::string line;
  if (!read_line(in, line) || trim(line) != "timestamp,day_type,weather,temperature_c") {
    throw DataError("external file: expected header 'timestamp,day_type,weather,temperature_c'");
  }
  ExternalData out;
  int row = 1;
  while (read_line(in, line)) {
    ++row;
    if (trim(line).empty()) {
      continue;
    }
    auto fields = split_fields(line, ',');
    auto temp = fields.size() == 4 ? parse_double(fields[3]) : std::nullopt;
    if (!temp) {
      throw DataError("external file: bad row " + std::to_string(row));
    }
    out.records.push_back(
        {parse_timestamp(fields[0]), parse_day_type(fields[1]), fields[2], *temp});
  }
  out.vocabulary = vocabulary_of(out.records);
  return out;
}

// --- split ----------------------------------------------------------------

SplitIndices split_counts(std::size_t n) {
  if (n < 2) {
    throw InvalidArgument("need at least 2 samples to split, got " + std::to_string(n));
  }
  // Integer arithmetic: 0.85 * n in floating point can land just under an integer.
  const std::size_t train = n * 85 / 100;
  if (train == 0 || train == n) {
    throw InvalidArgument("split of " + std::to_string(n) + " samples leaves one side empty");
  }
  return {train, n - train};
}

}  // namespace deepgap
