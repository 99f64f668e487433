#include "deepgap/series.hpp"

#include <algorithm>
#include <cmath>

#include "deepgap/error.hpp"
#include "deepgap/text.hpp"

namespace deepgap {

GapSeries::GapSeries(std::string region_id, Timestamp start_time, Duration bin_width,
                     std::vector<double> values)
    : region_id_(std::move(region_id)),
      start_time_(start_time),
      bin_width_(bin_width),
      values_(std::move(values)) {
  if (bin_width_ <= Duration::zero()) {
    throw InvalidArgument("gap series '" + region_id_ + "': bin width must be positive");
  }
  if (values_.empty()) {
    throw InvalidArgument("gap series '" + region_id_ + "' has no values");
  }
}

double WindowBlock::raw_min() const { return *std::min_element(raw.begin(), raw.end()); }
double WindowBlock::raw_max() const { return *std::max_element(raw.begin(), raw.end()); }

namespace {

WindowBlock make_block(std::span<const double> values, std::size_t origin, std::size_t w) {
  WindowBlock block;
  block.origin_index = origin;
  block.raw.assign(values.begin() + static_cast<std::ptrdiff_t>(origin),
                   values.begin() + static_cast<std::ptrdiff_t>(origin + w));
  block.scaled = minmax_scale(block.raw);
  return block;
}

void check_window_args(std::size_t w, std::size_t stride) {
  if (w < 2) {
    throw InvalidArgument("window length must be at least 2, got " + std::to_string(w));
  }
  if (stride < 1) {
    throw InvalidArgument("stride must be at least 1");
  }
}

}  // namespace

std::vector<WindowBlock> segment(const GapSeries& series, std::size_t w, std::size_t stride) {
  check_window_args(w, stride);
  if (series.size() < w + 1) {
    throw InvalidArgument("series '" + series.region_id() + "' has " +
                          std::to_string(series.size()) + " values; segmenting with w=" +
                          std::to_string(w) + " needs at least " + std::to_string(w + 1));
  }
  auto values = series.values();
  std::vector<WindowBlock> blocks;
  for (std::size_t origin = 0; origin + w < values.size(); origin += stride) {
    auto block = make_block(values, origin, w);
    block.target = values[origin + w];
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<WindowBlock> sliding_windows(const GapSeries& series, std::size_t w,
                                         std::size_t stride) {
  check_window_args(w, stride);
  if (series.size() < w) {
    throw InvalidArgument("series '" + series.region_id() + "' has " +
                          std::to_string(series.size()) + " values; need at least " +
                          std::to_string(w));
  }
  auto values = series.values();
  std::vector<WindowBlock> blocks;
  for (std::size_t origin = 0; origin + w <= values.size(); origin += stride) {
    blocks.push_back(make_block(values, origin, w));
  }
  return blocks;
}

WindowBlock last_window(const GapSeries& series, std::size_t w) {
  check_window_args(w, 1);
  if (series.size() < w) {
    throw InvalidArgument("series '" + series.region_id() + "' has " +
                          std::to_string(series.size()) + " values; need at least " +
                          std::to_string(w));
  }
  return make_block(series.values(), series.size() - w, w);
}

std::vector<double> minmax_scale(std::span<const double> raw) {
  if (raw.empty()) {
    throw InvalidArgument("cannot scale an empty window");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) {
      throw InvalidArgument("non-finite value at index " + std::to_string(i));
    }
  }
  auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> out(raw.size(), 0.5);
  if (hi > lo) {
    const double range = hi - lo;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      out[i] = std::clamp((raw[i] - lo) / range, 0.0, 1.0);
    }
  }
  return out;
}

std::vector<double> checked_unit_interval(std::span<const double> scaled) {
  std::vector<double> out(scaled.begin(), scaled.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = out[i];
    if (!(x >= -kUnitIntervalTolerance && x <= 1.0 + kUnitIntervalTolerance)) {
      throw InvalidArgument("scaled value " + format_double(x) + " at index " +
                            std::to_string(i) + " is outside [0, 1]");
    }
    out[i] = std::clamp(x, 0.0, 1.0);
  }
  return out;
}

PolarBlock to_polar(std::span<const double> scaled, double cst) {
  if (!(cst > 0.0)) {
    throw InvalidArgument("polar radius constant must be positive");
  }
  auto x = checked_unit_interval(scaled);
  PolarBlock polar;
  polar.angles.resize(x.size());
  polar.radii.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    polar.angles[i] = std::acos(x[i]);
    polar.radii[i] = static_cast<double>(i + 1) / cst;
  }
  return polar;
}

void write_gap_series(std::ostream& out, const GapSeries& series) {
  out << "timestamp,gap\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << format_timestamp(series.time_at(i)) << ',' << format_double(series.values()[i]) << '\n';
  }
}

GapSeries read_gap_series(std::istream& in, std::string region_id, Duration single_row_bin_width) {
  std::string line;
  if (!read_line(in, line) || trim(line) != "timestamp,gap") {
    throw DataError("series '" + region_id + "': expected header 'timestamp,gap'");
  }
  std::vector<Timestamp> times;
  std::vector<double> values;
  int row = 1;
  while (read_line(in, line)) {
    ++row;
    if (trim(line).empty()) {
      continue;
    }
    auto fields = split_fields(line, ',');
    if (fields.size() != 2) {
      throw DataError("series '" + region_id + "' row " + std::to_string(row) +
                      ": expected 2 fields");
    }
    auto value = parse_double(fields[1]);
    if (!value) {
      throw DataError("series '" + region_id + "' row " + std::to_string(row) +
                      ": bad gap value '" + fields[1] + "'");
    }
    times.push_back(parse_timestamp(fields[0]));
    values.push_back(*value);
  }
  if (values.empty()) {
    throw DataError("series '" + region_id + "' has no rows");
  }
  Duration width = single_row_bin_width;
  if (times.size() > 1) {
    width = times[1] - times[0];
    if (width <= Duration::zero()) {
      throw DataError("series '" + region_id + "': timestamps must increase");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (times[i] - times[i - 1] != width) {
        throw DataError("series '" + region_id + "': non-uniform bin at row " +
                        std::to_string(i + 2));
      }
    }
  }
  return GapSeries(std::move(region_id), times.front(), width, std::move(values));
}

}  // namespace deepgap
