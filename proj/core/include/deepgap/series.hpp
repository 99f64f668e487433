#pragma once

#include <chrono>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "deepgap/time.hpp"

namespace deepgap {

inline constexpr Duration kDefaultBinWidth = std::chrono::minutes{10};

/// Per-region gap (demand minus supply) on uniform, contiguous bins.
/// Bin i starts at `start_time + i * bin_width`.
class GapSeries {
 public:
  GapSeries(std::string region_id, Timestamp start_time, Duration bin_width,
            std::vector<double> values);

  const std::string& region_id() const { return region_id_; }
  Timestamp start_time() const { return start_time_; }
  Duration bin_width() const { return bin_width_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  Timestamp time_at(std::size_t index) const {
    return start_time_ + bin_width_ * static_cast<std::int64_t>(index);
  }
  /// Start of the bin after the last one.
  Timestamp end_time() const { return time_at(values_.size()); }

 private:
  std::string region_id_;
  Timestamp start_time_;
  Duration bin_width_;
  std::vector<double> values_;
};

/// A length-w slice of a series plus its min-max scaled form.
struct WindowBlock {
  std::size_t origin_index = 0;
  std::vector<double> raw;
  std::vector<double> scaled;
  /// The value right after the window; absent for prediction-only windows.
  std::optional<double> target;

  std::size_t size() const { return raw.size(); }
  double raw_min() const;
  double raw_max() const;
};

struct PolarBlock {
  std::vector<double> angles;
  std::vector<double> radii;
};

/// Overlapping windows with a one-step target. Windows start at 0, stride,
/// 2*stride, ... and only those whose target sample exists are emitted.
/// Throws InvalidArgument if w < 2, stride < 1 or the series has fewer than
/// w + 1 values.
std::vector<WindowBlock> segment(const GapSeries& series, std::size_t w, std::size_t stride);

/// Like segment() but without targets: every window with w samples, used
/// for image export and for forecasting the bin after the series.
std::vector<WindowBlock> sliding_windows(const GapSeries& series, std::size_t w,
                                         std::size_t stride);

/// The trailing w samples of the series, target-less.
WindowBlock last_window(const GapSeries& series, std::size_t w);

/// (x - min) / (max - min); a constant input maps to all 0.5.
/// Throws InvalidArgument naming the index of the first non-finite value.
std::vector<double> minmax_scale(std::span<const double> raw);

/// Angles arccos(x_i) and radii (i + 1) / cst. Inputs within 1e-12 outside
/// [0, 1] are clamped, anything further out is rejected.
PolarBlock to_polar(std::span<const double> scaled, double cst);
inline PolarBlock to_polar(std::span<const double> scaled) {
  return to_polar(scaled, static_cast<double>(scaled.size()));
}

inline constexpr double kUnitIntervalTolerance = 1e-12;

/// Checks every entry lies in [0, 1] up to kUnitIntervalTolerance and returns
/// the clamped copy. Throws InvalidArgument otherwise.
std::vector<double> checked_unit_interval(std::span<const double> scaled);

/// `timestamp,gap` CSV, shortest round-trip number formatting.
void write_gap_series(std::ostream& out, const GapSeries& series);

/// Reads the `timestamp,gap` format. Bin width is inferred from the first
/// two rows, or taken from `single_row_bin_width` for one-row files. Rows
/// must be uniformly spaced.
GapSeries read_gap_series(std::istream& in, std::string region_id,
                          Duration single_row_bin_width = kDefaultBinWidth);

}  // namespace deepgap
