#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepgap/experiment.hpp"
#include "deepgap/series.hpp"

namespace deepgap::testing {

/// 10 sin(2 pi t / 24) + N(0, 1) on 10-minute bins starting Monday 2020-01-06.
GapSeries seasonal_series(std::size_t n = 500, std::uint64_t seed = 0,
                          std::string region = "r00");

/// Hourly bins: 10 + 8 on weekdays + N(0, 1), with aligned
/// external records (calendar day type, two weather tokens, temperature).
Dataset day_type_dataset(std::size_t n = 500, std::uint64_t seed = 0);

/// Trip rows in the default ingest column layout: two clusters of pickup
/// and dropoff locations over `hours` hours from 2016-01-04T00:00.
std::string synthetic_trips_csv(std::size_t rows, std::size_t hours, std::uint64_t seed);

}  // namespace deepgap::testing
