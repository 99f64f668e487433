#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace deepgap {

/// sqrt(mean((actual - pred)^2)). Throws ShapeError on empty or unequal inputs.
double rmse(std::span<const double> actual, std::span<const double> pred);

/// Predicts series[t - 1] for every target index t in [first_target, n).
/// Throws InvalidArgument for an empty series or first_target == 0.
std::vector<double> persistence_forecast(std::span<const double> series, std::size_t first_target);

/// Forecasts of the last `horizon` bins.
std::vector<double> persistence_baseline(std::span<const double> series, std::size_t horizon);

/// x_t = intercept + sum_k coefficients[k] * x_{t-1-k}
struct ArModel {
  double intercept = 0.0;
  std::vector<double> coefficients;
  /// True when the normal matrix was singular and a 1e-6 ridge was added.
  bool ridge_fallback = false;

  std::size_t order() const { return coefficients.size(); }
};

inline constexpr double kArRidge = 1e-6;

/// Least squares through the normal equations over every complete lag
/// vector of `train`. Needs at least order + 1 values.
ArModel fit_ar(std::span<const double> train, std::size_t order);

/// One-step forecasts for target indices [first_target, n), each from the
/// true preceding values. first_target must be >= order.
std::vector<double> ar_forecast(const ArModel& model, std::span<const double> series,
                                std::size_t first_target);

}  // namespace deepgap
