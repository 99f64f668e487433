#include "deepgap/baselines.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "deepgap/error.hpp"

namespace deepgap {

double rmse(std::span<const double> actual, std::span<const double> pred) {
  if (actual.size() != pred.size() || actual.empty()) {
    throw ShapeError("rmse: lengths " + std::to_string(actual.size()) + " and " +
                     std::to_string(pred.size()) + " must be equal and non-zero");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double d = actual[i] - pred[i];
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(actual.size()));
}

std::vector<double> persistence_forecast(std::span<const double> series, std::size_t first_target) {
  if (series.empty()) {
    throw InvalidArgument("persistence forecast of an empty series");
  }
  if (first_target == 0) {
    throw InvalidArgument("persistence forecast needs one value of history");
  }
  std::vector<double> out;
  for (std::size_t t = first_target; t < series.size(); ++t) {
    out.push_back(series[t - 1]);
  }
  return out;
}

std::vector<double> persistence_baseline(std::span<const double> series, std::size_t horizon) {
  if (series.empty()) {
    throw InvalidArgument("persistence forecast of an empty series");
  }
  if (horizon >= series.size()) {
    throw InvalidArgument("horizon " + std::to_string(horizon) + " leaves no history");
  }
  return persistence_forecast(series, series.size() - horizon);
}

ArModel fit_ar(std::span<const double> train, std::size_t order) {
  if (order == 0) {
    throw InvalidArgument("AR order must be at least 1");
  }
  if (train.size() < order + 1) {
    throw InvalidArgument("AR(" + std::to_string(order) + ") needs at least " +
                          std::to_string(order + 1) + " training values");
  }
  const auto rows = static_cast<Eigen::Index>(train.size() - order);
  const auto cols = static_cast<Eigen::Index>(order + 1);
  Eigen::MatrixXd x(rows, cols);
  Eigen::VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto t = static_cast<std::size_t>(r) + order;
    x(r, 0) = 1.0;
    for (std::size_t k = 0; k < order; ++k) {
      x(r, static_cast<Eigen::Index>(k + 1)) = train[t - 1 - k];
    }
    y(r) = train[t];
  }
  Eigen::MatrixXd normal = x.transpose() * x;
  Eigen::VectorXd rhs = x.transpose() * y;

  ArModel model;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
  lu.setThreshold(1e-10);
  Eigen::VectorXd beta;
  if (lu.rank() == cols) {
    beta = lu.solve(rhs);
  } else {
    model.ridge_fallback = true;
    normal.diagonal().array() += kArRidge;
    beta = normal.ldlt().solve(rhs);
  }
  model.intercept = beta(0);
  for (std::size_t k = 0; k < order; ++k) {
    model.coefficients.push_back(beta(static_cast<Eigen::Index>(k + 1)));
  }
  return model;
}

std::vector<double> ar_forecast(const ArModel& model, std::span<const double> series,
                                std::size_t first_target) {
  if (first_target < model.order()) {
    throw InvalidArgument("AR forecast needs " + std::to_string(model.order()) +
                          " values of history");
  }
  std::vector<double> out;
  for (std::size_t t = first_target; t < series.size(); ++t) {
    double v = model.intercept;
    for (std::size_t k = 0; k < model.order(); ++k) {
      v += model.coefficients[k] * series[t - 1 - k];
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace deepgap
