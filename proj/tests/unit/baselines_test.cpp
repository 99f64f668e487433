#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "deepgap/baselines.hpp"
#include "deepgap/error.hpp"
#include "deepgap/random.hpp"

namespace deepgap {
namespace {

TEST(Rmse, Examples) {
  const std::vector<double> zero{0, 0}, v{3, 4};
  EXPECT_DOUBLE_EQ(rmse(zero, v), std::sqrt(12.5));
  EXPECT_EQ(rmse(v, v), 0.0);
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), ShapeError);
  EXPECT_THROW(rmse(zero, std::vector<double>{1}), ShapeError);
}

TEST(Rmse, SymmetricAndShiftScaling) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(17), b(17);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    EXPECT_EQ(rmse(a, b), rmse(b, a));
    auto shifted = b;
    for (auto& x : shifted) x += 2.0;
    auto a2 = a;
    for (auto& x : a2) x += 2.0;
    EXPECT_NEAR(rmse(a2, shifted), rmse(a, b), 1e-12);
  }
}

TEST(Persistence, Examples) {
  std::vector<double> constant(20, 7.0);
  auto p = persistence_baseline(constant, 5);
  ASSERT_EQ(p.size(), 5u);
  EXPECT_EQ(rmse(std::span(constant).last(5), p), 0.0);

  std::vector<double> alternating;
  for (int i = 0; i < 20; ++i) alternating.push_back(i % 2 ? 0.5 : -0.5);
  auto q = persistence_baseline(alternating, 6);
  EXPECT_DOUBLE_EQ(rmse(std::span(alternating).last(6), q), 1.0);

  EXPECT_EQ(persistence_forecast(std::vector<double>{1, 2, 3}, 1), (std::vector<double>{1, 2}));
  EXPECT_THROW(persistence_forecast(std::vector<double>{1, 2}, 0), InvalidArgument);
  EXPECT_THROW(persistence_baseline(std::vector<double>{1, 2}, 2), InvalidArgument);
}

TEST(Persistence, RandomWalkErrorIsIncrementRms) {
  Rng rng(11);
  std::vector<double> walk{0.0}, steps;
  for (int i = 0; i < 400; ++i) {
    steps.push_back(rng.normal());
    walk.push_back(walk.back() + steps.back());
  }
  auto p = persistence_forecast(walk, 1);
  double sq = 0.0;
  for (double s : steps) sq += s * s;
  EXPECT_NEAR(rmse(std::span(walk).subspan(1), p), std::sqrt(sq / steps.size()), 1e-12);
}

TEST(Ar, RecoversCoefficient) {
  Rng rng(2);
  std::vector<double> x{0.0};
  for (int i = 0; i < 5000; ++i) x.push_back(1.0 + 0.5 * x.back() + rng.normal());
  auto m = fit_ar(x, 1);
  EXPECT_FALSE(m.ridge_fallback);
  EXPECT_NEAR(m.coefficients[0], 0.5, 0.03);
  EXPECT_NEAR(m.intercept, 1.0, 0.1);
}

TEST(Ar, ExactFitAndForecast) {
  std::vector<double> alternating;
  for (int i = 0; i < 30; ++i) alternating.push_back(i % 2 ? 1.0 : -1.0);
  auto m = fit_ar(alternating, 1);
  EXPECT_NEAR(m.coefficients[0], -1.0, 1e-12);
  EXPECT_NEAR(m.intercept, 0.0, 1e-12);
  auto f = ar_forecast(m, alternating, 25);
  ASSERT_EQ(f.size(), 5u);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f[i], alternating[25 + i], 1e-12);
}

TEST(Ar, SingularFallsBackToRidge) {
  std::vector<double> constant(40, 3.0);
  auto m = fit_ar(constant, 3);
  EXPECT_TRUE(m.ridge_fallback);
  for (double v : ar_forecast(m, constant, 3)) EXPECT_NEAR(v, 3.0, 1e-4);
}

TEST(Ar, Preconditions) {
  EXPECT_THROW(fit_ar(std::vector<double>{1, 2, 3}, 3), InvalidArgument);
  EXPECT_THROW(fit_ar(std::vector<double>{1, 2, 3}, 0), InvalidArgument);
  ArModel m{0.0, {1.0, 0.0}};
  EXPECT_THROW(ar_forecast(m, std::vector<double>{1, 2, 3}, 1), InvalidArgument);
}

}  // namespace
}  // namespace deepgap
