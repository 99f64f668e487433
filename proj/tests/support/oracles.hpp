#pragma once

#include <span>
#include <vector>

namespace deepgap::testing {

using Matrix = std::vector<std::vector<double>>;

/// cos(phi_i + phi_j) with phi = arccos(x), element by element.
Matrix trig_gasf(std::span<const double> scaled);
/// sin(phi_i - phi_j), element by element.
Matrix trig_gadf(std::span<const double> scaled);
/// 0 where |x_i - x_j| < eps, else 1.
Matrix pairwise_rec(std::span<const double> x, double eps);

/// Direct-loop cross-correlation with zero "same" padding.
/// input (C, H, W), filters (O, C, n, m), bias (O); returns (O, H, W) flat.
std::vector<double> loop_conv2d(std::span<const double> input, std::size_t C, std::size_t H,
                                std::size_t W, std::span<const double> filters, std::size_t O,
                                std::size_t n, std::size_t m, std::span<const double> bias);

}  // namespace deepgap::testing
