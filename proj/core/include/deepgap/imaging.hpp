#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "deepgap/series.hpp"

namespace deepgap {

/// Row-major w x w image. Gramian fields hold values in [-1, 1], the
/// recurrence plot holds 0 or 1.
using Image = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ImageTriple {
  Image gasf;
  Image gadf;
  Image rec;
};

enum class RecurrenceInput { kScaled, kRaw };

/// Gramian angular summation field, cos(psi_i + psi_j), computed as
/// x x^T - s s^T with s = sqrt(1 - x^2).
Image gasf(std::span<const double> scaled);

/// Gramian angular difference field, sin(psi_i - psi_j), computed as
/// s x^T - x s^T.
Image gadf(std::span<const double> scaled);

/// Thresholded recurrence plot: 0 where |x_i - x_j| < epsilon, else 1
/// (a distance of exactly epsilon gives 1).
Image rec_plot(std::span<const double> block, double epsilon);

ImageTriple encode(const WindowBlock& block, double epsilon,
                   RecurrenceInput rec_input = RecurrenceInput::kScaled);

enum class ImageFormat { kText, kPgm };

/// Comma-separated rows with round-trip number formatting.
void write_image_text(std::ostream& out, const Image& image);

/// Binary 8-bit PGM. Values are mapped linearly from [lo, hi] to [0, 255].
void write_image_pgm(std::ostream& out, const Image& image, double lo, double hi);

/// Writes `<region>_<origin>_{gasf|gadf|rec}.<txt|pgm>` into `dir` and
/// returns the paths written.
std::vector<std::filesystem::path> export_triple(const std::filesystem::path& dir,
                                                 const std::string& region, std::size_t origin,
                                                 const ImageTriple& images, ImageFormat format);

}  // namespace deepgap
