#include "deepgap/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "deepgap/error.hpp"
#include "deepgap/text.hpp"

namespace deepgap {
namespace {

struct AngularParts {
  Eigen::VectorXd cosine;  // x
  Eigen::VectorXd sine;    // sqrt(1 - x^2)
};

AngularParts angular_parts(std::span<const double> scaled) {
  auto x = checked_unit_interval(scaled);
  AngularParts parts{Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())),
                     Eigen::VectorXd(static_cast<Eigen::Index>(x.size()))};
  for (Eigen::Index i = 0; i < parts.cosine.size(); ++i) {
    const double c = parts.cosine(i);
    parts.sine(i) = std::sqrt(std::max(0.0, 1.0 - c * c));
  }
  return parts;
}

}  // namespace

// Upper triangle in plain scalar arithmetic, then mirrored, so symmetry holds
// bit for bit whatever the vector unit does with fused multiply-adds.
Image gasf(std::span<const double> scaled) {
  auto p = angular_parts(scaled);
  const auto w = p.cosine.size();
  Image out(w, w);
  for (Eigen::Index i = 0; i < w; ++i) {
    for (Eigen::Index j = i; j < w; ++j) {
      const double cc = p.cosine(i) * p.cosine(j);
      const double ss = p.sine(i) * p.sine(j);
      out(i, j) = cc - ss;
      out(j, i) = out(i, j);
    }
  }
  return out;
}

Image gadf(std::span<const double> scaled) {
  auto p = angular_parts(scaled);
  const auto w = p.cosine.size();
  Image out(w, w);
  for (Eigen::Index i = 0; i < w; ++i) {
    out(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < w; ++j) {
      const double sc = p.sine(i) * p.cosine(j);
      const double cs = p.cosine(i) * p.sine(j);
      out(i, j) = sc - cs;
      out(j, i) = -out(i, j);
    }
  }
  return out;
}

Image rec_plot(std::span<const double> block, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw InvalidArgument("recurrence threshold epsilon must be positive");
  }
  const auto w = static_cast<Eigen::Index>(block.size());
  Image out(w, w);
  for (Eigen::Index i = 0; i < w; ++i) {
    for (Eigen::Index j = 0; j < w; ++j) {
      out(i, j) = std::abs(block[i] - block[j]) < epsilon ? 0.0 : 1.0;
    }
  }
  return out;
}

ImageTriple encode(const WindowBlock& block, double epsilon, RecurrenceInput rec_input) {
  if (block.raw.size() != block.scaled.size()) {
    throw ShapeError("window raw/scaled length mismatch");
  }
  const auto& rec_source = rec_input == RecurrenceInput::kScaled ? block.scaled : block.raw;
  return ImageTriple{gasf(block.scaled), gadf(block.scaled), rec_plot(rec_source, epsilon)};
}

void write_image_text(std::ostream& out, const Image& image) {
  for (Eigen::Index i = 0; i < image.rows(); ++i) {
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
      if (j > 0) {
        out << ',';
      }
      out << format_double(image(i, j));
    }
    out << '\n';
  }
}

void write_image_pgm(std::ostream& out, const Image& image, double lo, double hi) {
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  const double span = hi - lo;
  for (Eigen::Index i = 0; i < image.rows(); ++i) {
    for (Eigen::Index j = 0; j < image.cols(); ++j) {
      double t = span > 0 ? (image(i, j) - lo) / span : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
    }
  }
}

std::vector<std::filesystem::path> export_triple(const std::filesystem::path& dir,
                                                 const std::string& region, std::size_t origin,
                                                 const ImageTriple& images, ImageFormat format) {
  struct Item {
    const char* name;
    const Image* image;
    double lo;
  };
  const Item items[] = {{"gasf", &images.gasf, -1.0}, {"gadf", &images.gadf, -1.0},
                        {"rec", &images.rec, 0.0}};
  std::vector<std::filesystem::path> written;
  for (const auto& item : items) {
    auto path = dir / (region + "_" + std::to_string(origin) + "_" + item.name +
                       (format == ImageFormat::kText ? ".txt" : ".pgm"));
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw Error("cannot write " + path.string());
    }
    if (format == ImageFormat::kText) {
      write_image_text(out, *item.image);
    } else {
      write_image_pgm(out, *item.image, item.lo, 1.0);
    }
    written.push_back(std::move(path));
  }
  return written;
}

}  // namespace deepgap
