#include "deepgap/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>

#include "deepgap/error.hpp"

namespace deepgap::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

/// Builds the output tensor and, when any input needs gradients and
/// recording is on, attaches the parents and the backward closure.
Tensor make_result(Shape shape, Buffer values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
  auto out = Tensor::from_buffer(std::move(shape), std::move(values));
  if (!grad_enabled()) {
    return out;
  }
  bool needs = false;
  for (const auto& t : inputs) {
    needs |= t.requires_grad();
  }
  if (!needs) {
    return out;
  }
  auto node = out.node();
  node->requires_grad = true;
  for (auto& t : inputs) {
    node->parents.push_back(t.node());
  }
  node->backward = std::move(backward_fn);
  return out;
}

Buffer& parent_grad(detail::Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  p.ensure_grad();
  return p.grad;
}

bool parent_needs(const detail::Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

struct ConvGeometry {
  std::size_t batch, in_ch, out_ch, height, width, kh, kw;
  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t pixels() const { return height * width; }
};

// cols (C*kh*kw, H*W): cols[(c,i,j)][(y,x)] = in[c][y+i-ph][x+j-pw].
void im2col(const double* in, const ConvGeometry& g, double* cols) {
  const auto ph = static_cast<long>(g.kh / 2);
  const auto pw = static_cast<long>(g.kw / 2);
  const auto H = static_cast<long>(g.height);
  const auto W = static_cast<long>(g.width);
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const double* plane = in + c * g.pixels();
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        const long dy = static_cast<long>(i) - ph;
        const long dx = static_cast<long>(j) - pw;
        for (long y = 0; y < H; ++y) {
          const long sy = y + dy;
          double* dst = row + y * W;
          if (sy < 0 || sy >= H) {
            std::fill(dst, dst + W, 0.0);
            continue;
          }
          const double* src = plane + sy * W;
          for (long x = 0; x < W; ++x) {
            const long sx = x + dx;
            dst[x] = (sx >= 0 && sx < W) ? src[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* in_grad) {
  const auto ph = static_cast<long>(g.kh / 2);
  const auto pw = static_cast<long>(g.kw / 2);
  const auto H = static_cast<long>(g.height);
  const auto W = static_cast<long>(g.width);
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    double* plane = in_grad + c * g.pixels();
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * g.pixels();
        const long dy = static_cast<long>(i) - ph;
        const long dx = static_cast<long>(j) - pw;
        for (long y = 0; y < H; ++y) {
          const long sy = y + dy;
          if (sy < 0 || sy >= H) {
            continue;
          }
          const double* src = row + y * W;
          double* dst = plane + sy * W;
          const long x0 = std::max(0L, -dx);
          const long x1 = std::min(W, W - dx);
          for (long x = x0; x < x1; ++x) {
            dst[x + dx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias) {
  if (filters.rank() != 4) {
    throw ShapeError("conv2d: filters must be (C_out, C_in, n, m), got " +
                     shape_string(filters.shape()));
  }
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw ShapeError("conv2d: input must be (C, H, W) or (N, C, H, W), got " +
                     shape_string(input.shape()));
  }
  ConvGeometry g{};
  g.batch = batched ? input.dim(0) : 1;
  g.in_ch = input.dim(batched ? 1 : 0);
  g.height = input.dim(batched ? 2 : 1);
  g.width = input.dim(batched ? 3 : 2);
  g.out_ch = filters.dim(0);
  g.kh = filters.dim(2);
  g.kw = filters.dim(3);
  if (filters.dim(1) != g.in_ch) {
    throw ShapeError("conv2d: input " + shape_string(input.shape()) +
                     " does not match filters " + shape_string(filters.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != g.out_ch) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match filters " +
                     shape_string(filters.shape()));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd, got " + shape_string(filters.shape()));
  }
  if (g.height < g.kh || g.width < g.kw) {
    throw ShapeError("conv2d: input " + shape_string(input.shape()) +
                     " smaller than kernel " + shape_string(filters.shape()));
  }

  Buffer out(g.batch * g.out_ch * g.pixels());
  Buffer cols(g.patch() * g.pixels());
  ConstMatrixMap weights(filters.data().data(), idx(g.out_ch), idx(g.patch()));
  ConstVectorMap b(bias.data().data(), idx(g.out_ch));
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(input.data().data() + n * g.in_ch * g.pixels(), g, cols.data());
    ConstMatrixMap c(cols.data(), idx(g.patch()), idx(g.pixels()));
    MatrixMap y(out.data() + n * g.out_ch * g.pixels(), idx(g.out_ch), idx(g.pixels()));
    y.noalias() = weights * c;
    y.colwise() += b;
  }

  Shape shape = batched ? Shape{g.batch, g.out_ch, g.height, g.width}
                        : Shape{g.out_ch, g.height, g.width};
  return make_result(std::move(shape), std::move(out), {input, filters, bias},
                     [g](detail::Node& self) {
                       const auto& x = self.parents[0]->value;
                       const auto& wv = self.parents[1]->value;
                       Buffer cols(g.patch() * g.pixels());
                       Buffer dcols(g.patch() * g.pixels());
                       ConstMatrixMap weights(wv.data(), idx(g.out_ch), idx(g.patch()));
                       double* dx = parent_needs(self, 0) ? parent_grad(self, 0).data() : nullptr;
                       double* dw = parent_needs(self, 1) ? parent_grad(self, 1).data() : nullptr;
                       double* db = parent_needs(self, 2) ? parent_grad(self, 2).data() : nullptr;
                       for (std::size_t n = 0; n < g.batch; ++n) {
                         ConstMatrixMap dy(self.grad.data() + n * g.out_ch * g.pixels(),
                                           idx(g.out_ch), idx(g.pixels()));
                         if (db) {
                           VectorMap(db, idx(g.out_ch)) += dy.rowwise().sum();
                         }
                         if (dw) {
                           im2col(x.data() + n * g.in_ch * g.pixels(), g, cols.data());
                           ConstMatrixMap c(cols.data(), idx(g.patch()), idx(g.pixels()));
                           MatrixMap(dw, idx(g.out_ch), idx(g.patch())).noalias() +=
                               dy * c.transpose();
                         }
                         if (dx) {
                           MatrixMap dc(dcols.data(), idx(g.patch()), idx(g.pixels()));
                           dc.noalias() = weights.transpose() * dy;
                           col2im_add(dcols.data(), g, dx + n * g.in_ch * g.pixels());
                         }
                       }
                     });
}

Tensor relu(const Tensor& input) {
  auto x = input.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  return make_result(input.shape(), std::move(out), {input}, [](detail::Node& self) {
    const auto& x = self.parents[0]->value;
    auto& dx = parent_grad(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) {
        dx[i] += self.grad[i];
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data();
  auto y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] + y[i];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (parent_needs(self, p)) {
        auto& d = parent_grad(self, p);
        for (std::size_t i = 0; i < d.size(); ++i) {
          d[i] += self.grad[i];
        }
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data();
  auto y = b.data();
  Buffer out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] * y[i];
  }
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    if (parent_needs(self, 0)) {
      auto& d = parent_grad(self, 0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += self.grad[i] * y[i];
      }
    }
    if (parent_needs(self, 1)) {
      auto& d = parent_grad(self, 1);
      for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += self.grad[i] * x[i];
      }
    }
  });
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ShapeError("dense: weights " + shape_string(weights.shape()) + " and bias " +
                     shape_string(bias.shape()) + " disagree");
  }
  const bool batched = input.rank() == 2;
  if ((!batched && input.rank() != 1) || input.shape().back() != weights.dim(1)) {
    throw ShapeError("dense: input " + shape_string(input.shape()) + " does not match weights " +
                     shape_string(weights.shape()));
  }
  const std::size_t rows = batched ? input.dim(0) : 1;
  const std::size_t p = weights.dim(1);
  const std::size_t q = weights.dim(0);
  Buffer out(rows * q);
  ConstMatrixMap x(input.data().data(), idx(rows), idx(p));
  ConstMatrixMap w(weights.data().data(), idx(q), idx(p));
  MatrixMap y(out.data(), idx(rows), idx(q));
  y.noalias() = x * w.transpose();
  y.rowwise() += ConstVectorMap(bias.data().data(), idx(q)).transpose();

  Shape shape = batched ? Shape{rows, q} : Shape{q};
  return make_result(std::move(shape), std::move(out), {input, weights, bias},
                     [rows, p, q](detail::Node& self) {
                       ConstMatrixMap dy(self.grad.data(), idx(rows), idx(q));
                       if (parent_needs(self, 0)) {
                         ConstMatrixMap w(self.parents[1]->value.data(), idx(q), idx(p));
                         MatrixMap(parent_grad(self, 0).data(), idx(rows), idx(p)).noalias() +=
                             dy * w;
                       }
                       if (parent_needs(self, 1)) {
                         ConstMatrixMap x(self.parents[0]->value.data(), idx(rows), idx(p));
                         MatrixMap(parent_grad(self, 1).data(), idx(q), idx(p)).noalias() +=
                             dy.transpose() * x;
                       }
                       if (parent_needs(self, 2)) {
                         VectorMap(parent_grad(self, 2).data(), idx(q)) +=
                             dy.colwise().sum().transpose();
                       }
                     });
}

namespace {

Tensor embed_rows(const std::vector<std::size_t>& flat, std::size_t rows, const Tensor& table) {
  if (table.rank() != 2) {
    throw ShapeError("embed: table must be (V, D), got " + shape_string(table.shape()));
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t dim = table.dim(1);
  for (auto token : flat) {
    if (token >= vocab) {
      throw InvalidArgument("embed: token " + std::to_string(token) +
                            " out of range for vocabulary of " + std::to_string(vocab));
    }
  }
  Buffer out(flat.size() * dim);
  auto w = table.data();
  for (std::size_t t = 0; t < flat.size(); ++t) {
    std::copy_n(w.begin() + static_cast<std::ptrdiff_t>(flat[t] * dim), dim,
                out.begin() + static_cast<std::ptrdiff_t>(t * dim));
  }
  const std::size_t per_row = rows > 0 ? flat.size() / rows : 0;
  Shape shape = rows == 0 ? Shape{flat.size() * dim} : Shape{rows, per_row * dim};
  return make_result(std::move(shape), std::move(out), {table}, [flat, dim](detail::Node& self) {
    auto& dw = parent_grad(self, 0);
    for (std::size_t t = 0; t < flat.size(); ++t) {
      for (std::size_t d = 0; d < dim; ++d) {
        dw[flat[t] * dim + d] += self.grad[t * dim + d];
      }
    }
  });
}

}  // namespace

Tensor embed(std::span<const std::size_t> tokens, const Tensor& table) {
  return embed_rows(std::vector<std::size_t>(tokens.begin(), tokens.end()), 0, table);
}

Tensor embed(const std::vector<std::vector<std::size_t>>& tokens, const Tensor& table) {
  if (tokens.empty()) {
    throw ShapeError("embed: empty batch");
  }
  std::vector<std::size_t> flat;
  for (const auto& row : tokens) {
    if (row.size() != tokens.front().size()) {
      throw ShapeError("embed: rows have different token counts");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return embed_rows(flat, tokens.size(), table);
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw ShapeError("concat: nothing to join");
  }
  const std::size_t rank = parts.front().rank();
  if (rank != 1 && rank != 2) {
    throw ShapeError("concat: inputs must be rank 1 or 2");
  }
  const std::size_t rows = rank == 2 ? parts.front().dim(0) : 1;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : parts) {
    if (t.rank() != rank || (rank == 2 && t.dim(0) != rows)) {
      throw ShapeError("concat: " + shape_string(t.shape()) + " does not line up with " +
                       shape_string(parts.front().shape()));
    }
    widths.push_back(t.shape().back());
    total += widths.back();
  }
  Buffer out(rows * total);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto src = parts[k].data().subspan(r * widths[k], widths[k]);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
      offset += widths[k];
    }
  }
  Shape shape = rank == 2 ? Shape{rows, total} : Shape{total};
  return make_result(std::move(shape), std::move(out), parts,
                     [rows, total, widths](detail::Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (parent_needs(self, k)) {
                           auto& d = parent_grad(self, k);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < widths[k]; ++c) {
                               d[r * widths[k] + c] += self.grad[r * total + offset + c];
                             }
                           }
                         }
                         offset += widths[k];
                       }
                     });
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_size(shape) != input.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(input.shape()) + " as " +
                     shape_string(shape));
  }
  Buffer out(input.data().begin(), input.data().end());
  return make_result(std::move(shape), std::move(out), {input}, [](detail::Node& self) {
    auto& d = parent_grad(self, 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& input) {
  double total = 0.0;
  for (double v : input.data()) {
    total += v;
  }
  return make_result({}, {total}, {input}, [](detail::Node& self) {
    auto& d = parent_grad(self, 0);
    for (auto& v : d) {
      v += self.grad[0];
    }
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& actual) {
  require_same_shape(pred, actual, "mse_loss");
  if (pred.size() == 0) {
    throw ShapeError("mse_loss: empty tensors");
  }
  auto p = pred.data();
  auto a = actual.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - a[i];
    total += d * d;
  }
  const double n = static_cast<double>(p.size());
  return make_result({}, {total / n}, {pred, actual}, [n](detail::Node& self) {
    const auto& p = self.parents[0]->value;
    const auto& a = self.parents[1]->value;
    const double scale = 2.0 * self.grad[0] / n;
    if (parent_needs(self, 0)) {
      auto& d = parent_grad(self, 0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += scale * (p[i] - a[i]);
      }
    }
    if (parent_needs(self, 1)) {
      auto& d = parent_grad(self, 1);
      for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] -= scale * (p[i] - a[i]);
      }
    }
  });
}

}  // namespace deepgap::nn
