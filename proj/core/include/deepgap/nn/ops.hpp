#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deepgap/nn/tensor.hpp"

namespace deepgap::nn {

/// Same-padded, stride-1 cross-correlation plus per-channel bias.
///
/// input   (C_in, H, W) or (N, C_in, H, W)
/// filters (C_out, C_in, n, m) with n, m odd
/// bias    (C_out)
///
/// out[o][y][x] = bias[o] + sum_{c,i,j} filters[o][c][i][j] * in[c][y+i-n/2][x+j-m/2],
/// with out-of-range input taken as zero. No activation is applied.
Tensor conv2d(const Tensor& input, const Tensor& filters, const Tensor& bias);

/// max(0, x). The subgradient at 0 is 0.
Tensor relu(const Tensor& input);

Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise product of equal shapes.
Tensor mul(const Tensor& a, const Tensor& b);

/// W x + b for x of shape (p) or each row of x of shape (N, p).
/// weights (q, p), bias (q).
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Concatenated rows of `table` (V, D) for each token: shape (len * D).
/// Throws InvalidArgument for a token >= V.
Tensor embed(std::span<const std::size_t> tokens, const Tensor& table);

/// Batched lookup; every row has the same token count k. Shape (N, k * D).
Tensor embed(const std::vector<std::vector<std::size_t>>& tokens, const Tensor& table);

/// Joins along the last axis. All inputs must be rank 1, or all rank 2 with
/// the same leading dimension.
Tensor concat(const std::vector<Tensor>& parts);

/// Same data, new shape of equal size.
Tensor reshape(const Tensor& input, Shape shape);

/// Sum of all elements, as a scalar.
Tensor sum(const Tensor& input);

/// Mean of squared differences over all elements, as a scalar.
Tensor mse_loss(const Tensor& pred, const Tensor& actual);

}  // namespace deepgap::nn
