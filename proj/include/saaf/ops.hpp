#pragma once

#include "saaf/tensor.hpp"

#include <span>
#include <vector>

// Differentiable primitives. Every function returns a fresh tensor and records
// a graph node when any input requires gradients. Shapes are checked eagerly
// (ShapeMismatch) and every output is checked for finiteness (NumericOverflow).
namespace saaf {

/// Elementwise sum. `b` may also be a rank-1 tensor matching the last
/// dimension of `a`, in which case it is broadcast over the rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product, with the same row broadcast rule as add().
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Concatenates rank-2 tensors along rows (axis 0) or columns (axis 1).
Tensor concat(std::span<const Tensor> parts, int axis);
/// Half-open range [begin, end) of rows (axis 0) or columns (axis 1).
Tensor slice(const Tensor& a, int axis, Index begin, Index end);

/// Softmax over each row. With `causal`, row i only covers columns 0..i and
/// the remaining entries are exactly zero.
Tensor softmax_rows(const Tensor& a, bool causal = false);
Tensor log_softmax_rows(const Tensor& a);

Tensor sigmoid(const Tensor& a);
/// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& a);
/// log(1 + exp(x)) in overflow-free form.
Tensor softplus(const Tensor& a);
Tensor log(const Tensor& a);

/// Row-wise layer normalization with per-column gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

/// Gathers rows of a [V, d] table.
Tensor embedding(const Tensor& table, std::span<const int> ids);

/// Bilinear resize of a rank-2 grid, half-pixel (align_corners = false)
/// convention: output pixel (y, x) samples the source at
///   sy = (y + 0.5) * in_h / out_h - 0.5,  sx = (x + 0.5) * in_w / out_w - 0.5
/// with sy, sx clamped to [0, in - 1] before splitting into floor and weight.
Tensor upsample_bilinear(const Tensor& a, Index out_h, Index out_w);

} // namespace saaf
