#pragma once

// Differentiable primitives. Every function records a vector-Jacobian product
// on the active tape when any operand requires a gradient; otherwise it is a
// plain forward computation. Shape violations raise ShapeError naming the
// primitive and the offending shapes.

#include <vector>

#include "lano/tensor.hpp"

namespace lano {

// Elementwise binary ops with right-aligned (numpy-style) broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T s);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T s);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
/// Exact GELU, 0.5 x (1 + erf(x / sqrt 2)).
template <typename T> Tensor<T> gelu(const Tensor<T>& x);

/// Matrix product of the last two axes. Operands are 2-D or 3-D; a 2-D
/// operand is broadcast across the batch of a 3-D one. trans_a / trans_b
/// transpose the stored matrices before multiplying.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false);

/// x[N, in] * w[in, out] + bias[out]; bias may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// Normalizes over the last axis. A constant row maps to zeros before the
/// affine transform.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x, std::size_t axis, bool keepdim = true);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x, std::size_t axis, bool keepdim = true);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, std::size_t i, std::size_t j);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);

/// Positions where the (broadcastable) mask is nonzero take `value`.
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const Tensor<T>& mask, T value);

/// Stride-1 grouped 2-D convolution with zero padding on a single image.
/// x[C_in, H, W], w[C_out, C_in / groups, k, k], bias[C_out] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t groups, std::size_t padding);

/// Value copy cut off from the tape.
template <typename T> Tensor<T> stop_gradient(const Tensor<T>& x) { return x.detach(); }

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

}  // namespace lano
