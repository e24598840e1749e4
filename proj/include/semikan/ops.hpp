#pragma once

#include "semikan/tensor.hpp"

#include <vector>

namespace semikan {

// Differentiable tensor ops. All ops allocate fresh outputs; inputs are never
// modified. Binary ops broadcast with trailing-axis alignment: shapes are
// right-aligned and each pair of dims must match or one of them must be 1.
// Anything else raises DimensionError.

// -- elementwise ------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
// a^p elementwise; at a == 0 with p < 1 the derivative is defined as 0.
Tensor pow_scalar(const Tensor& a, double p);
// Clamp with zero subgradient outside [lo, hi].
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);

// Same values, detached from the tape (no gradient flows through).
Tensor detach(const Tensor& a);
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor concat(const std::vector<Tensor>& parts, int64_t axis);

// -- reductions -------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reduce over the given axes. With keepdims the reduced axes stay as size 1.
Tensor sum_axes(const Tensor& a, const std::vector<int64_t>& axes, bool keepdims);

// -- softmax-family ---------------------------------------------------------
// Shift-invariant softmax along `axis` (max subtraction).
Tensor softmax(const Tensor& a, int64_t axis);
// sqrt(sum over `axis` of x^2); removes the axis. Subgradient 0 at norm == 0.
Tensor l2_norm_axis(const Tensor& a, int64_t axis);
// Per-element KL contribution summed over `axis`:
//   sum_k p_k * log(p_k / max(q_k, eps)),  terms with p_k == 0 contribute 0.
// q is treated as a constant (no gradient), matching a fixed target.
Tensor kl_divergence_axis(const Tensor& p, const Tensor& q, int64_t axis, double eps = 1e-8);

// -- linear algebra ----------------------------------------------------------
// 2-D matrix product [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

// -- convolution / pooling / resampling --------------------------------------
// Cross-correlation, kernel [F,C,kh,kw] over input [N,C,H,W].
Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t stride, int64_t padding);
// Kernel [C,F,kh,kw]; output spatial size (H-1)*stride + kh.
Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, int64_t stride);
// Kernel [C,1,kh,kw], per-channel convolution, stride 1.
Tensor depthwise_conv2d(const Tensor& input, const Tensor& kernel, int64_t padding);
Tensor avg_pool2d(const Tensor& input, int64_t factor);
Tensor upsample_nearest(const Tensor& input, int64_t factor);
// align-corners-false convention with edge clamping.
Tensor upsample_bilinear(const Tensor& input, int64_t factor);

// -- normalization ------------------------------------------------------------
// Training mode normalizes with batch statistics (biased variance) and
// updates running stats in place:
//   running <- (1 - momentum) * running + momentum * batch   (var unbiased).
// Eval mode normalizes with the running stats. gamma/beta are [C].
Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var,
                    bool training, double eps = 1e-5, double momentum = 0.1);

// Normalizes over the last axis. gamma/beta have that axis's length.
Tensor layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// -- token layout -------------------------------------------------------------
// [N,C,H,W] -> [N, (H/P)*(W/P), P*P*C]; patches in raster order, features
// channel-major (index = c*P*P + py*P + px).
Tensor extract_patches(const Tensor& input, int64_t patch);
// Inverse layout of extract_patches: [N,T,P*P*C] -> [N,C,H,W].
Tensor fold_patches(const Tensor& tokens, int64_t patch, int64_t channels,
                    int64_t height, int64_t width);
// [N,T,D] -> [N,D,th,tw] with T = th*tw (pure permutation).
Tensor tokens_to_grid(const Tensor& tokens, int64_t th, int64_t tw);
Tensor grid_to_tokens(const Tensor& grid);

// convenience operators
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

} // namespace semikan
