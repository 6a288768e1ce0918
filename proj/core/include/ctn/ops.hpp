#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ctn/autograd.hpp"

namespace ctn::ops {

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real s);
Var relu(const Var& a);
Var leaky_relu(const Var& a, real slope);
Var gelu(const Var& a);

// x treated as [rows, in_features] with rows = numel / in_features.
// w: [out_features, in_features], b: [out_features] (may be null).
Var linear(const Var& x, const Var& w, const Var& b);

// Batched matrix products; leading dims of a and b must agree.
// matmul:    a [..., M, K] x b [..., K, N] -> [..., M, N]
// matmul_bt: a [..., M, K] x b [..., N, K] -> [..., M, N]  (b transposed)
Var matmul(const Var& a, const Var& b);
Var matmul_bt(const Var& a, const Var& b);

Var softmax_lastdim(const Var& x);

// scores [W, H, T, T] += bias [H, T, T] (broadcast over W, grads flow to bias).
Var add_bias_windows(const Var& scores, const Var& bias);
// scores [B*nw, H, T, T] += mask [nw, T, T] (constant; broadcast over batch and heads).
Var add_mask(const Var& scores, const Tensor& mask);

// Normalization.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, real eps = 1e-5);
Var instance_norm(const Var& x, const Var& gamma, const Var& beta, real eps = 1e-5);

// x [B,Ci,D,H,W], w [Co,Ci,kd,kh,kw], b [Co] or null.
Var conv3d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// x [B,C,D,H,W] -> [B,C,od,oh,ow], half-pixel-center trilinear with edge clamp.
Var trilinear_resize(const Var& x, std::array<int64_t, 3> out_dhw);

// Concatenate along axis 1 (channels); all other dims must match.
Var concat_channels(const Var& a, const Var& b);

// out[i] = x[index[i]], index -1 yields 0. Backward scatter-adds.
Var gather(const Var& x, const std::vector<int64_t>& index, std::vector<int64_t> out_shape);

Var reshape(const Var& x, std::vector<int64_t> shape);

// Reductions.
Var sum(const Var& x);
Var inner(const Var& x, const Tensor& t);  // sum(x * t), t constant

// Combined soft-Dice (classes 1..C-1) + voxelwise cross-entropy.
// logits [B,C,D,H,W]; labels [B,D,H,W] (integer values stored as real).
Var dice_ce_loss(const Var& logits, const Tensor& labels, real dice_w, real ce_w);

}  // namespace ctn::ops
