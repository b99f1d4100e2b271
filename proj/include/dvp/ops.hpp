// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "dvp/tensor.hpp"

// Differentiable primitives over float32 tensors. Binary ops broadcast
// numpy-style (shapes aligned on trailing dims, size-1 dims stretch).
// Shape violations throw std::runtime_error naming the op and shapes.
namespace dvp::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor rsub_scalar(float s, const Tensor& a); // s - a
Tensor clamp_min(const Tensor& a, float lo);
Tensor clamp_max(const Tensor& a, float hi);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a); // tanh approximation
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);

// batched matrix product: a [..., m, k] x b [..., k, n] -> [..., m, n];
// b may be rank-2 and is then shared across the batch
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a, int ax0, int ax1);
Tensor reshape(const Tensor& a, const Shape& s);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);

Tensor softmax(const Tensor& a); // along last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f); // along last axis

// table (V, d) gathered by token ids -> (ids.size(), d)
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

Tensor sum(const Tensor& a);  // rank-0
Tensor mean(const Tensor& a); // rank-0
Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& a, int axis, bool keepdim = false);
// sum of squares along an axis
Tensor squared_l2(const Tensor& a, int axis, bool keepdim = false);

// stack `times` copies along a new leading axis
Tensor repeat_leading(const Tensor& a, int times);

// x (b, ci, d, h, w) * w (co, ci*27) + bias (co); 3x3x3 taps, padding 1
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride_d, int stride_h, int stride_w);

} // namespace dvp::ops
