#pragma once

#include <vector>

#include "lipemo/tensor.hpp"

// Differentiable tensor operations. Image tensors are NCHW.
namespace lipemo::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor abs(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
// Requires strictly positive input.
Tensor log(const Tensor& a);
// Gradient passes where lo <= a <= hi, zero elsewhere.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Views the data as [size/group, group] and averages each row -> [size/group].
Tensor mean_groups(const Tensor& a, int group);
Tensor reshape(const Tensor& a, Shape shape);

// w [out, in, k, k]; b [out] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample2x(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// v [N, C] -> [N, C, h, w].
Tensor broadcast_spatial(const Tensor& v, int h, int w);
// x [N, K], w [M, K], b [M] or undefined -> [N, M].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
// [N, C, H, W] -> [N, C].
Tensor global_avg_pool(const Tensor& x);
// Rows [begin, end) along axis 0.
Tensor slice(const Tensor& x, int begin, int end);

// z [N, K] -> row-wise softmax, max-subtracted.
Tensor softmax_rows(const Tensor& z);
// x [N, K] -> [N] column k.
Tensor select_col(const Tensor& x, int k);
// Row-wise v.s / max(|v| |s|, eps) for v, s [N, D] -> [N].
Tensor cosine_rows(const Tensor& v, const Tensor& s, double eps);

}  // namespace lipemo::ops
