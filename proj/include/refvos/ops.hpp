#pragma once

#include <vector>

#include "refvos/tensor.hpp"

namespace refvos {
namespace ops {

// Elementwise with right-aligned broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor logsigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false);
Tensor mean_axis(const Tensor& a, int axis, bool keepdim = false);

// Batched matrix product; leading (batch) extents broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// x: [H,W,Cin], kernel: [kh,kw,Cin,Cout]; kh,kw in {1,3}, stride in {1,2}.
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding);

Tensor embedding(const Tensor& table, const std::vector<int>& ids);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int start, int len);
// Keeps every step-th index along axis.
Tensor downsample(const Tensor& x, int axis, int step);
// Drops the given axis at a fixed index.
Tensor select_index(const Tensor& x, int axis, int index);

// x: [H,W,C] (or [H,W]); nearest / bilinear (half-pixel centers) resize.
Tensor upsample_nearest(const Tensor& x, int h_out, int w_out);
Tensor upsample_bilinear(const Tensor& x, int h_out, int w_out);

// Scalar-tape convenience: runs backward of the tape through loss.
void backward(Tape& tape, const Tensor& loss, GradSink* sink = nullptr);

}  // namespace ops
}  // namespace refvos
