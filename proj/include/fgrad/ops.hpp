#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fgrad/tensor.hpp"

// Primitive numeric kernels on plain tensors. Every differentiable primitive
// in fwdad and revad is expressed through these.
namespace fgrad::ops {

// [m x k] * [k x p]
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b for a [k x m], b [k x p]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T for a [m x k], b [p x k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Primal and tangent of a bilinear primitive computed together. An empty
// tangent operand counts as zero; the result tangent is empty only when both
// are.
struct DualResult {
  Tensor primal;
  Tensor tangent;
};

// a*b and a_dot*b + a*b_dot, with one pass over b for a and a_dot.
DualResult matmul_jvp(const Tensor& a, const Tensor& a_dot, const Tensor& b, const Tensor& b_dot);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// a + s * b
Tensor add_scaled(const Tensor& a, const Tensor& b, double s);
// a += s * b, in place
void axpy_inplace(Tensor& a, const Tensor& b, double s);
double dot(const Tensor& a, const Tensor& b);

// x [B x F] plus bias [F] on every row
Tensor add_bias(const Tensor& x, const Tensor& bias);
// column sums of x [B x F] -> [F]
Tensor sum_rows(const Tensor& x);

Tensor relu(const Tensor& x);
// values where mask_source > 0, zero elsewhere
Tensor relu_mask(const Tensor& values, const Tensor& mask_source);

// Valid 3x3 cross-correlation, stride 1.
// input [N x C x H x W], kernel [O x C x 3 x 3] -> [N x O x (H-2) x (W-2)]
Tensor conv2d(const Tensor& input, const Tensor& kernel);
// conv(x, k) and conv(x_dot, k) + conv(x, k_dot); the unfolded x is shared
// by the primal and the kernel-tangent term.
DualResult conv2d_jvp(const Tensor& input, const Tensor& input_dot, const Tensor& kernel,
                      const Tensor& kernel_dot);
// d(loss)/d(input) given d(loss)/d(output)
Tensor conv2d_input_grad(const Tensor& out_grad, const Tensor& kernel, const Shape& input_shape);
// d(loss)/d(kernel) given d(loss)/d(output)
Tensor conv2d_kernel_grad(const Tensor& input, const Tensor& out_grad, const Shape& kernel_shape);

struct PoolResult {
  Tensor output;
  // Flat input index of the winning element for each output element.
  std::vector<std::size_t> argmax;
};

// 2x2 max pooling, stride 2. Ties go to the lowest flat index.
PoolResult maxpool2d(const Tensor& input);
// output[i] = values[argmax[i]]
Tensor gather(const Tensor& values, std::span<const std::size_t> argmax, const Shape& out_shape);
// result[argmax[i]] += values[i], zero elsewhere
Tensor scatter_add(const Tensor& values, std::span<const std::size_t> argmax, const Shape& in_shape);

// Mean over rows of -log softmax(logits)[label].
double logsoftmax_nll(const Tensor& logits, std::span<const int> labels);
// Gradient of logsoftmax_nll w.r.t. logits: (softmax - onehot) / B.
Tensor logsoftmax_nll_grad(const Tensor& logits, std::span<const int> labels);

}  // namespace fgrad::ops
