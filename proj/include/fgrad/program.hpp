#pragma once

#include <concepts>
#include <span>
#include <type_traits>

#include "fgrad/instrument.hpp"
#include "fgrad/ops.hpp"
#include "fgrad/params.hpp"
#include "fgrad/tensor.hpp"

// A differentiable program is any callable taking the parameters as
// std::span<const V> and returning a one-element V, written only in terms of
// the primitives below. The same source runs on three value types:
//
//   Tensor             plain evaluation
//   fwdad::DualTensor  forward mode (primal + tangent)
//   revad::Var         reverse mode (recorded on a tape)
//
// Non-parameter inputs enter through constant_like(ref, tensor), which lifts
// a plain tensor into whatever value type ref has.
namespace fgrad {

template <class F, class V>
concept ProgramOver = std::invocable<F&, std::span<const V>> &&
                      std::convertible_to<std::invoke_result_t<F&, std::span<const V>>, V>;

// Plain-tensor primitive set.

inline Tensor constant_like(const Tensor&, Tensor value) { return value; }
inline const Tensor& primal_of(const Tensor& t) { return t; }

inline Tensor matmul(const Tensor& a, const Tensor& b) { return ops::matmul(a, b); }
inline Tensor add_bias(const Tensor& x, const Tensor& b) { return ops::add_bias(x, b); }
inline Tensor relu(const Tensor& x) { return ops::relu(x); }
inline Tensor conv2d(const Tensor& x, const Tensor& k) { return ops::conv2d(x, k); }
inline Tensor maxpool2d(const Tensor& x) { return ops::maxpool2d(x).output; }
inline Tensor reshape(const Tensor& x, Shape shape) { return x.reshape(std::move(shape)); }
inline Tensor logsoftmax_nll(const Tensor& logits, std::span<const int> labels) {
  return Tensor::scalar(ops::logsoftmax_nll(logits, labels));
}
inline Tensor add(const Tensor& a, const Tensor& b) { return ops::add(a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return ops::sub(a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return ops::mul(a, b); }
inline Tensor scale(const Tensor& a, double s) { return ops::scale(a, s); }
inline Tensor add_scalar(const Tensor& a, double s) { return ops::add_scalar(a, s); }

// Generic helpers built from the primitives.

template <class V>
V flatten(const V& x) {
  const Shape& s = primal_of(x).shape();
  return reshape(x, {s.front(), primal_of(x).numel() / s.front()});
}

template <class V>
V square(const V& x) {
  return mul(x, x);
}

// Plain evaluation of a program; counts as one forward evaluation.
template <class F>
  requires ProgramOver<F, Tensor>
double evaluate(F&& f, const ParamSet& params) {
  ++instrument::counters().forward_evaluations;
  const Tensor out = f(params.tensors());
  return out.item();
}

}  // namespace fgrad
