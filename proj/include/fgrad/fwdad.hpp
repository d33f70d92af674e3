#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fgrad/errors.hpp"
#include "fgrad/instrument.hpp"
#include "fgrad/ops.hpp"
#include "fgrad/params.hpp"
#include "fgrad/program.hpp"
#include "fgrad/tensor.hpp"

// Forward-mode AD: dual tensors carry a tangent alongside every primal value,
// so one evaluation of a program yields f(theta) and the directional
// derivative grad f(theta) . v.
namespace fgrad::fwdad {

// (primal, tangent) pair of identical shape. A dual built from a primal
// alone has a structurally zero tangent, which the primitives skip.
class DualTensor {
 public:
  DualTensor() = default;
  explicit DualTensor(Tensor primal) : primal_(std::move(primal)) {}
  DualTensor(Tensor primal, Tensor tangent);

  const Tensor& primal() const noexcept { return primal_; }
  bool has_tangent() const noexcept { return !tangent_.empty(); }
  // Materializes zeros when the tangent is structurally zero.
  Tensor tangent() const;
  // Only valid when has_tangent().
  const Tensor& tangent_ref() const noexcept { return tangent_; }

 private:
  Tensor primal_;
  Tensor tangent_;
};

// Random direction v with one component per scalar parameter.
struct Perturbation {
  Tensor v;
};

Perturbation sample_perturbation(Rng& rng, std::size_t n);

// Pairs every parameter with its slice of v, in declaration order.
std::vector<DualTensor> seed(const ParamSet& params, const Perturbation& v);

// Primitive set on duals.
DualTensor constant_like(const DualTensor& ref, Tensor value);
inline const Tensor& primal_of(const DualTensor& x) { return x.primal(); }

DualTensor matmul(const DualTensor& a, const DualTensor& b);
DualTensor add_bias(const DualTensor& x, const DualTensor& bias);
DualTensor relu(const DualTensor& x);
DualTensor conv2d(const DualTensor& x, const DualTensor& kernel);
DualTensor maxpool2d(const DualTensor& x);
DualTensor reshape(const DualTensor& x, Shape shape);
DualTensor logsoftmax_nll(const DualTensor& logits, std::span<const int> labels);
DualTensor add(const DualTensor& a, const DualTensor& b);
DualTensor sub(const DualTensor& a, const DualTensor& b);
DualTensor mul(const DualTensor& a, const DualTensor& b);
DualTensor scale(const DualTensor& a, double s);
DualTensor add_scalar(const DualTensor& a, double s);

struct Directional {
  double loss = 0.0;
  // grad f(theta) . v
  double derivative = 0.0;
};

// f(theta) and grad f(theta) . v from a single forward evaluation. The
// gradient vector is never formed.
template <class F>
Directional directional_derivative(F&& f, const ParamSet& params, const Perturbation& v) {
  static_assert(ProgramOver<F, DualTensor>,
                "unsupported operation: the program must be built only from primitives that "
                "have a dual-tensor rule");
  std::vector<DualTensor> duals = seed(params, v);
  ++instrument::counters().forward_evaluations;
  const DualTensor out = f(std::span<const DualTensor>(duals));
  if (out.primal().numel() != 1) {
    throw ContractError("directional_derivative: program output must be a scalar, got " +
                        shape_str(out.primal().shape()));
  }
  return {out.primal().item(), out.has_tangent() ? out.tangent_ref().item() : 0.0};
}

struct ForwardGradient {
  double loss = 0.0;
  double derivative = 0.0;
  // g = (grad f . v) v
  Tensor gradient;
};

// Evaluates the forward gradient for a caller-chosen direction. Intended for
// tests that need a known v; training samples v through forward_gradient.
template <class F>
ForwardGradient forward_gradient_along(F&& f, const ParamSet& params, const Perturbation& v) {
  const Directional d = directional_derivative(f, params, v);
  return {d.loss, d.derivative, ops::scale(v.v, d.derivative)};
}

// Samples v ~ N(0, I) (exactly n normal draws) and returns g = (grad f . v) v.
template <class F>
ForwardGradient forward_gradient(F&& f, const ParamSet& params, Rng& rng) {
  const Perturbation v = sample_perturbation(rng, params.numel());
  return forward_gradient_along(f, params, v);
}

}  // namespace fgrad::fwdad
