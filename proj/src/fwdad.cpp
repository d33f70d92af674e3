#include "fgrad/fwdad.hpp"

#include <algorithm>

namespace fgrad::fwdad {

namespace {

// Sum of optional tangent contributions; an absent term is zero.
Tensor sum_terms(Tensor a, const Tensor& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  ops::axpy_inplace(a, b, 1.0);
  return a;
}

DualTensor make(Tensor primal, Tensor tangent) {
  if (tangent.empty()) return DualTensor(std::move(primal));
  return DualTensor(std::move(primal), std::move(tangent));
}

}  // namespace

DualTensor::DualTensor(Tensor primal, Tensor tangent)
    : primal_(std::move(primal)), tangent_(std::move(tangent)) {
  if (primal_.shape() != tangent_.shape()) {
    throw DimensionError("dual tensor: primal " + shape_str(primal_.shape()) +
                         " and tangent " + shape_str(tangent_.shape()) + " differ in shape");
  }
}

Tensor DualTensor::tangent() const {
  if (has_tangent()) return tangent_;
  return Tensor::zeros(primal_.shape());
}

Perturbation sample_perturbation(Rng& rng, std::size_t n) {
  if (n == 0) throw ContractError("sample_perturbation: n must be at least 1");
  return {randn(rng, {n})};
}

std::vector<DualTensor> seed(const ParamSet& params, const Perturbation& v) {
  if (v.v.numel() != params.numel()) {
    throw DimensionError("seed: perturbation has " + std::to_string(v.v.numel()) +
                         " components, parameters have " + std::to_string(params.numel()));
  }
  std::vector<DualTensor> out;
  out.reserve(params.size());
  auto flat = v.v.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i];
    Tensor t(p.shape());
    std::ranges::copy(flat.subspan(params.offset(i), p.numel()), t.mutable_data().begin());
    out.emplace_back(p, std::move(t));
  }
  return out;
}

DualTensor constant_like(const DualTensor&, Tensor value) { return DualTensor(std::move(value)); }

DualTensor matmul(const DualTensor& a, const DualTensor& b) {
  ops::DualResult r = ops::matmul_jvp(a.primal(), a.tangent_ref(), b.primal(), b.tangent_ref());
  return make(std::move(r.primal), std::move(r.tangent));
}

DualTensor add_bias(const DualTensor& x, const DualTensor& bias) {
  Tensor primal = ops::add_bias(x.primal(), bias.primal());
  Tensor tangent;
  if (x.has_tangent() && bias.has_tangent()) {
    tangent = ops::add_bias(x.tangent_ref(), bias.tangent_ref());
  } else if (x.has_tangent()) {
    tangent = x.tangent_ref();
  } else if (bias.has_tangent()) {
    tangent = ops::add_bias(Tensor::zeros(x.primal().shape()), bias.tangent_ref());
  }
  return make(std::move(primal), std::move(tangent));
}

DualTensor relu(const DualTensor& x) {
  Tensor primal = ops::relu(x.primal());
  if (!x.has_tangent()) return DualTensor(std::move(primal));
  return DualTensor(std::move(primal), ops::relu_mask(x.tangent_ref(), x.primal()));
}

DualTensor conv2d(const DualTensor& x, const DualTensor& kernel) {
  ops::DualResult r =
      ops::conv2d_jvp(x.primal(), x.tangent_ref(), kernel.primal(), kernel.tangent_ref());
  return make(std::move(r.primal), std::move(r.tangent));
}

DualTensor maxpool2d(const DualTensor& x) {
  ops::PoolResult pooled = ops::maxpool2d(x.primal());
  if (!x.has_tangent()) return DualTensor(std::move(pooled.output));
  Tensor tangent = ops::gather(x.tangent_ref(), pooled.argmax, pooled.output.shape());
  return DualTensor(std::move(pooled.output), std::move(tangent));
}

DualTensor reshape(const DualTensor& x, Shape shape) {
  if (!x.has_tangent()) return DualTensor(x.primal().reshape(std::move(shape)));
  return DualTensor(x.primal().reshape(shape), x.tangent_ref().reshape(shape));
}

DualTensor logsoftmax_nll(const DualTensor& logits, std::span<const int> labels) {
  Tensor primal = Tensor::scalar(ops::logsoftmax_nll(logits.primal(), labels));
  if (!logits.has_tangent()) return DualTensor(std::move(primal));
  // d loss = sum_bk (softmax - onehot)_bk / B * dz_bk
  const Tensor jac = ops::logsoftmax_nll_grad(logits.primal(), labels);
  return DualTensor(std::move(primal), Tensor::scalar(ops::dot(jac, logits.tangent_ref())));
}

DualTensor add(const DualTensor& a, const DualTensor& b) {
  Tensor primal = ops::add(a.primal(), b.primal());
  Tensor tangent;
  if (a.has_tangent()) tangent = a.tangent_ref();
  if (b.has_tangent()) tangent = tangent.empty() ? b.tangent_ref() : ops::add(tangent, b.tangent_ref());
  return make(std::move(primal), std::move(tangent));
}

DualTensor sub(const DualTensor& a, const DualTensor& b) {
  Tensor primal = ops::sub(a.primal(), b.primal());
  Tensor tangent;
  if (a.has_tangent()) tangent = a.tangent_ref();
  if (b.has_tangent()) {
    tangent = tangent.empty() ? ops::scale(b.tangent_ref(), -1.0) : ops::sub(tangent, b.tangent_ref());
  }
  return make(std::move(primal), std::move(tangent));
}

DualTensor mul(const DualTensor& a, const DualTensor& b) {
  Tensor primal = ops::mul(a.primal(), b.primal());
  Tensor tangent;
  if (a.has_tangent()) tangent = ops::mul(a.tangent_ref(), b.primal());
  if (b.has_tangent()) tangent = sum_terms(std::move(tangent), ops::mul(a.primal(), b.tangent_ref()));
  return make(std::move(primal), std::move(tangent));
}

DualTensor scale(const DualTensor& a, double s) {
  Tensor primal = ops::scale(a.primal(), s);
  if (!a.has_tangent()) return DualTensor(std::move(primal));
  return DualTensor(std::move(primal), ops::scale(a.tangent_ref(), s));
}

DualTensor add_scalar(const DualTensor& a, double s) {
  Tensor primal = ops::add_scalar(a.primal(), s);
  if (!a.has_tangent()) return DualTensor(std::move(primal));
  return DualTensor(std::move(primal), a.tangent_ref());
}

}  // namespace fgrad::fwdad
