#pragma once

#include <cstddef>

#include "fgrad/fwdad.hpp"
#include "fgrad/optim/schedule.hpp"
#include "fgrad/params.hpp"

// Forward gradient descent. Deliberately free of any reverse-mode include:
// the true gradient is never available on this path.
namespace fgrad::optim {

// theta <- theta - lr * d * v, with (loss, d) from one forward-mode run.
// Takes v from the caller; fgd_step samples it.
template <class F>
StepResult fgd_step_along(F&& f, ParamSet& params, OptState& state,
                          const fwdad::Perturbation& v) {
  const double eta = lr(state);
  const fwdad::Directional d = fwdad::directional_derivative(f, params, v);
  const double coeff = -eta * d.derivative;
  auto flat = v.v.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params.mutable_tensor(i).mutable_data();
    const double* vi = flat.data() + params.offset(i);
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] += coeff * vi[j];
  }
  ++state.step;
  return {d.loss, eta, d.derivative};
}

template <class F>
StepResult fgd_step(F&& f, ParamSet& params, OptState& state) {
  const fwdad::Perturbation v = fwdad::sample_perturbation(state.rng, params.numel());
  return fgd_step_along(f, params, state, v);
}

}  // namespace fgrad::optim
