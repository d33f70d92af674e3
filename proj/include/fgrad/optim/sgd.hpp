#pragma once

#include <cstddef>

#include "fgrad/optim/schedule.hpp"
#include "fgrad/params.hpp"
#include "fgrad/revad.hpp"

// Plain stochastic gradient descent on reverse-mode gradients (the
// backpropagation baseline).
namespace fgrad::optim {

template <class F>
StepResult sgd_step(F&& f, ParamSet& params, OptState& state) {
  const double eta = lr(state);
  const revad::Gradient g = revad::grad(f, params);
  auto flat = g.gradient.data();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params.mutable_tensor(i).mutable_data();
    const double* gi = flat.data() + params.offset(i);
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= eta * gi[j];
  }
  ++state.step;
  return {g.loss, eta, 0.0};
}

}  // namespace fgrad::optim
