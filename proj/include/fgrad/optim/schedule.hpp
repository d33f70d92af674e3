#pragma once

#include <cmath>
#include <cstdint>

#include "fgrad/errors.hpp"
#include "fgrad/tensor.hpp"

namespace fgrad::optim {

// Decay constant used for every neural-network experiment.
inline constexpr double kDefaultDecay = 1e-4;

struct OptState {
  std::uint64_t step = 0;
  double lr0 = 1e-4;
  double decay_k = kDefaultDecay;
  // Source of perturbations for forward gradient descent.
  Rng rng{0};

  OptState() = default;
  OptState(double lr0_, double decay_k_, std::uint64_t seed) : lr0(lr0_), decay_k(decay_k_), rng(seed) {
    if (!(lr0 > 0.0)) throw ContractError("initial learning rate must be positive");
    if (decay_k < 0.0) throw ContractError("learning-rate decay must be nonnegative");
  }
};

// lr0 * exp(-step * decay_k)
inline double lr(const OptState& s) {
  return s.lr0 * std::exp(-static_cast<double>(s.step) * s.decay_k);
}

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
  // Directional derivative (FGD steps only).
  double derivative = 0.0;
};

}  // namespace fgrad::optim
