#pragma once

#include <cstdint>

namespace fgrad::instrument {

// Per-thread tallies of program evaluations, bumped by the AD drivers.
struct EvalCounters {
  std::uint64_t forward_evaluations = 0;
  std::uint64_t backward_passes = 0;
};

EvalCounters& counters() noexcept;
inline void reset() noexcept { counters() = {}; }

}  // namespace fgrad::instrument
