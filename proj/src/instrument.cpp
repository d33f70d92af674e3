#include "fgrad/instrument.hpp"

namespace fgrad::instrument {

EvalCounters& counters() noexcept {
  thread_local EvalCounters c;
  return c;
}

}  // namespace fgrad::instrument
