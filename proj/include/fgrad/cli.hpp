#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgrad/bench.hpp"
#include "fgrad/testfuncs.hpp"

// The fgrad command line: testfunc, train, bench and scaling subcommands.
// Kept in the library so tests can drive it in-process.
namespace fgrad::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

// Parses argv (argv[0] is the program name) and runs one subcommand. Output
// paths are reported on out, diagnostics on err.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

// Learning rates used when --lr is not given.
double default_lr(nn::Arch arch);

struct TrajectoryRow {
  std::size_t iteration = 0;
  double x = 0.0;
  double y = 0.0;
  double f = 0.0;
};

// Row 0 is the start point; one row per step after that. backprop means
// plain gradient descent on the reverse-mode gradient.
std::vector<TrajectoryRow> testfunc_trajectory(const testfuncs::TestFunction& fn,
                                               bench::Method method, double lr0, double decay_k,
                                               std::size_t iterations, std::uint64_t seed);

void write_trajectory_csv(std::ostream& os, const nlohmann::json& config,
                          std::span<const TrajectoryRow> rows);

}  // namespace fgrad::cli
