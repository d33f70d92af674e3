#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgrad/data.hpp"
#include "fgrad/nn.hpp"
#include "fgrad/params.hpp"

// Runtime and memory measurements: base runtime, the per-method cost
// factors Rf and Rb, time-to-loss Tf and Tb, and depth scaling.
namespace fgrad::bench {

enum class Method { kFgd, kBackprop };

std::string method_name(Method m);
// "fgd" or "backprop"; throws ContractError otherwise.
Method parse_method(const std::string& name);

inline constexpr int kSchemaVersion = 1;

// Loss became NaN or infinite during training.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& method, std::size_t iteration, double loss);
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

struct TimingOptions {
  std::size_t warmup = 5;
  std::size_t iterations = 30;
};

struct TimingStats {
  double median_s = 0.0;
  // Coefficient of variation of the timed samples.
  double cv = 0.0;
  std::vector<double> samples_s;
};

// Runs body(i) warmup times untimed, then times each of `iterations` calls.
TimingStats time_iterations(const std::function<void(std::size_t)>& body,
                            const TimingOptions& opts);

// Fixed minibatches for timing, drawn once so that data loading stays out of
// the timed region.
std::vector<data::Batch> fixed_batches(const data::Dataset& ds, std::size_t batch_size,
                                       std::size_t count, std::uint64_t seed);

// Median forward-only loss evaluation over the batches (no derivatives, no
// update).
TimingStats measure_base(const nn::ModelSpec& spec, const ParamSet& params,
                         std::span<const data::Batch> batches, const TimingOptions& opts = {});

struct ModeTiming {
  TimingStats step;
  // step median / base median
  double factor = 0.0;
};

// Median full optimization step (derivative plus update) relative to the
// base runtime. Updates a private copy of the parameters.
ModeTiming measure_mode(const nn::ModelSpec& spec, const ParamSet& params,
                        std::span<const data::Batch> batches, Method method, double base_s,
                        std::uint64_t seed, const TimingOptions& opts = {});

struct Factors {
  TimingStats base;
  TimingStats fgd;
  TimingStats backprop;
  double rf = 0.0;
  double rb = 0.0;
};

// Base, fgd and backprop iterations interleaved round-robin (sequentially)
// so that drift in machine speed affects all three alike. Preferred over
// separate measure_base/measure_mode calls when comparing methods.
Factors measure_factors(const nn::ModelSpec& spec, const ParamSet& params,
                        std::span<const data::Batch> batches, std::uint64_t seed,
                        const TimingOptions& opts = {});

// Peak tracked tensor elements above the live count at entry, for one
// derivative evaluation. For fgd the direction and its per-parameter tangent
// slices are allocated before the measurement starts, so the figure covers
// only the working set of the dual forward pass.
std::size_t derivative_peak(const nn::ModelSpec& spec, const ParamSet& params,
                            const data::Batch& batch, Method method, std::uint64_t seed);

struct CurveRow {
  std::size_t iteration = 0;
  // Cumulative training time; validation is excluded.
  double wall_ms = 0.0;
  double train_loss = 0.0;
  std::optional<double> valid_loss;
};

struct Curve {
  Method method = Method::kFgd;
  std::uint64_t seed = 0;
  std::vector<CurveRow> rows;
};

struct TrainConfig {
  nn::ModelSpec spec;
  double lr0 = 1e-4;
  double decay_k = 1e-4;
  std::size_t iterations = 1000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  // Validation loss every this many iterations and at the last one.
  std::size_t valid_every = 100;
  // Leading validation examples used; 0 means all.
  std::size_t valid_samples = 1000;
};

struct TrainResult {
  Curve curve;
  ParamSet params;
};

// One optimization run. Initialization and the batch stream depend only on
// the seed, so fgd and backprop runs with equal seeds see identical data.
TrainResult train(const TrainConfig& cfg, Method method, const data::Splits& splits);

struct TimeToLoss {
  // Mean over runs of backprop's best validation loss and its time.
  double target_loss = 0.0;
  double tb_s = 0.0;
  std::optional<double> tf_s;
  std::optional<double> ratio;
  bool reached() const { return ratio.has_value(); }
};

// Paired runs: run i of each method shares a seed. Tb_i is the time of
// backprop's lowest validation loss; Tf_i the first time fgd's validation
// loss is at or below it. Unreached if any fgd run never gets there.
TimeToLoss loss_time_ratio(std::span<const Curve> fgd, std::span<const Curve> backprop);

struct ScalingConfig {
  std::vector<std::size_t> depths{1, 2, 5, 10, 20};
  std::size_t width = 256;
  std::size_t batch_size = 64;
  std::size_t image_side = 28;
  std::uint64_t seed = 0;
  TimingOptions timing;
};

struct ScalingRow {
  std::size_t depth = 0;
  std::size_t params = 0;
  double base_s = 0.0;
  double rf = 0.0;
  double rb = 0.0;
  std::size_t fgd_peak = 0;
  std::size_t backprop_peak = 0;
};

std::vector<ScalingRow> scaling_sweep(const ScalingConfig& cfg);

struct BenchConfig {
  nn::ModelSpec spec;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  TimingOptions timing;
  // Training runs for Tf/Tb; zero iterations skips them.
  TrainConfig train;
  std::size_t runs = 1;
};

struct BenchReport {
  nlohmann::json config;
  double base_runtime_s = 0.0;
  double base_cv = 0.0;
  double harness_overhead_s = 0.0;
  double rf = 0.0;
  double rb = 0.0;
  double rf_over_rb = 0.0;
  std::size_t fgd_peak = 0;
  std::size_t backprop_peak = 0;
  std::vector<Curve> curves;
  std::optional<TimeToLoss> time_to_loss;
};

BenchReport run_bench(const BenchConfig& cfg, const data::Splits& splits);

nlohmann::json to_json(const BenchReport& r);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const nn::ModelSpec& s);

// CSV: '#'-prefixed schema and config lines, then a header and one row per
// iteration (method, iteration, wall_ms, train_loss, valid_loss).
void write_curves_csv(std::ostream& os, const nlohmann::json& config, std::span<const Curve> curves);
void write_scaling_csv(std::ostream& os, const nlohmann::json& config,
                       std::span<const ScalingRow> rows);

}  // namespace fgrad::bench
