#include "fgrad/bench.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fgrad/errors.hpp"
#include "fgrad/fwdad.hpp"
#include "fgrad/optim/fgd.hpp"
#include "fgrad/optim/sgd.hpp"
#include "fgrad/revad.hpp"

namespace fgrad::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Independent streams for initialization, batch order and perturbations.
enum StreamTag : std::uint64_t { kInitStream = 1, kBatchStream = 2, kDirectionStream = 3 };

std::uint64_t stream_seed(std::uint64_t seed, StreamTag tag) { return Rng(seed).split(tag).seed(); }

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string num(double v) { return fmt("%.17g", v); }

optim::StepResult step(Method method, const nn::ModelSpec& spec, const data::Batch& b,
                       ParamSet& params, optim::OptState& state) {
  auto f = nn::loss_program(spec, b.images, b.labels);
  return method == Method::kFgd ? optim::fgd_step(f, params, state)
                                : optim::sgd_step(f, params, state);
}

TimingStats summarize(std::vector<double> samples) {
  TimingStats s;
  s.samples_s = std::move(samples);
  std::vector<double> sorted = s.samples_s;
  std::ranges::sort(sorted);
  const std::size_t n = sorted.size();
  s.median_s = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double var = 0.0;
  for (double x : sorted) var += (x - mean) * (x - mean);
  s.cv = n > 1 && mean > 0.0 ? std::sqrt(var / (n - 1)) / mean : 0.0;
  return s;
}

}  // namespace

std::string method_name(Method m) { return m == Method::kFgd ? "fgd" : "backprop"; }

Method parse_method(const std::string& name) {
  if (name == "fgd") return Method::kFgd;
  if (name == "backprop") return Method::kBackprop;
  throw ContractError("unknown method '" + name + "' (expected fgd or backprop)");
}

NumericError::NumericError(const std::string& method, std::size_t iteration, double loss)
    : std::runtime_error(method + ": loss became " + num(loss) + " at iteration " +
                         std::to_string(iteration)),
      iteration_(iteration) {}

TimingStats time_iterations(const std::function<void(std::size_t)>& body,
                            const TimingOptions& opts) {
  if (opts.iterations == 0) throw ContractError("timing needs at least one iteration");
  for (std::size_t i = 0; i < opts.warmup; ++i) body(i);
  std::vector<double> samples;
  samples.reserve(opts.iterations);
  for (std::size_t i = 0; i < opts.iterations; ++i) {
    const auto t0 = Clock::now();
    body(opts.warmup + i);
    samples.push_back(seconds_since(t0));
  }
  return summarize(std::move(samples));
}

std::vector<data::Batch> fixed_batches(const data::Dataset& ds, std::size_t batch_size,
                                       std::size_t count, std::uint64_t seed) {
  data::BatchIterator it(ds, batch_size, stream_seed(seed, kBatchStream));
  std::vector<data::Batch> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(it.next());
  return out;
}

TimingStats measure_base(const nn::ModelSpec& spec, const ParamSet& params,
                         std::span<const data::Batch> batches, const TimingOptions& opts) {
  if (batches.empty()) throw ContractError("measure_base needs at least one batch");
  volatile double sink = 0.0;
  return time_iterations(
      [&](std::size_t i) {
        const data::Batch& b = batches[i % batches.size()];
        sink = evaluate(nn::loss_program(spec, b.images, b.labels), params);
      },
      opts);
}

ModeTiming measure_mode(const nn::ModelSpec& spec, const ParamSet& params,
                        std::span<const data::Batch> batches, Method method, double base_s,
                        std::uint64_t seed, const TimingOptions& opts) {
  if (batches.empty()) throw ContractError("measure_mode needs at least one batch");
  ParamSet work = params;
  optim::OptState state(1e-4, optim::kDefaultDecay, stream_seed(seed, kDirectionStream));
  ModeTiming t;
  t.step = time_iterations(
      [&](std::size_t i) { step(method, spec, batches[i % batches.size()], work, state); }, opts);
  t.factor = t.step.median_s / base_s;
  return t;
}

Factors measure_factors(const nn::ModelSpec& spec, const ParamSet& params,
                        std::span<const data::Batch> batches, std::uint64_t seed,
                        const TimingOptions& opts) {
  if (batches.empty()) throw ContractError("measure_factors needs at least one batch");
  ParamSet fgd_params = params, bp_params = params;
  optim::OptState fgd_state(1e-4, optim::kDefaultDecay, stream_seed(seed, kDirectionStream));
  optim::OptState bp_state(1e-4, optim::kDefaultDecay, stream_seed(seed, kDirectionStream));
  volatile double sink = 0.0;
  std::array<std::function<void(std::size_t)>, 3> bodies = {
      [&](std::size_t i) {
        const data::Batch& b = batches[i % batches.size()];
        sink = evaluate(nn::loss_program(spec, b.images, b.labels), params);
      },
      [&](std::size_t i) {
        step(Method::kFgd, spec, batches[i % batches.size()], fgd_params, fgd_state);
      },
      [&](std::size_t i) {
        step(Method::kBackprop, spec, batches[i % batches.size()], bp_params, bp_state);
      }};
  std::array<std::vector<double>, 3> samples;
  const std::size_t rounds = opts.warmup + opts.iterations;
  for (std::size_t round = 0; round < rounds; ++round) {
    for (std::size_t slot = 0; slot < 3; ++slot) {
      // rotate which method goes first in each round
      const std::size_t which = (slot + round) % 3;
      const auto t0 = Clock::now();
      bodies[which](round);
      const double dt = seconds_since(t0);
      if (round >= opts.warmup) samples[which].push_back(dt);
    }
  }
  Factors f;
  f.base = summarize(std::move(samples[0]));
  f.fgd = summarize(std::move(samples[1]));
  f.backprop = summarize(std::move(samples[2]));
  f.rf = f.fgd.median_s / f.base.median_s;
  f.rb = f.backprop.median_s / f.base.median_s;
  return f;
}

std::size_t derivative_peak(const nn::ModelSpec& spec, const ParamSet& params,
                            const data::Batch& batch, Method method, std::uint64_t seed) {
  auto f = nn::loss_program(spec, batch.images, batch.labels);
  if (method == Method::kFgd) {
    Rng rng(stream_seed(seed, kDirectionStream));
    const fwdad::Perturbation v = fwdad::sample_perturbation(rng, params.numel());
    const std::vector<fwdad::DualTensor> duals = fwdad::seed(params, v);
    const std::size_t live = alloc_stats().live_elements;
    reset_alloc_peak();
    { const fwdad::DualTensor out = f(std::span<const fwdad::DualTensor>(duals)); }
    return alloc_stats().peak_elements - live;
  }
  const std::size_t live = alloc_stats().live_elements;
  reset_alloc_peak();
  { const revad::Gradient g = revad::grad(f, params); }
  return alloc_stats().peak_elements - live;
}

TrainResult train(const TrainConfig& cfg, Method method, const data::Splits& splits) {
  if (cfg.iterations == 0) throw ContractError("training needs at least one iteration");
  if (cfg.valid_every == 0) throw ContractError("validation interval must be positive");
  Rng init_rng(stream_seed(cfg.seed, kInitStream));
  TrainResult r{{method, cfg.seed, {}}, nn::init(cfg.spec, init_rng)};
  data::BatchIterator batches(splits.train, cfg.batch_size, stream_seed(cfg.seed, kBatchStream));
  optim::OptState state(cfg.lr0, cfg.decay_k, stream_seed(cfg.seed, kDirectionStream));

  std::vector<std::size_t> valid_idx(cfg.valid_samples == 0
                                         ? splits.valid.size()
                                         : std::min(cfg.valid_samples, splits.valid.size()));
  std::iota(valid_idx.begin(), valid_idx.end(), std::size_t{0});
  const data::Batch valid = data::gather_batch(splits.valid, valid_idx);

  r.curve.rows.reserve(cfg.iterations);
  double elapsed_s = 0.0;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const auto t0 = Clock::now();
    const data::Batch b = batches.next();
    const optim::StepResult s = step(method, cfg.spec, b, r.params, state);
    elapsed_s += seconds_since(t0);
    if (!std::isfinite(s.loss)) throw NumericError(method_name(method), it, s.loss);
    CurveRow row{it, elapsed_s * 1e3, s.loss, std::nullopt};
    if (it % cfg.valid_every == 0 || it == cfg.iterations) {
      const double v = evaluate(nn::loss_program(cfg.spec, valid.images, valid.labels), r.params);
      if (!std::isfinite(v)) throw NumericError(method_name(method), it, v);
      row.valid_loss = v;
    }
    r.curve.rows.push_back(row);
  }
  return r;
}

TimeToLoss loss_time_ratio(std::span<const Curve> fgd, std::span<const Curve> backprop) {
  if (fgd.empty() || fgd.size() != backprop.size()) {
    throw ContractError("loss_time_ratio needs the same nonzero number of runs per method");
  }
  TimeToLoss out;
  double tf_sum = 0.0;
  bool all_reached = true;
  for (std::size_t i = 0; i < fgd.size(); ++i) {
    const CurveRow* best = nullptr;
    for (const auto& row : backprop[i].rows) {
      if (row.valid_loss && (!best || *row.valid_loss < *best->valid_loss)) best = &row;
    }
    if (!best) throw ContractError("backprop curve has no validation losses");
    const double target = *best->valid_loss;
    out.target_loss += target / fgd.size();
    out.tb_s += best->wall_ms / 1e3 / fgd.size();
    const CurveRow* hit = nullptr;
    for (const auto& row : fgd[i].rows) {
      if (row.valid_loss && *row.valid_loss <= target) {
        hit = &row;
        break;
      }
    }
    if (hit) {
      tf_sum += hit->wall_ms / 1e3;
    } else {
      all_reached = false;
    }
  }
  if (all_reached) {
    out.tf_s = tf_sum / fgd.size();
    out.ratio = *out.tf_s / out.tb_s;
  }
  return out;
}

std::vector<ScalingRow> scaling_sweep(const ScalingConfig& cfg) {
  if (cfg.depths.empty()) throw ContractError("scaling sweep needs at least one depth");
  if (!std::ranges::is_sorted(cfg.depths) ||
      std::ranges::adjacent_find(cfg.depths) != cfg.depths.end() || cfg.depths.front() == 0) {
    throw ContractError("depths must be positive and strictly ascending");
  }
  Rng data_rng(stream_seed(cfg.seed, kBatchStream));
  const data::Dataset ds = data::synthetic(data_rng, 4 * cfg.batch_size, {cfg.image_side, 10, 0.25});
  const auto batches = fixed_batches(ds, cfg.batch_size, 4, cfg.seed);
  std::vector<ScalingRow> rows;
  for (std::size_t depth : cfg.depths) {
    const auto spec = nn::ModelSpec::mlp_depth(depth, cfg.width, cfg.image_side, 10);
    Rng init_rng(stream_seed(cfg.seed, kInitStream));
    const ParamSet params = nn::init(spec, init_rng);
    ScalingRow row;
    row.depth = depth;
    row.params = params.numel();
    const Factors f = measure_factors(spec, params, batches, cfg.seed, cfg.timing);
    row.base_s = f.base.median_s;
    row.rf = f.rf;
    row.rb = f.rb;
    row.fgd_peak = derivative_peak(spec, params, batches[0], Method::kFgd, cfg.seed);
    row.backprop_peak = derivative_peak(spec, params, batches[0], Method::kBackprop, cfg.seed);
    rows.push_back(row);
  }
  return rows;
}

BenchReport run_bench(const BenchConfig& cfg, const data::Splits& splits) {
  BenchReport r;
  r.config = {{"spec", to_json(cfg.spec)},
              {"batch_size", cfg.batch_size},
              {"seed", cfg.seed},
              {"timing", {{"warmup", cfg.timing.warmup}, {"iterations", cfg.timing.iterations}}},
              {"runs", cfg.runs}};
  if (cfg.train.iterations > 0) r.config["train"] = to_json(cfg.train);

  Rng init_rng(stream_seed(cfg.seed, kInitStream));
  const ParamSet params = nn::init(cfg.spec, init_rng);
  const auto batches = fixed_batches(splits.train, cfg.batch_size, 8, cfg.seed);

  const Factors f = measure_factors(cfg.spec, params, batches, cfg.seed, cfg.timing);
  r.base_runtime_s = f.base.median_s;
  r.base_cv = f.base.cv;
  r.harness_overhead_s = time_iterations([](std::size_t) {}, cfg.timing).median_s;
  r.rf = f.rf;
  r.rb = f.rb;
  r.rf_over_rb = r.rf / r.rb;
  r.fgd_peak = derivative_peak(cfg.spec, params, batches[0], Method::kFgd, cfg.seed);
  r.backprop_peak = derivative_peak(cfg.spec, params, batches[0], Method::kBackprop, cfg.seed);

  if (cfg.train.iterations > 0) {
    std::vector<Curve> fgd, bp;
    for (std::size_t run = 0; run < std::max<std::size_t>(cfg.runs, 1); ++run) {
      TrainConfig t = cfg.train;
      t.seed = cfg.train.seed + run;
      fgd.push_back(train(t, Method::kFgd, splits).curve);
      bp.push_back(train(t, Method::kBackprop, splits).curve);
    }
    r.time_to_loss = loss_time_ratio(fgd, bp);
    for (std::size_t i = 0; i < fgd.size(); ++i) {
      r.curves.push_back(std::move(fgd[i]));
      r.curves.push_back(std::move(bp[i]));
    }
  }
  return r;
}

nlohmann::json to_json(const nn::ModelSpec& s) {
  nlohmann::json j = {{"arch", nn::arch_name(s.arch)},
                      {"image_side", s.image_side},
                      {"classes", s.classes}};
  if (s.arch != nn::Arch::kLogReg) j["width"] = s.width;
  if (s.arch == nn::Arch::kCnn) j["channels"] = s.channels;
  if (s.arch == nn::Arch::kMlpDepth) j["depth"] = s.depth;
  return j;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"spec", to_json(c.spec)},       {"lr0", c.lr0},
          {"decay_k", c.decay_k},          {"iterations", c.iterations},
          {"batch_size", c.batch_size},    {"seed", c.seed},
          {"valid_every", c.valid_every},  {"valid_samples", c.valid_samples}};
}

nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"config", r.config},
                      {"base_runtime_s", r.base_runtime_s},
                      {"base_cv", r.base_cv},
                      {"harness_overhead_s", r.harness_overhead_s},
                      {"Rf", r.rf},
                      {"Rb", r.rb},
                      {"Rf_over_Rb", r.rf_over_rb},
                      {"alloc_peak_elements", {{"fgd", r.fgd_peak}, {"backprop", r.backprop_peak}}}};
  if (r.time_to_loss) {
    const TimeToLoss& t = *r.time_to_loss;
    j["target_valid_loss"] = t.target_loss;
    j["Tb_s"] = t.tb_s;
    j["Tf_s"] = t.tf_s ? nlohmann::json(*t.tf_s) : nlohmann::json("unreached");
    j["Tf_over_Tb"] = t.ratio ? nlohmann::json(*t.ratio) : nlohmann::json("unreached");
  } else {
    j["Tb_s"] = nullptr;
    j["Tf_s"] = nullptr;
    j["Tf_over_Tb"] = nullptr;
  }
  nlohmann::json curves = nlohmann::json::array();
  for (const Curve& c : r.curves) {
    nlohmann::json rows = nlohmann::json::array();
    for (const CurveRow& row : c.rows) {
      rows.push_back({row.iteration, row.wall_ms, row.train_loss,
                      row.valid_loss ? nlohmann::json(*row.valid_loss) : nlohmann::json()});
    }
    curves.push_back({{"method", method_name(c.method)}, {"seed", c.seed}, {"rows", rows}});
  }
  j["loss_curves"] = {{"columns", {"iteration", "wall_ms", "train_loss", "valid_loss"}},
                      {"runs", curves}};
  return j;
}

void write_curves_csv(std::ostream& os, const nlohmann::json& config, std::span<const Curve> curves) {
  os << "# schema: fgrad-curves " << kSchemaVersion << '\n';
  os << "# config: " << config.dump() << '\n';
  os << "method,seed,iteration,wall_ms,train_loss,valid_loss\n";
  for (const Curve& c : curves) {
    for (const CurveRow& row : c.rows) {
      os << method_name(c.method) << ',' << c.seed << ',' << row.iteration << ','
         << fmt("%.3f", row.wall_ms) << ',' << num(row.train_loss) << ','
         << (row.valid_loss ? num(*row.valid_loss) : "") << '\n';
    }
  }
}

void write_scaling_csv(std::ostream& os, const nlohmann::json& config,
                       std::span<const ScalingRow> rows) {
  os << "# schema: fgrad-scaling " << kSchemaVersion << '\n';
  os << "# config: " << config.dump() << '\n';
  os << "depth,params,base_ms,Rf,Rb,Rf_over_Rb,fgd_peak_elements,backprop_peak_elements\n";
  for (const ScalingRow& r : rows) {
    os << r.depth << ',' << r.params << ',' << fmt("%.4f", r.base_s * 1e3) << ','
       << fmt("%.4f", r.rf) << ',' << fmt("%.4f", r.rb) << ',' << fmt("%.4f", r.rf / r.rb) << ','
       << r.fgd_peak << ',' << r.backprop_peak << '\n';
  }
}

}  // namespace fgrad::bench
