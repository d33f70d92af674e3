#include "fgrad/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "fgrad/data.hpp"
#include "fgrad/errors.hpp"
#include "fgrad/optim/fgd.hpp"
#include "fgrad/optim/sgd.hpp"

namespace fgrad::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSyntheticValidFraction = 5;

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Flags shared by the model subcommands.
struct ModelFlags {
  std::string model = "logreg";
  std::optional<std::size_t> width;
  std::optional<std::size_t> channels;
  std::size_t side = 28;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::string data_dir = "data/mnist";
  bool synthetic = false;
  std::size_t synthetic_size = 10000;
  std::string out_dir = ".";
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--model", f.model, "logreg, mlp or cnn")->capture_default_str();
  cmd->add_option("--width", f.width, "hidden width (default 1024)");
  cmd->add_option("--channels", f.channels, "cnn convolution channels (default 64)");
  cmd->add_option("--side", f.side, "image side for synthetic data")->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed)->capture_default_str();
  cmd->add_option("--data-dir", f.data_dir, "directory holding the MNIST IDX files")
      ->capture_default_str();
  cmd->add_flag("--synthetic", f.synthetic, "use generated data instead of MNIST");
  cmd->add_option("--synthetic-size", f.synthetic_size, "training examples when --synthetic")
      ->capture_default_str();
  cmd->add_option("--out-dir", f.out_dir)->capture_default_str();
}

nn::ModelSpec model_spec(const ModelFlags& f) {
  const nn::Arch arch = nn::parse_arch(f.model);
  const std::size_t side = f.synthetic ? f.side : 28;
  nn::ModelSpec spec;
  switch (arch) {
    case nn::Arch::kLogReg: spec = nn::ModelSpec::logreg(side); break;
    case nn::Arch::kMlp: spec = nn::ModelSpec::mlp(f.width.value_or(1024), side); break;
    case nn::Arch::kCnn:
      spec = nn::ModelSpec::cnn(f.channels.value_or(64), f.width.value_or(1024), side);
      break;
    case nn::Arch::kMlpDepth:
      throw ContractError("mlp_depth is only available through the scaling subcommand");
  }
  spec.validate();
  if (arch == nn::Arch::kCnn && spec.cnn_final_side() == 0) {
    throw ContractError("cnn needs an image side that survives two conv-conv-pool stages");
  }
  return spec;
}

data::Splits load_splits(const ModelFlags& f, const nn::ModelSpec& spec) {
  if (f.synthetic) {
    return data::synthetic_splits(f.seed, f.synthetic_size,
                                  std::max<std::size_t>(f.synthetic_size / kSyntheticValidFraction, 10),
                                  {spec.image_side, spec.classes, 0.25});
  }
  return data::load_mnist(f.data_dir);
}

nlohmann::json data_json(const ModelFlags& f) {
  if (f.synthetic) return {{"source", "synthetic"}, {"train_size", f.synthetic_size}};
  return {{"source", "mnist"}, {"dir", f.data_dir}};
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

nlohmann::json run_config(const std::string& subcommand) {
  return {{"schema_version", bench::kSchemaVersion}, {"subcommand", subcommand}};
}

// testfunc ------------------------------------------------------------------

struct TestfuncFlags {
  std::string function = "beale";
  std::string method = "fgd";
  std::optional<double> lr;
  double decay_k = 0.0;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

int cmd_testfunc(const TestfuncFlags& f, std::ostream& out) {
  const testfuncs::TestFunction& fn = testfuncs::by_name(f.function);
  const bench::Method method = bench::parse_method(f.method);
  const double lr0 = f.lr.value_or(fn.default_lr);
  nlohmann::json config = run_config("testfunc");
  config.update({{"function", fn.name},
                 {"method", f.method},
                 {"lr0", lr0},
                 {"decay_k", f.decay_k},
                 {"iterations", f.iterations},
                 {"seed", f.seed},
                 {"start", fn.start},
                 {"out_dir", f.out_dir}});
  const auto rows = testfunc_trajectory(fn, method, lr0, f.decay_k, f.iterations, f.seed);
  const fs::path path = prepare_out(f.out_dir) / ("testfunc_" + fn.name + "_" + f.method + ".csv");
  std::ofstream os = open_out(path);
  write_trajectory_csv(os, config, rows);
  out << path.string() << '\n';
  return kExitOk;
}

// train ---------------------------------------------------------------------

struct TrainFlags {
  ModelFlags model;
  std::string method = "both";
  std::optional<double> lr;
  double decay_k = optim::kDefaultDecay;
  std::size_t iterations = 1000;
  std::size_t valid_every = 100;
  std::size_t valid_samples = 1000;
};

bench::TrainConfig train_config(const ModelFlags& m, const nn::ModelSpec& spec,
                                std::optional<double> lr, double decay_k, std::size_t iterations,
                                std::size_t valid_every, std::size_t valid_samples) {
  bench::TrainConfig cfg;
  cfg.spec = spec;
  cfg.lr0 = lr.value_or(default_lr(spec.arch));
  cfg.decay_k = decay_k;
  cfg.iterations = iterations;
  cfg.batch_size = m.batch_size;
  cfg.seed = m.seed;
  cfg.valid_every = valid_every;
  cfg.valid_samples = valid_samples;
  return cfg;
}

int cmd_train(const TrainFlags& f, std::ostream& out) {
  const nn::ModelSpec spec = model_spec(f.model);
  std::vector<bench::Method> methods;
  if (f.method == "both") {
    methods = {bench::Method::kFgd, bench::Method::kBackprop};
  } else {
    methods = {bench::parse_method(f.method)};
  }
  const bench::TrainConfig cfg = train_config(f.model, spec, f.lr, f.decay_k, f.iterations,
                                              f.valid_every, f.valid_samples);
  nlohmann::json config = run_config("train");
  config.update({{"method", f.method}, {"data", data_json(f.model)}, {"out_dir", f.model.out_dir}});
  config["train"] = bench::to_json(cfg);

  const data::Splits splits = load_splits(f.model, spec);
  const fs::path dir = prepare_out(f.model.out_dir);
  const std::string stem = "train_" + f.model.model;
  std::vector<bench::Curve> curves;
  for (bench::Method m : methods) {
    bench::TrainResult r = bench::train(cfg, m, splits);
    nlohmann::json meta = config;
    meta["method"] = bench::method_name(m);
    const fs::path ckpt = dir / (stem + "_" + bench::method_name(m) + ".ckpt");
    nn::save_checkpoint(ckpt, r.params, meta.dump());
    out << ckpt.string() << '\n';
    curves.push_back(std::move(r.curve));
  }
  const fs::path csv = dir / (stem + ".csv");
  std::ofstream os = open_out(csv);
  bench::write_curves_csv(os, config, curves);
  out << csv.string() << '\n';
  return kExitOk;
}

// bench ---------------------------------------------------------------------

struct BenchFlags {
  ModelFlags model;
  std::optional<double> lr;
  double decay_k = optim::kDefaultDecay;
  std::size_t iterations = 1000;
  std::size_t runs = 1;
  std::size_t warmup = 5;
  std::size_t timing_iterations = 30;
  std::size_t valid_every = 100;
  std::size_t valid_samples = 1000;
};

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  const nn::ModelSpec spec = model_spec(f.model);
  bench::BenchConfig cfg;
  cfg.spec = spec;
  cfg.batch_size = f.model.batch_size;
  cfg.seed = f.model.seed;
  cfg.timing = {f.warmup, f.timing_iterations};
  cfg.train = train_config(f.model, spec, f.lr, f.decay_k, f.iterations, f.valid_every,
                           f.valid_samples);
  cfg.runs = f.runs;
  const data::Splits splits = load_splits(f.model, spec);
  bench::BenchReport report = bench::run_bench(cfg, splits);
  report.config["subcommand"] = "bench";
  report.config["data"] = data_json(f.model);
  report.config["out_dir"] = f.model.out_dir;
  const fs::path path = prepare_out(f.model.out_dir) / ("bench_" + f.model.model + ".json");
  std::ofstream os = open_out(path);
  os << bench::to_json(report).dump(2) << '\n';
  out << path.string() << '\n';
  return kExitOk;
}

// scaling -------------------------------------------------------------------

struct ScalingFlags {
  std::vector<std::size_t> depths{1, 2, 5, 10, 20};
  std::size_t width = 256;
  std::size_t side = 28;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t warmup = 5;
  std::size_t timing_iterations = 30;
  std::string out_dir = ".";
};

int cmd_scaling(const ScalingFlags& f, std::ostream& out) {
  bench::ScalingConfig cfg;
  cfg.depths = f.depths;
  cfg.width = f.width;
  cfg.image_side = f.side;
  cfg.batch_size = f.batch_size;
  cfg.seed = f.seed;
  cfg.timing = {f.warmup, f.timing_iterations};
  nlohmann::json config = run_config("scaling");
  config.update({{"depths", f.depths},
                 {"width", f.width},
                 {"bias", false},
                 {"image_side", f.side},
                 {"batch_size", f.batch_size},
                 {"seed", f.seed},
                 {"timing", {{"warmup", f.warmup}, {"iterations", f.timing_iterations}}},
                 {"out_dir", f.out_dir}});
  const auto rows = bench::scaling_sweep(cfg);
  const fs::path path = prepare_out(f.out_dir) / "scaling.csv";
  std::ofstream os = open_out(path);
  bench::write_scaling_csv(os, config, rows);
  out << path.string() << '\n';
  return kExitOk;
}

}  // namespace

double default_lr(nn::Arch arch) {
  switch (arch) {
    case nn::Arch::kLogReg: return 1e-4;
    case nn::Arch::kMlp: return 2e-4;
    case nn::Arch::kCnn: return 2e-4;
    case nn::Arch::kMlpDepth: return 2e-4;
  }
  return 1e-4;
}

std::vector<TrajectoryRow> testfunc_trajectory(const testfuncs::TestFunction& fn,
                                               bench::Method method, double lr0, double decay_k,
                                               std::size_t iterations, std::uint64_t seed) {
  ParamSet params = testfuncs::make_params(fn.start);
  optim::OptState state(lr0, decay_k, seed);
  const auto f = testfuncs::program(fn.kind);
  std::vector<TrajectoryRow> rows;
  rows.reserve(iterations + 1);
  rows.push_back({0, fn.start[0], fn.start[1], fn.evaluate(fn.start)});
  for (std::size_t it = 1; it <= iterations; ++it) {
    if (method == bench::Method::kFgd) {
      optim::fgd_step(f, params, state);
    } else {
      optim::sgd_step(f, params, state);
    }
    const testfuncs::Point p = testfuncs::point_of(params);
    const double value = fn.evaluate(p);
    if (!std::isfinite(value)) throw bench::NumericError(bench::method_name(method), it, value);
    rows.push_back({it, p[0], p[1], value});
  }
  return rows;
}

void write_trajectory_csv(std::ostream& os, const nlohmann::json& config,
                          std::span<const TrajectoryRow> rows) {
  os << "# schema: fgrad-trajectory " << bench::kSchemaVersion << '\n';
  os << "# config: " << config.dump() << '\n';
  os << "iteration,x,y,f\n";
  for (const TrajectoryRow& r : rows) {
    os << r.iteration << ',' << num(r.x) << ',' << num(r.y) << ',' << num(r.f) << '\n';
  }
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forward gradient descent and backpropagation experiments", "fgrad"};
  app.require_subcommand(1);

  TestfuncFlags tf;
  CLI::App* testfunc = app.add_subcommand("testfunc", "optimization trajectory on a test function");
  testfunc->add_option("--function", tf.function, "beale or rosenbrock")->capture_default_str();
  testfunc->add_option("--method", tf.method, "fgd or backprop")->capture_default_str();
  testfunc->add_option("--lr", tf.lr, "constant learning rate (default per function)");
  testfunc->add_option("--decay-k", tf.decay_k)->capture_default_str();
  testfunc->add_option("--iters", tf.iterations)->capture_default_str();
  testfunc->add_option("--seed", tf.seed)->capture_default_str();
  testfunc->add_option("--out-dir", tf.out_dir)->capture_default_str();

  TrainFlags tr;
  CLI::App* train = app.add_subcommand("train", "train a model and write loss curves");
  add_model_flags(train, tr.model);
  train->add_option("--method", tr.method, "fgd, backprop or both")->capture_default_str();
  train->add_option("--lr", tr.lr, "initial learning rate (default per model)");
  train->add_option("--decay-k", tr.decay_k)->capture_default_str();
  train->add_option("--iters", tr.iterations)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--valid-every", tr.valid_every)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--valid-samples", tr.valid_samples, "0 means the whole validation split")
      ->capture_default_str();

  BenchFlags bf;
  CLI::App* bench_cmd = app.add_subcommand("bench", "runtime factors, memory and time-to-loss");
  add_model_flags(bench_cmd, bf.model);
  bench_cmd->add_option("--lr", bf.lr, "initial learning rate (default per model)");
  bench_cmd->add_option("--decay-k", bf.decay_k)->capture_default_str();
  bench_cmd->add_option("--iters", bf.iterations, "training iterations per run; 0 skips Tf/Tb")
      ->capture_default_str();
  bench_cmd->add_option("--runs", bf.runs)->capture_default_str()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bf.warmup)->capture_default_str();
  bench_cmd->add_option("--timing-iters", bf.timing_iterations)
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--valid-every", bf.valid_every)->capture_default_str()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--valid-samples", bf.valid_samples)->capture_default_str();

  ScalingFlags sf;
  CLI::App* scaling = app.add_subcommand("scaling", "runtime and memory against network depth");
  scaling->add_option("--depths", sf.depths, "comma-separated, strictly ascending")
      ->delimiter(',')
      ->capture_default_str();
  scaling->add_option("--width", sf.width)->capture_default_str()->check(CLI::PositiveNumber);
  scaling->add_option("--side", sf.side)->capture_default_str();
  scaling->add_option("--batch-size", sf.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  scaling->add_option("--seed", sf.seed)->capture_default_str();
  scaling->add_option("--warmup", sf.warmup)->capture_default_str();
  scaling->add_option("--timing-iters", sf.timing_iterations)
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  scaling->add_option("--out-dir", sf.out_dir)->capture_default_str();

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*testfunc) return cmd_testfunc(tf, out);
    if (*train) return cmd_train(tr, out);
    if (*bench_cmd) return cmd_bench(bf, out);
    return cmd_scaling(sf, out);
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const data::DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const LengthError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IndexError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const bench::NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace fgrad::cli
