#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fgrad/errors.hpp"
#include "fgrad/fwdad.hpp"
#include "fgrad/nn.hpp"
#include "fgrad/revad.hpp"
#include "support/oracles.hpp"

using namespace fgrad;
using nn::ModelSpec;

namespace {

struct Batch {
  Tensor images;
  std::vector<int> labels;
};

Batch random_batch(Rng& rng, const ModelSpec& spec, std::size_t b) {
  Batch out{rand_uniform(rng, {b, spec.input_features()}, 0.0, 1.0), std::vector<int>(b)};
  for (auto& l : out.labels) l = static_cast<int>(rng.below(spec.classes));
  return out;
}

std::vector<ModelSpec> desk_specs() {
  return {ModelSpec::logreg(8, 10), ModelSpec::mlp(16, 8, 10), ModelSpec::cnn(4, 16, 16, 10),
          ModelSpec::mlp_depth(3, 16, 8, 10)};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fgrad_test_" + name);
}

}  // namespace

TEST(ParamCount, PublishedArchitectures) {
  EXPECT_EQ(nn::param_count(ModelSpec::logreg()), 7850u);
  EXPECT_EQ(nn::param_count(ModelSpec::mlp()), 1'863'690u);
  EXPECT_EQ(nn::param_count(ModelSpec::cnn()),
            64u * 9 + 3 * 64u * 64 * 9 + 1024u * 1024 + 1024 + 1024u * 10 + 10);
  EXPECT_EQ(nn::param_count(ModelSpec::mlp_depth(3, 1024)), 784u * 1024 + 2 * 1024u * 1024 + 1024u * 10);
}

TEST(ParamCount, MatchesInitializedSets) {
  Rng rng(1);
  for (const auto& spec : desk_specs()) {
    EXPECT_EQ(nn::init(spec, rng).numel(), nn::param_count(spec)) << spec.tag();
  }
}

TEST(Init, WeightsWithinFanInBoundAndBiasesZero) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    for (const auto& spec : desk_specs()) {
      const ParamSet p = nn::init(spec, rng);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const Tensor& t = p[i];
        if (t.rank() == 1) {
          for (double v : t.data()) ASSERT_EQ(v, 0.0) << p.name(i);
          continue;
        }
        // [in x out] for linear layers, [out x in x 3 x 3] for convolutions
        const std::size_t fan_in = t.rank() == 2 ? t.dim(0) : t.dim(1) * 9;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double v : t.data()) ASSERT_LE(std::abs(v), bound) << p.name(i);
      }
    }
  }
}

TEST(Init, DeterministicGivenSeed) {
  Rng a(3), b(3);
  EXPECT_TRUE(bitwise_equal(nn::init(ModelSpec::mlp(16, 8), a).flatten(),
                            nn::init(ModelSpec::mlp(16, 8), b).flatten()));
}

TEST(Cnn, SpatialBookkeeping) {
  const ModelSpec published = ModelSpec::cnn();
  // 28 -> 26 -> 24 -> 12 -> 10 -> 8 -> 4
  EXPECT_EQ(published.cnn_final_side(), 4u);
  EXPECT_EQ(published.cnn_flat_features(), 1024u);
  EXPECT_EQ(ModelSpec::cnn(4, 16, 16).cnn_final_side(), 1u);
  EXPECT_THROW(ModelSpec::cnn(4, 16, 14).validate(), DimensionError);
}

TEST(Forward, UntrainedLogRegNearLogTen) {
  Rng rng(5);
  const ModelSpec spec = ModelSpec::logreg();
  const ParamSet p = nn::init(spec, rng);
  const Batch b = random_batch(rng, spec, 64);
  const double loss = evaluate(nn::loss_program(spec, b.images, b.labels), p);
  EXPECT_NEAR(loss, std::log(10.0), 0.5);
}

TEST(Forward, LossNonnegative) {
  Rng rng(6);
  for (const auto& spec : desk_specs()) {
    const ParamSet p = nn::init(spec, rng);
    for (int c = 0; c < 10; ++c) {
      const Batch b = random_batch(rng, spec, 4);
      EXPECT_GE(evaluate(nn::loss_program(spec, b.images, b.labels), p), 0.0);
    }
  }
}

TEST(Forward, AcceptsImageShapedBatch) {
  Rng rng(7);
  const ModelSpec spec = ModelSpec::cnn(2, 8, 16, 10);
  const ParamSet p = nn::init(spec, rng);
  const Batch b = random_batch(rng, spec, 3);
  const Tensor nchw = b.images.reshape({3, 1, 16, 16});
  EXPECT_EQ(evaluate(nn::loss_program(spec, b.images, b.labels), p),
            evaluate(nn::loss_program(spec, nchw, b.labels), p));
}

TEST(Forward, ShapeMismatchRejected) {
  Rng rng(8);
  const ModelSpec spec = ModelSpec::logreg(8);
  const ParamSet p = nn::init(spec, rng);
  Tensor wrong({2, 65});
  std::vector<int> labels{0, 1};
  EXPECT_THROW(evaluate(nn::loss_program(spec, wrong, labels), p), DimensionError);
  Tensor right({2, 64});
  std::vector<int> short_labels{0};
  EXPECT_THROW(evaluate(nn::loss_program(spec, right, short_labels), p), DimensionError);
}

TEST(Forward, IdenticalAcrossExecutionModes) {
  Rng rng(9);
  for (const auto& spec : desk_specs()) {
    const ParamSet p = nn::init(spec, rng);
    const Batch b = random_batch(rng, spec, 8);
    auto f = nn::loss_program(spec, b.images, b.labels);
    const double plain = f(p.tensors()).item();

    std::vector<fwdad::DualTensor> zero;
    for (const Tensor& t : p.tensors()) zero.emplace_back(t, Tensor::zeros(t.shape()));
    const double dual = f(std::span<const fwdad::DualTensor>(zero)).primal().item();

    const double taped = revad::grad(f, p).loss;
    const double directional = fwdad::directional_derivative(f, p, {Tensor({p.numel()})}).loss;
    EXPECT_EQ(std::bit_cast<std::uint64_t>(plain), std::bit_cast<std::uint64_t>(dual)) << spec.tag();
    EXPECT_EQ(std::bit_cast<std::uint64_t>(plain), std::bit_cast<std::uint64_t>(taped)) << spec.tag();
    EXPECT_EQ(std::bit_cast<std::uint64_t>(plain), std::bit_cast<std::uint64_t>(directional))
        << spec.tag();
  }
}

TEST(Gradient, MatchesFiniteDifferencesPerArchitecture) {
  Rng rng(10);
  for (const auto& spec : desk_specs()) {
    ParamSet p = nn::init(spec, rng);
    // move biases off zero so their coordinates carry signal
    Tensor flat = p.flatten();
    for (auto& x : flat.mutable_data()) x += 0.05 * rng.normal();
    p.unflatten(flat);
    const Batch b = random_batch(rng, spec, 6);
    auto f = nn::loss_program(spec, b.images, b.labels);
    const Tensor g = revad::grad(f, p).gradient;
    Tensor got({20}), fd({20});
    for (std::size_t c = 0; c < 20; ++c) {
      const std::size_t i = rng.below(p.numel());
      got.mutable_data()[c] = g[i];
      fd.mutable_data()[c] = oracle::partial_fd(f, p, i);
    }
    EXPECT_LT(oracle::rel_error(got, fd), 1e-5) << spec.tag();
  }
}

TEST(ParseArch, KnownAndUnknownTags) {
  EXPECT_EQ(nn::parse_arch("cnn"), nn::Arch::kCnn);
  EXPECT_EQ(nn::arch_name(nn::parse_arch("mlp_depth")), "mlp_depth");
  EXPECT_THROW(nn::parse_arch("resnet"), ContractError);
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(11);
  const ParamSet p = nn::init(ModelSpec::cnn(2, 8, 16), rng);
  const auto path = temp_file("roundtrip.ckpt");
  nn::save_checkpoint(path, p, R"({"model":"cnn"})");
  const nn::Checkpoint back = nn::load_checkpoint(path);
  EXPECT_EQ(back.metadata_json, R"({"model":"cnn"})");
  ASSERT_EQ(back.params.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(back.params.name(i), p.name(i));
    EXPECT_TRUE(bitwise_equal(back.params[i], p[i]));
  }
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFilesRejected) {
  Rng rng(12);
  const ParamSet p = nn::init(ModelSpec::logreg(8), rng);
  const auto path = temp_file("corrupt.ckpt");
  nn::save_checkpoint(path, p, "{}");
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << s;
  };
  write(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(nn::load_checkpoint(path), LengthError);
  write(bytes + "x");
  EXPECT_THROW(nn::load_checkpoint(path), FormatError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  EXPECT_THROW(nn::load_checkpoint(path), FormatError);
  std::string bad_version = bytes;
  bad_version[8] = 9;
  write(bad_version);
  EXPECT_THROW(nn::load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
