#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fgrad/errors.hpp"
#include "fgrad/params.hpp"
#include "fgrad/program.hpp"
#include "fgrad/tensor.hpp"

// The benchmark architectures: multinomial logistic regression, a ReLU MLP,
// a small CNN, and a bias-free MLP of configurable depth.
namespace fgrad::nn {

enum class Arch { kLogReg, kMlp, kCnn, kMlpDepth };

struct ModelSpec {
  Arch arch = Arch::kLogReg;
  // Square single-channel images of side x side pixels.
  std::size_t image_side = 28;
  std::size_t classes = 10;
  // Hidden width (MLP layers, CNN linear layer, depth-sweep layers).
  std::size_t width = 1024;
  // CNN convolution channels.
  std::size_t channels = 64;
  // Hidden layer count for kMlpDepth.
  std::size_t depth = 1;

  static ModelSpec logreg(std::size_t side = 28, std::size_t classes = 10);
  static ModelSpec mlp(std::size_t width = 1024, std::size_t side = 28, std::size_t classes = 10);
  static ModelSpec cnn(std::size_t channels = 64, std::size_t width = 1024, std::size_t side = 28,
                       std::size_t classes = 10);
  static ModelSpec mlp_depth(std::size_t depth, std::size_t width = 1024, std::size_t side = 28,
                             std::size_t classes = 10);

  std::size_t input_features() const { return image_side * image_side; }
  // Spatial side after the convolution/pooling stack (CNN only).
  std::size_t cnn_final_side() const;
  std::size_t cnn_flat_features() const { return channels * cnn_final_side() * cnn_final_side(); }
  std::string tag() const;
  void validate() const;
};

// "logreg", "mlp", "cnn", "mlp_depth"
Arch parse_arch(const std::string& tag);
std::string arch_name(Arch arch);

std::size_t param_count(const ModelSpec& spec);

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ParamSet init(const ModelSpec& spec, Rng& rng);

namespace detail {

template <class V>
V linear(const V& x, std::span<const V> p, std::size_t& slot, bool bias) {
  V y = matmul(x, p[slot++]);
  if (bias) y = add_bias(y, p[slot++]);
  return y;
}

void check_batch(const ModelSpec& spec, const Tensor& images, std::span<const int> labels);
Tensor shape_batch(const ModelSpec& spec, const Tensor& images);

}  // namespace detail

// Mean cross-entropy of the model on one batch. Written once against the
// primitive set, so it runs under plain, dual and taped execution.
template <class V>
V forward(const ModelSpec& spec, std::span<const V> p, const Tensor& images,
          std::span<const int> labels) {
  detail::check_batch(spec, images, labels);
  V x = constant_like(p[0], detail::shape_batch(spec, images));
  std::size_t slot = 0;
  switch (spec.arch) {
    case Arch::kLogReg:
      x = detail::linear(x, p, slot, true);
      break;
    case Arch::kMlp:
      x = relu(detail::linear(x, p, slot, true));
      x = relu(detail::linear(x, p, slot, true));
      x = detail::linear(x, p, slot, true);
      break;
    case Arch::kCnn:
      x = relu(conv2d(x, p[slot++]));
      x = relu(conv2d(x, p[slot++]));
      x = maxpool2d(x);
      x = relu(conv2d(x, p[slot++]));
      x = relu(conv2d(x, p[slot++]));
      x = maxpool2d(x);
      x = flatten(x);
      x = relu(detail::linear(x, p, slot, true));
      x = detail::linear(x, p, slot, true);
      break;
    case Arch::kMlpDepth:
      for (std::size_t layer = 0; layer < spec.depth; ++layer) {
        x = relu(detail::linear(x, p, slot, false));
      }
      x = detail::linear(x, p, slot, false);
      break;
  }
  return logsoftmax_nll(x, labels);
}

// Binds a batch to the model, giving a program usable with evaluate(),
// fwdad and revad. The batch must outlive the returned callable.
inline auto loss_program(const ModelSpec& spec, const Tensor& images,
                         std::span<const int> labels) {
  return [spec, &images, labels](auto params) {
    using V = typename decltype(params)::value_type;
    return forward<V>(spec, params, images, labels);
  };
}

// Checkpoint file: see docs/formats.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const std::string& metadata_json);

struct Checkpoint {
  ParamSet params;
  std::string metadata_json;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fgrad::nn
