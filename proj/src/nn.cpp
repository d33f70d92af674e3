#include "fgrad/nn.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

#include "byte_io.hpp"

namespace fgrad::nn {

ModelSpec ModelSpec::logreg(std::size_t side, std::size_t classes) {
  ModelSpec s;
  s.arch = Arch::kLogReg;
  s.image_side = side;
  s.classes = classes;
  return s;
}

ModelSpec ModelSpec::mlp(std::size_t width, std::size_t side, std::size_t classes) {
  ModelSpec s;
  s.arch = Arch::kMlp;
  s.width = width;
  s.image_side = side;
  s.classes = classes;
  return s;
}

ModelSpec ModelSpec::cnn(std::size_t channels, std::size_t width, std::size_t side,
                         std::size_t classes) {
  ModelSpec s;
  s.arch = Arch::kCnn;
  s.channels = channels;
  s.width = width;
  s.image_side = side;
  s.classes = classes;
  return s;
}

ModelSpec ModelSpec::mlp_depth(std::size_t depth, std::size_t width, std::size_t side,
                               std::size_t classes) {
  ModelSpec s;
  s.arch = Arch::kMlpDepth;
  s.depth = depth;
  s.width = width;
  s.image_side = side;
  s.classes = classes;
  return s;
}

std::size_t ModelSpec::cnn_final_side() const {
  // conv, conv, pool, conv, conv, pool; valid 3x3 convolutions.
  if (image_side < 6 || (image_side - 4) % 2 != 0) return 0;
  const std::size_t mid = (image_side - 4) / 2;
  if (mid < 6 || (mid - 4) % 2 != 0) return 0;
  return (mid - 4) / 2;
}

void ModelSpec::validate() const {
  if (image_side == 0 || classes < 2) throw ContractError("model needs images and >= 2 classes");
  switch (arch) {
    case Arch::kLogReg: break;
    case Arch::kMlp:
      if (width == 0) throw ContractError("mlp width must be positive");
      break;
    case Arch::kCnn:
      if (channels == 0 || width == 0) throw ContractError("cnn channels and width must be positive");
      if (cnn_final_side() == 0) {
        throw DimensionError("cnn: image side " + std::to_string(image_side) +
                             " does not survive conv,conv,pool,conv,conv,pool with even extents");
      }
      break;
    case Arch::kMlpDepth:
      if (depth == 0 || width == 0) throw ContractError("mlp_depth needs depth and width >= 1");
      break;
  }
}

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::kLogReg: return "logreg";
    case Arch::kMlp: return "mlp";
    case Arch::kCnn: return "cnn";
    case Arch::kMlpDepth: return "mlp_depth";
  }
  return "unknown";
}

Arch parse_arch(const std::string& tag) {
  if (tag == "logreg") return Arch::kLogReg;
  if (tag == "mlp") return Arch::kMlp;
  if (tag == "cnn") return Arch::kCnn;
  if (tag == "mlp_depth") return Arch::kMlpDepth;
  throw ContractError("unknown model '" + tag + "' (expected logreg, mlp, cnn or mlp_depth)");
}

std::string ModelSpec::tag() const {
  std::string t = arch_name(arch) + "(side=" + std::to_string(image_side) +
                  ",classes=" + std::to_string(classes);
  if (arch != Arch::kLogReg) t += ",width=" + std::to_string(width);
  if (arch == Arch::kCnn) t += ",channels=" + std::to_string(channels);
  if (arch == Arch::kMlpDepth) t += ",depth=" + std::to_string(depth);
  return t + ")";
}

namespace {

struct ParamDecl {
  std::string name;
  Shape shape;
  std::size_t fan_in;  // 0 marks a bias
};

std::vector<ParamDecl> layout(const ModelSpec& spec) {
  spec.validate();
  std::vector<ParamDecl> out;
  auto linear = [&](const std::string& name, std::size_t in, std::size_t outf, bool bias) {
    out.push_back({name + ".weight", {in, outf}, in});
    if (bias) out.push_back({name + ".bias", {outf}, 0});
  };
  const std::size_t in = spec.input_features();
  switch (spec.arch) {
    case Arch::kLogReg:
      linear("fc", in, spec.classes, true);
      break;
    case Arch::kMlp:
      linear("fc1", in, spec.width, true);
      linear("fc2", spec.width, spec.width, true);
      linear("fc3", spec.width, spec.classes, true);
      break;
    case Arch::kCnn: {
      std::size_t c_in = 1;
      for (int i = 1; i <= 4; ++i) {
        out.push_back({"conv" + std::to_string(i) + ".weight", {spec.channels, c_in, 3, 3}, c_in * 9});
        c_in = spec.channels;
      }
      linear("fc1", spec.cnn_flat_features(), spec.width, true);
      linear("fc2", spec.width, spec.classes, true);
      break;
    }
    case Arch::kMlpDepth: {
      std::size_t f = in;
      for (std::size_t i = 1; i <= spec.depth; ++i) {
        linear("fc" + std::to_string(i), f, spec.width, false);
        f = spec.width;
      }
      linear("head", f, spec.classes, false);
      break;
    }
  }
  return out;
}

}  // namespace

std::size_t param_count(const ModelSpec& spec) {
  std::size_t n = 0;
  for (const auto& d : layout(spec)) n += shape_numel(d.shape);
  return n;
}

ParamSet init(const ModelSpec& spec, Rng& rng) {
  ParamSet params;
  for (auto& d : layout(spec)) {
    if (d.fan_in == 0) {
      params.add(d.name, Tensor::zeros(d.shape));
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(d.fan_in));
      params.add(d.name, rand_uniform(rng, d.shape, -bound, bound));
    }
  }
  return params;
}

namespace detail {

void check_batch(const ModelSpec& spec, const Tensor& images, std::span<const int> labels) {
  const std::size_t feats = spec.input_features();
  const bool flat = images.rank() == 2 && images.dim(1) == feats;
  const bool nchw = images.rank() == 4 && images.dim(1) == 1 && images.dim(2) == spec.image_side &&
                    images.dim(3) == spec.image_side;
  if (!flat && !nchw) {
    throw DimensionError("batch " + shape_str(images.shape()) + " does not fit model " +
                         spec.tag());
  }
  if (labels.size() != images.dim(0)) {
    throw DimensionError("batch has " + std::to_string(images.dim(0)) + " images but " +
                         std::to_string(labels.size()) + " labels");
  }
}

Tensor shape_batch(const ModelSpec& spec, const Tensor& images) {
  const std::size_t b = images.dim(0);
  if (spec.arch == Arch::kCnn) return images.reshape({b, 1, spec.image_side, spec.image_side});
  return images.reshape({b, spec.input_features()});
}

}  // namespace detail

namespace {

constexpr char kMagic[8] = {'F', 'G', 'R', 'A', 'D', 'C', 'K', 'P'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params,
                     const std::string& metadata_json) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  byte_io::put_le<std::uint32_t>(out, kCheckpointVersion);
  byte_io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(metadata_json.size()));
  out.insert(out.end(), metadata_json.begin(), metadata_json.end());
  byte_io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    byte_io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const Shape& shape = params[i].shape();
    byte_io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) byte_io::put_le<std::uint64_t>(out, e);
    for (double v : params[i].data()) byte_io::put_le_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  byte_io::Reader r(bytes);
  const auto magic = r.take(sizeof(kMagic), "checkpoint magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw FormatError("not a checkpoint file", 0);
  }
  const auto version = r.le<std::uint32_t>("checkpoint version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 8);
  }
  Checkpoint ck;
  const auto meta_len = r.le<std::uint32_t>("metadata length");
  const auto meta = r.take(meta_len, "metadata");
  ck.metadata_json.assign(meta.begin(), meta.end());
  const auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = r.le<std::uint32_t>("name length");
    const auto name = r.take(name_len, "tensor name");
    const auto rank = r.le<std::uint32_t>("tensor rank");
    if (rank == 0) throw FormatError("tensor of rank 0", r.offset());
    Shape shape(rank);
    for (auto& e : shape) {
      e = r.le<std::uint64_t>("tensor extent");
      if (e == 0) throw FormatError("zero tensor extent", r.offset());
    }
    const std::size_t n = shape_numel(shape);
    r.need(n * 8, "tensor data");
    std::vector<double> values(n);
    for (auto& v : values) v = r.le_f64("tensor data");
    ck.params.add(std::string(name.begin(), name.end()), Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last tensor", r.offset());
  return ck;
}

}  // namespace fgrad::nn
