#include "fgrad/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "byte_io.hpp"
#include "fgrad/errors.hpp"

namespace fgrad::data {

IdxFile parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw FormatError("empty IDX input", 0);
  byte_io::Reader r(bytes);
  if (bytes.size() < 4) throw FormatError("IDX input shorter than its magic number", 0);
  IdxFile f;
  f.magic = r.be32("IDX magic");
  // 0x0000 then type code 0x08 (unsigned byte) then dimension count.
  if ((f.magic & 0xFFFFFF00u) != 0x00000800u || (f.magic & 0xFFu) == 0) {
    char hex[11];
    std::snprintf(hex, sizeof hex, "0x%08x", f.magic);
    throw FormatError(std::string("bad IDX magic ") + hex, 0);
  }
  const std::size_t ndims = f.magic & 0xFFu;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::size_t at = r.offset();
    const std::uint32_t e = r.be32("IDX dimension");
    if (e == 0) throw FormatError("zero IDX dimension", at);
    f.dims.push_back(e);
    count *= e;
  }
  if (r.remaining() < count) {
    throw LengthError("truncated IDX payload: header promises " + std::to_string(count) +
                      " bytes, " + std::to_string(r.remaining()) + " present");
  }
  if (r.remaining() > count) {
    throw FormatError("trailing bytes after IDX payload", r.offset() + count);
  }
  auto payload = r.take(count, "IDX payload");
  f.payload.assign(payload.begin(), payload.end());
  return f;
}

std::vector<std::uint8_t> serialize_idx(const IdxFile& file) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * file.dims.size() + file.payload.size());
  byte_io::put_be32(out, file.magic);
  for (auto d : file.dims) byte_io::put_be32(out, d);
  out.insert(out.end(), file.payload.begin(), file.payload.end());
  return out;
}

Tensor idx_images(const IdxFile& file) {
  if (file.magic != kIdxImageMagic || file.dims.size() != 3) {
    throw FormatError("not a 3-D IDX image file", 0);
  }
  const std::size_t n = file.dims[0], pixels = std::size_t{file.dims[1]} * file.dims[2];
  Tensor t({n, pixels});
  auto out = t.mutable_data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = file.payload[i] / 255.0;
  return t;
}

std::vector<int> idx_labels(const IdxFile& file, int classes) {
  if (file.magic != kIdxLabelMagic || file.dims.size() != 1) {
    throw FormatError("not a 1-D IDX label file", 0);
  }
  std::vector<int> labels(file.payload.begin(), file.payload.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw IndexError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
  return labels;
}

IdxFile to_idx_images(const Dataset& ds) {
  IdxFile f;
  f.magic = kIdxImageMagic;
  f.dims = {static_cast<std::uint32_t>(ds.size()), static_cast<std::uint32_t>(ds.side),
            static_cast<std::uint32_t>(ds.side)};
  f.payload.reserve(ds.images.numel());
  for (double v : ds.images.data()) {
    f.payload.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return f;
}

IdxFile to_idx_labels(const Dataset& ds) {
  IdxFile f;
  f.magic = kIdxLabelMagic;
  f.dims = {static_cast<std::uint32_t>(ds.size())};
  for (int l : ds.labels) f.payload.push_back(static_cast<std::uint8_t>(l));
  return f;
}

std::vector<std::string> mnist_files() {
  return {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
          "t10k-labels-idx1-ubyte"};
}

namespace {

IdxFile read_idx(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

Dataset slice(const Tensor& images, const std::vector<int>& labels, std::size_t begin,
              std::size_t end, Split split) {
  const std::size_t feats = images.dim(1);
  Dataset ds;
  ds.split = split;
  ds.side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(feats))));
  std::vector<double> px(images.data().begin() + static_cast<std::ptrdiff_t>(begin * feats),
                         images.data().begin() + static_cast<std::ptrdiff_t>(end * feats));
  ds.images = Tensor({end - begin, feats}, std::move(px));
  ds.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                   labels.begin() + static_cast<std::ptrdiff_t>(end));
  return ds;
}

}  // namespace

Splits load_mnist(const std::filesystem::path& dir) {
  const auto files = mnist_files();
  const auto images_path = dir / files[0];
  const auto labels_path = dir / files[1];
  if (!std::filesystem::exists(images_path) || !std::filesystem::exists(labels_path)) {
    std::string names;
    for (const auto& f : files) names += (names.empty() ? "" : ", ") + f;
    throw DataError("MNIST not found in '" + dir.string() + "': expected " + names +
                    " (uncompressed); pass --synthetic to use generated data");
  }
  const Tensor images = idx_images(read_idx(images_path));
  const std::vector<int> labels = idx_labels(read_idx(labels_path));
  if (labels.size() != images.dim(0)) {
    throw DataError("MNIST image and label counts differ");
  }
  if (labels.size() <= kMnistValidCount) throw DataError("MNIST training file too small to split");
  const std::size_t cut = labels.size() - kMnistValidCount;
  return {slice(images, labels, 0, cut, Split::kTrain),
          slice(images, labels, cut, labels.size(), Split::kValid)};
}

namespace {

std::vector<Tensor> prototypes(Rng& rng, const SyntheticOptions& opts) {
  std::vector<Tensor> out;
  for (std::size_t c = 0; c < opts.classes; ++c) {
    out.push_back(rand_uniform(rng, {opts.side * opts.side}, 0.1, 0.9));
  }
  return out;
}

Dataset sample_around(Rng& rng, const std::vector<Tensor>& protos, std::size_t n,
                      const SyntheticOptions& opts, Split split) {
  const std::size_t feats = opts.side * opts.side;
  Dataset ds;
  ds.split = split;
  ds.side = opts.side;
  ds.classes = opts.classes;
  ds.images = Tensor({n, feats});
  ds.labels.resize(n);
  auto px = ds.images.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % opts.classes);
    ds.labels[i] = label;
    auto proto = protos[static_cast<std::size_t>(label)].data();
    for (std::size_t j = 0; j < feats; ++j) {
      px[i * feats + j] = std::clamp(proto[j] + opts.noise * rng.normal(), 0.0, 1.0);
    }
  }
  return ds;
}

void check_synthetic(std::size_t n, const SyntheticOptions& opts) {
  if (opts.classes < 2) throw ContractError("synthetic data needs at least 2 classes");
  if (n < opts.classes) {
    throw ContractError("synthetic data needs N >= classes, got N=" + std::to_string(n));
  }
}

}  // namespace

Dataset synthetic(Rng& rng, std::size_t n, const SyntheticOptions& opts) {
  check_synthetic(n, opts);
  const auto protos = prototypes(rng, opts);
  return sample_around(rng, protos, n, opts, Split::kTrain);
}

Splits synthetic_splits(std::uint64_t seed, std::size_t n_train, std::size_t n_valid,
                        const SyntheticOptions& opts) {
  check_synthetic(n_train, opts);
  check_synthetic(n_valid, opts);
  Rng proto_rng(seed);
  const auto protos = prototypes(proto_rng, opts);
  Rng train_rng = proto_rng.split(1);
  Rng valid_rng = proto_rng.split(2);
  return {sample_around(train_rng, protos, n_train, opts, Split::kTrain),
          sample_around(valid_rng, protos, n_valid, opts, Split::kValid)};
}

Batch gather_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t feats = ds.images.dim(1);
  Batch b;
  b.images = Tensor({indices.size(), feats});
  b.labels.reserve(indices.size());
  b.indices.assign(indices.begin(), indices.end());
  auto out = b.images.mutable_data();
  auto src = ds.images.data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    if (i >= ds.size()) throw IndexError("batch index " + std::to_string(i) + " out of range");
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * feats), feats,
                out.begin() + static_cast<std::ptrdiff_t>(r * feats));
    b.labels.push_back(ds.labels[i]);
  }
  return b;
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
    : ds_(&ds), batch_size_(batch_size), rng_(seed), order_(ds.size()) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  if (ds.size() == 0) throw ContractError("cannot iterate an empty dataset");
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = order_.size() - 1; i > 0; --i) {
    std::swap(order_[i], order_[rng_.below(i + 1)]);
  }
  pos_ = 0;
}

Batch BatchIterator::next() {
  if (pos_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
  Batch b = gather_batch(*ds_, std::span(order_).subspan(pos_, end - pos_));
  pos_ = end;
  return b;
}

}  // namespace fgrad::data
