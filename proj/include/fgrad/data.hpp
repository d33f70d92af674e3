#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgrad/tensor.hpp"

namespace fgrad::data {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Dataset files missing or unreadable.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Decoded IDX container: big-endian magic, one extent per dimension, then
// unsigned bytes.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

IdxFile parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_idx(const IdxFile& file);

// Images scaled to [0, 1] as [N x rows*cols].
Tensor idx_images(const IdxFile& file);
// Labels checked to lie in [0, classes).
std::vector<int> idx_labels(const IdxFile& file, int classes = 10);

enum class Split { kTrain, kValid };

struct Dataset {
  Tensor images;  // [N x side*side], pixel values in [0, 1]
  std::vector<int> labels;
  Split split = Split::kTrain;
  std::size_t side = 28;
  std::size_t classes = 10;

  std::size_t size() const { return labels.size(); }
};

// Inverse of idx_images/idx_labels for a dataset whose pixels are k/255.
IdxFile to_idx_images(const Dataset& ds);
IdxFile to_idx_labels(const Dataset& ds);

inline constexpr std::size_t kMnistTrainCount = 60000;
inline constexpr std::size_t kMnistValidCount = 10000;

// The standard file names expected in an MNIST directory.
std::vector<std::string> mnist_files();

struct Splits {
  Dataset train;
  Dataset valid;
};

// Training split is the first 50,000 images of the MNIST training file,
// validation the last 10,000.
Splits load_mnist(const std::filesystem::path& dir);

struct SyntheticOptions {
  std::size_t side = 28;
  std::size_t classes = 10;
  // Per-pixel Gaussian noise around each class prototype.
  double noise = 0.25;
};

// Gaussian blobs around per-class prototype images, clamped to [0, 1].
// Labels cycle through the classes, so N divisible by classes gives equal
// counts.
Dataset synthetic(Rng& rng, std::size_t n, const SyntheticOptions& opts = {});
// Train and validation sets drawn around the same prototypes.
Splits synthetic_splits(std::uint64_t seed, std::size_t n_train, std::size_t n_valid,
                        const SyntheticOptions& opts = {});

struct Batch {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch gather_batch(const Dataset& ds, std::span<const std::size_t> indices);

// Shuffled minibatches; every epoch is a permutation of the dataset, and
// the final batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }

 private:
  void reshuffle();

  const Dataset* ds_;
  std::size_t batch_size_;
  Rng rng_;
  std::size_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace fgrad::data
