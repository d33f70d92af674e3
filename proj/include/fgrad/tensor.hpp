#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fgrad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Element-count accounting for every live tensor buffer on the calling thread.
struct AllocStats {
  std::size_t live_elements = 0;
  std::size_t peak_elements = 0;
};

AllocStats alloc_stats();
// Lowers the high-water mark to the current live count.
void reset_alloc_peak();

namespace detail {
class Storage;
}

// Dense row-major array of doubles.
//
// Copies share the underlying buffer; mutable_data() detaches first when the
// buffer is shared, so a Tensor observed through one handle never changes
// because of a write through another.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value) { return full({1}, value); }
  static Tensor from(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const noexcept { return numel_; }
  bool empty() const noexcept { return numel_ == 0; }

  std::span<const double> data() const noexcept;
  std::span<double> mutable_data();

  double operator[](std::size_t i) const noexcept { return data()[i]; }
  // Value of a one-element tensor.
  double item() const;

  // Same elements, new shape. Shares storage.
  Tensor reshape(Shape shape) const;

  bool shares_storage_with(const Tensor& other) const noexcept {
    return storage_ != nullptr && storage_ == other.storage_;
  }

 private:
  Shape shape_;
  std::size_t numel_ = 0;
  std::shared_ptr<detail::Storage> storage_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);

// Counter-based generator: the i-th 64-bit draw is a pure function of
// (seed, i). Normals use the ziggurat method on top of those draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  // Uniform on (0, 1].
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;
  double normal() noexcept;
  void fill_normal(std::span<double> out) noexcept;

  // Independent stream derived from this generator's seed and a tag.
  Rng split(std::uint64_t tag) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

Tensor randn(Rng& rng, Shape shape);
Tensor rand_uniform(Rng& rng, Shape shape, double lo, double hi);

}  // namespace fgrad
