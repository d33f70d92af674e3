#include "fgrad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <boost/random/normal_distribution.hpp>

#include "fgrad/errors.hpp"

namespace fgrad {

namespace {

thread_local AllocStats g_alloc;

void on_alloc(std::size_t n) {
  g_alloc.live_elements += n;
  g_alloc.peak_elements = std::max(g_alloc.peak_elements, g_alloc.live_elements);
}

void on_free(std::size_t n) { g_alloc.live_elements -= n; }

__extension__ using u128 = unsigned __int128;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Maps a 64-bit draw to (0, 1].
double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

namespace detail {

class Storage {
 public:
  explicit Storage(std::size_t n) : values_(n, 0.0) { on_alloc(n); }
  explicit Storage(std::vector<double> values) : values_(std::move(values)) {
    on_alloc(values_.size());
  }
  Storage(const Storage& other) : values_(other.values_) { on_alloc(values_.size()); }
  Storage& operator=(const Storage&) = delete;
  ~Storage() { on_free(values_.size()); }

  std::vector<double> values_;
};

}  // namespace detail

AllocStats alloc_stats() { return g_alloc; }

void reset_alloc_peak() { g_alloc.peak_elements = g_alloc.live_elements; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  numel_ = shape_numel(shape_);
  storage_ = std::make_shared<detail::Storage>(numel_);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  check_extents(shape_);
  numel_ = shape_numel(shape_);
  if (values.size() != numel_) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape_));
  }
  storage_ = std::make_shared<detail::Storage>(std::move(values));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::ranges::fill(t.mutable_data(), value);
  return t;
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::span<const double> Tensor::data() const noexcept {
  if (!storage_) return {};
  return {storage_->values_.data(), numel_};
}

std::span<double> Tensor::mutable_data() {
  if (!storage_) return {};
  if (storage_.use_count() > 1) storage_ = std::make_shared<detail::Storage>(*storage_);
  return {storage_->values_.data(), numel_};
}

double Tensor::item() const {
  if (numel_ != 1) {
    throw DimensionError("item() needs a one-element tensor, got " + shape_str(shape_));
  }
  return storage_->values_[0];
}

Tensor Tensor::reshape(Shape shape) const {
  check_extents(shape);
  if (shape_numel(shape) != numel_) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

std::uint64_t Rng::next_u64() noexcept { return splitmix64(seed_ ^ splitmix64(counter_++)); }

double Rng::uniform() noexcept { return to_unit(next_u64()); }

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift with rejection of the biased low zone.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    const u128 m = static_cast<u128>(x) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

namespace {

// Adapts Rng to the uniform-bit-generator interface Boost.Random expects.
struct BitSource {
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return rng.next_u64(); }
  Rng& rng;
};

}  // namespace

// Ziggurat sampler; exact N(0, 1) and a few nanoseconds per draw.
double Rng::normal() noexcept {
  BitSource bits{*this};
  return boost::random::normal_distribution<double>()(bits);
}

void Rng::fill_normal(std::span<double> out) noexcept {
  BitSource bits{*this};
  boost::random::normal_distribution<double> dist;
  for (double& x : out) x = dist(bits);
}

Rng Rng::split(std::uint64_t tag) const noexcept {
  return Rng(splitmix64(seed_ ^ splitmix64(~tag)));
}

Tensor randn(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  rng.fill_normal(t.mutable_data());
  return t;
}

Tensor rand_uniform(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& x : t.mutable_data()) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace fgrad
