#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fgrad/tensor.hpp"

namespace fgrad {

// Ordered, named parameter tensors. The flat view concatenates them in
// declaration order.
class ParamSet {
 public:
  void add(std::string name, Tensor value);

  std::size_t size() const noexcept { return tensors_.size(); }
  // Total scalar parameter count n.
  std::size_t numel() const noexcept { return numel_; }
  std::size_t offset(std::size_t i) const { return offsets_.at(i); }

  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::span<const Tensor> tensors() const noexcept { return tensors_; }
  std::span<const std::string> names() const noexcept { return names_; }

  // Replaces tensor i; the shape must not change.
  void set(std::size_t i, Tensor value);
  // In-place access for optimizer updates.
  Tensor& mutable_tensor(std::size_t i) { return tensors_.at(i); }

  Tensor flatten() const;
  // Overwrites every tensor from a flat vector of length numel().
  void unflatten(const Tensor& flat);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::vector<std::size_t> offsets_;
  std::size_t numel_ = 0;
};

}  // namespace fgrad
