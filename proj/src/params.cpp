#include "fgrad/params.hpp"

#include <algorithm>

#include "fgrad/errors.hpp"

namespace fgrad {

void ParamSet::add(std::string name, Tensor value) {
  if (value.empty()) throw ContractError("parameter '" + name + "' has no elements");
  offsets_.push_back(numel_);
  numel_ += value.numel();
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

void ParamSet::set(std::size_t i, Tensor value) {
  if (value.shape() != tensors_.at(i).shape()) {
    throw DimensionError("parameter '" + names_[i] + "' has shape " +
                         shape_str(tensors_[i].shape()) + ", got " + shape_str(value.shape()));
  }
  tensors_[i] = std::move(value);
}

Tensor ParamSet::flatten() const {
  if (numel_ == 0) throw ContractError("cannot flatten an empty parameter set");
  Tensor flat({numel_});
  auto out = flat.mutable_data();
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    std::ranges::copy(tensors_[i].data(), out.begin() + static_cast<std::ptrdiff_t>(offsets_[i]));
  }
  return flat;
}

void ParamSet::unflatten(const Tensor& flat) {
  if (flat.numel() != numel_) {
    throw DimensionError("flat parameter vector has " + std::to_string(flat.numel()) +
                         " elements, expected " + std::to_string(numel_));
  }
  auto in = flat.data();
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    Tensor t(tensors_[i].shape());
    auto slice = in.subspan(offsets_[i], t.numel());
    std::ranges::copy(slice, t.mutable_data().begin());
    tensors_[i] = std::move(t);
  }
}

}  // namespace fgrad
