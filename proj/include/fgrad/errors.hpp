#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fgrad {

// Shape or extent disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An integer index (label, parameter slot) outside its valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Malformed binary input; carries the byte offset where decoding stopped.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Payload shorter than its header promises.
class LengthError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// A caller broke an API contract, e.g. asked for the gradient of a non-scalar.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Internal consistency failure in a differentiation rule.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fgrad
