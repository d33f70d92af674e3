#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fgrad/errors.hpp"
#include "fgrad/instrument.hpp"
#include "fgrad/params.hpp"
#include "fgrad/program.hpp"
#include "fgrad/tensor.hpp"

// Tape-based reverse-mode AD, the backpropagation baseline.
namespace fgrad::revad {

enum class Primitive : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kAddBias,
  kRelu,
  kConv2d,
  kMaxPool,
  kReshape,
  kLogSoftmaxNll,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
};

const char* primitive_name(Primitive p);

inline constexpr std::size_t kNoInput = static_cast<std::size_t>(-1);

struct Node {
  Primitive op = Primitive::kConstant;
  std::array<std::size_t, 2> inputs{kNoInput, kNoInput};
  // Output value. Backward rules read operands through the input nodes'
  // values, which stay on the tape until it is destroyed.
  Tensor value;
  bool requires_grad = false;
  // Saved state for rules that need more than operand values.
  std::vector<std::size_t> argmax;
  std::vector<int> labels;
  double scalar = 0.0;
};

// Append-only record of primitive applications. Node ids are positions, so
// every node's inputs precede it.
class Tape {
 public:
  std::size_t leaf(Tensor value);
  std::size_t constant(Tensor value);
  std::size_t record(Node node);

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Adjoints of the requested nodes after seeding `output` (one element)
  // with 1 and sweeping the tape in reverse order. Nodes that received no
  // adjoint come back as zero tensors.
  std::vector<Tensor> backward(std::size_t output, std::span<const std::size_t> wrt) const;

  // Recomputes every node from leaves and constants.
  std::vector<Tensor> replay() const;

 private:
  std::vector<Node> nodes_;
};

// Adjoint contributions of one node to its inputs (empty where an input
// needs none).
std::array<Tensor, 2> backward_rule(const Tape& tape, std::size_t id, const Tensor& out_adjoint);

// Handle to a tape node; the value type programs are written against in
// reverse mode.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const { return tape_->node(id_).value; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

Var constant_like(const Var& ref, Tensor value);
inline const Tensor& primal_of(const Var& x) { return x.value(); }

Var matmul(const Var& a, const Var& b);
Var add_bias(const Var& x, const Var& bias);
Var relu(const Var& x);
Var conv2d(const Var& x, const Var& kernel);
Var maxpool2d(const Var& x);
Var reshape(const Var& x, Shape shape);
Var logsoftmax_nll(const Var& logits, std::span<const int> labels);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

struct Gradient {
  double loss = 0.0;
  // Flattened in ParamSet declaration order.
  Tensor gradient;
};

// One recording forward pass and one backward pass. The tape lives only for
// the duration of the call.
template <class F>
Gradient grad(F&& f, const ParamSet& params) {
  static_assert(ProgramOver<F, Var>,
                "unsupported operation: the program must be built only from primitives that "
                "have a reverse-mode rule");
  Tape tape;
  std::vector<Var> leaves;
  std::vector<std::size_t> ids;
  leaves.reserve(params.size());
  for (const Tensor& p : params.tensors()) {
    ids.push_back(tape.leaf(p));
    leaves.emplace_back(&tape, ids.back());
  }
  ++instrument::counters().forward_evaluations;
  const Var out = f(std::span<const Var>(leaves));
  if (out.tape() != &tape) throw ContractError("grad: program returned a value from another tape");
  if (out.value().numel() != 1) {
    throw ContractError("grad: program output must be a scalar, got " +
                        shape_str(out.value().shape()));
  }
  ++instrument::counters().backward_passes;
  const std::vector<Tensor> adjoints = tape.backward(out.id(), ids);
  Gradient result{out.value().item(), Tensor({params.numel()})};
  auto flat = result.gradient.mutable_data();
  for (std::size_t i = 0; i < adjoints.size(); ++i) {
    auto src = adjoints[i].data();
    std::copy(src.begin(), src.end(), flat.begin() + static_cast<std::ptrdiff_t>(params.offset(i)));
  }
  return result;
}

}  // namespace fgrad::revad
