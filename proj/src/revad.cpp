#include "fgrad/revad.hpp"

#include <algorithm>
#include <string>

#include "fgrad/ops.hpp"

namespace fgrad::revad {

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kLeaf: return "leaf";
    case Primitive::kConstant: return "constant";
    case Primitive::kMatMul: return "matmul";
    case Primitive::kAddBias: return "add_bias";
    case Primitive::kRelu: return "relu";
    case Primitive::kConv2d: return "conv2d";
    case Primitive::kMaxPool: return "maxpool2d";
    case Primitive::kReshape: return "reshape";
    case Primitive::kLogSoftmaxNll: return "logsoftmax_nll";
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kMul: return "mul";
    case Primitive::kScale: return "scale";
    case Primitive::kAddScalar: return "add_scalar";
  }
  return "unknown";
}

std::size_t Tape::leaf(Tensor value) {
  Node n;
  n.op = Primitive::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

std::size_t Tape::constant(Tensor value) {
  Node n;
  n.op = Primitive::kConstant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

std::size_t Tape::record(Node node) {
  node.requires_grad = false;
  for (std::size_t in : node.inputs) {
    if (in == kNoInput) continue;
    if (in >= nodes_.size()) throw InternalError("tape: input refers to a later node");
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

namespace {

Tensor compute(const Node& n, const std::vector<Tensor>& values) {
  auto in = [&](std::size_t k) -> const Tensor& { return values[n.inputs[k]]; };
  switch (n.op) {
    case Primitive::kLeaf:
    case Primitive::kConstant: return n.value;
    case Primitive::kMatMul: return ops::matmul(in(0), in(1));
    case Primitive::kAddBias: return ops::add_bias(in(0), in(1));
    case Primitive::kRelu: return ops::relu(in(0));
    case Primitive::kConv2d: return ops::conv2d(in(0), in(1));
    case Primitive::kMaxPool: return ops::maxpool2d(in(0)).output;
    case Primitive::kReshape: return in(0).reshape(n.value.shape());
    case Primitive::kLogSoftmaxNll: return Tensor::scalar(ops::logsoftmax_nll(in(0), n.labels));
    case Primitive::kAdd: return ops::add(in(0), in(1));
    case Primitive::kSub: return ops::sub(in(0), in(1));
    case Primitive::kMul: return ops::mul(in(0), in(1));
    case Primitive::kScale: return ops::scale(in(0), n.scalar);
    case Primitive::kAddScalar: return ops::add_scalar(in(0), n.scalar);
  }
  throw InternalError("tape: unknown primitive");
}

}  // namespace

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> values;
  values.reserve(nodes_.size());
  for (const Node& n : nodes_) values.push_back(compute(n, values));
  return values;
}

std::array<Tensor, 2> backward_rule(const Tape& tape, std::size_t id, const Tensor& out_adjoint) {
  const Node& n = tape.node(id);
  if (out_adjoint.shape() != n.value.shape()) {
    throw InternalError(std::string("backward rule for ") + primitive_name(n.op) +
                        ": adjoint shape " + shape_str(out_adjoint.shape()) +
                        " does not match output " + shape_str(n.value.shape()));
  }
  auto needs = [&](std::size_t k) {
    return n.inputs[k] != kNoInput && tape.node(n.inputs[k]).requires_grad;
  };
  auto in = [&](std::size_t k) -> const Tensor& { return tape.node(n.inputs[k]).value; };

  std::array<Tensor, 2> out;
  switch (n.op) {
    case Primitive::kLeaf:
    case Primitive::kConstant: break;
    case Primitive::kMatMul:
      if (needs(0)) out[0] = ops::matmul_nt(out_adjoint, in(1));
      if (needs(1)) out[1] = ops::matmul_tn(in(0), out_adjoint);
      break;
    case Primitive::kAddBias:
      if (needs(0)) out[0] = out_adjoint;
      if (needs(1)) out[1] = ops::sum_rows(out_adjoint);
      break;
    case Primitive::kRelu:
      if (needs(0)) out[0] = ops::relu_mask(out_adjoint, n.value);
      break;
    case Primitive::kConv2d:
      if (needs(0)) out[0] = ops::conv2d_input_grad(out_adjoint, in(1), in(0).shape());
      if (needs(1)) out[1] = ops::conv2d_kernel_grad(in(0), out_adjoint, in(1).shape());
      break;
    case Primitive::kMaxPool:
      if (needs(0)) out[0] = ops::scatter_add(out_adjoint, n.argmax, in(0).shape());
      break;
    case Primitive::kReshape:
      if (needs(0)) out[0] = out_adjoint.reshape(in(0).shape());
      break;
    case Primitive::kLogSoftmaxNll:
      if (needs(0)) out[0] = ops::scale(ops::logsoftmax_nll_grad(in(0), n.labels), out_adjoint.item());
      break;
    case Primitive::kAdd:
      if (needs(0)) out[0] = out_adjoint;
      if (needs(1)) out[1] = out_adjoint;
      break;
    case Primitive::kSub:
      if (needs(0)) out[0] = out_adjoint;
      if (needs(1)) out[1] = ops::scale(out_adjoint, -1.0);
      break;
    case Primitive::kMul:
      if (needs(0)) out[0] = ops::mul(out_adjoint, in(1));
      if (needs(1)) out[1] = ops::mul(out_adjoint, in(0));
      break;
    case Primitive::kScale:
      if (needs(0)) out[0] = ops::scale(out_adjoint, n.scalar);
      break;
    case Primitive::kAddScalar:
      if (needs(0)) out[0] = out_adjoint;
      break;
  }
  for (std::size_t k = 0; k < 2; ++k) {
    if (!out[k].empty() && out[k].shape() != in(k).shape()) {
      throw InternalError(std::string("backward rule for ") + primitive_name(n.op) +
                          " produced adjoint " + shape_str(out[k].shape()) + " for input " +
                          shape_str(in(k).shape()));
    }
  }
  return out;
}

std::vector<Tensor> Tape::backward(std::size_t output, std::span<const std::size_t> wrt) const {
  if (output >= nodes_.size()) throw ContractError("backward: output node is not on this tape");
  if (nodes_[output].value.numel() != 1) {
    throw ContractError("backward: output must be a scalar, got " +
                        shape_str(nodes_[output].value.shape()));
  }
  std::vector<bool> keep(nodes_.size(), false);
  for (std::size_t id : wrt) keep.at(id) = true;

  std::vector<Tensor> adjoint(nodes_.size());
  adjoint[output] = Tensor::full(nodes_[output].value.shape(), 1.0);
  for (std::size_t id = output + 1; id-- > 0;) {
    if (adjoint[id].empty() || !nodes_[id].requires_grad) continue;
    std::array<Tensor, 2> contrib = backward_rule(*this, id, adjoint[id]);
    for (std::size_t k = 0; k < 2; ++k) {
      if (contrib[k].empty()) continue;
      Tensor& dst = adjoint[nodes_[id].inputs[k]];
      if (dst.empty()) {
        dst = std::move(contrib[k]);
      } else {
        ops::axpy_inplace(dst, contrib[k], 1.0);
      }
    }
    if (!keep[id]) adjoint[id] = Tensor();
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (std::size_t id : wrt) {
    result.push_back(adjoint[id].empty() ? Tensor::zeros(nodes_[id].value.shape()) : adjoint[id]);
  }
  return result;
}

namespace {

Tape& common_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("reverse-mode operands belong to different tapes");
  }
  return *a.tape();
}

Tape& tape_of(const Var& a) {
  if (a.tape() == nullptr) throw ContractError("reverse-mode operand is not on a tape");
  return *a.tape();
}

Var emit(Tape& tape, Primitive op, Tensor value, std::size_t a, std::size_t b = kNoInput,
         double scalar = 0.0) {
  Node n;
  n.op = op;
  n.inputs = {a, b};
  n.value = std::move(value);
  n.scalar = scalar;
  return Var(&tape, tape.record(std::move(n)));
}

}  // namespace

Var constant_like(const Var& ref, Tensor value) {
  Tape& t = tape_of(ref);
  return Var(&t, t.constant(std::move(value)));
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  return emit(t, Primitive::kMatMul, ops::matmul(a.value(), b.value()), a.id(), b.id());
}

Var add_bias(const Var& x, const Var& bias) {
  Tape& t = common_tape(x, bias);
  return emit(t, Primitive::kAddBias, ops::add_bias(x.value(), bias.value()), x.id(), bias.id());
}

Var relu(const Var& x) {
  return emit(tape_of(x), Primitive::kRelu, ops::relu(x.value()), x.id());
}

Var conv2d(const Var& x, const Var& kernel) {
  Tape& t = common_tape(x, kernel);
  return emit(t, Primitive::kConv2d, ops::conv2d(x.value(), kernel.value()), x.id(), kernel.id());
}

Var maxpool2d(const Var& x) {
  ops::PoolResult pooled = ops::maxpool2d(x.value());
  Node n;
  n.op = Primitive::kMaxPool;
  n.inputs = {x.id(), kNoInput};
  n.value = std::move(pooled.output);
  n.argmax = std::move(pooled.argmax);
  Tape& t = tape_of(x);
  return Var(&t, t.record(std::move(n)));
}

Var reshape(const Var& x, Shape shape) {
  return emit(tape_of(x), Primitive::kReshape, x.value().reshape(std::move(shape)), x.id());
}

Var logsoftmax_nll(const Var& logits, std::span<const int> labels) {
  Node n;
  n.op = Primitive::kLogSoftmaxNll;
  n.inputs = {logits.id(), kNoInput};
  n.value = Tensor::scalar(ops::logsoftmax_nll(logits.value(), labels));
  n.labels.assign(labels.begin(), labels.end());
  Tape& t = tape_of(logits);
  return Var(&t, t.record(std::move(n)));
}

Var add(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  return emit(t, Primitive::kAdd, ops::add(a.value(), b.value()), a.id(), b.id());
}

Var sub(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  return emit(t, Primitive::kSub, ops::sub(a.value(), b.value()), a.id(), b.id());
}

Var mul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  return emit(t, Primitive::kMul, ops::mul(a.value(), b.value()), a.id(), b.id());
}

Var scale(const Var& a, double s) {
  return emit(tape_of(a), Primitive::kScale, ops::scale(a.value(), s), a.id(), kNoInput, s);
}

Var add_scalar(const Var& a, double s) {
  return emit(tape_of(a), Primitive::kAddScalar, ops::add_scalar(a.value(), s), a.id(), kNoInput,
              s);
}

}  // namespace fgrad::revad
