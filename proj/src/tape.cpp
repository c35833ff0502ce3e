#include "deblur/tape.hpp"

#include <algorithm>

#include "deblur/error.hpp"

namespace deblur {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::TransposedConv2d: return "transposed_conv2d";
    case OpKind::BatchNorm: return "batch_norm";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Dropout: return "dropout";
    case OpKind::MinPoolChannelsWindow: return "min_pool_channels_window";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::ReduceL1: return "reduce_l1";
    case OpKind::ReduceL2Sq: return "reduce_l2sq";
    case OpKind::Affine: return "affine";
    case OpKind::Add: return "add";
    case OpKind::Mean: return "mean";
    case OpKind::Log: return "log";
    case OpKind::Clamp: return "clamp";
  }
  return "unknown";
}

bool Tape::needs_grad(std::initializer_list<const Tensor*> inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

void Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor output, Backward backward) {
  nodes_.push_back(Node{kind, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw DimensionError("backward() needs a single-element loss tensor");
  if (!loss.requires_grad()) throw StateError("backward() on a loss that does not depend on any parameter");
  Tensor seed = loss;
  seed.grad_mut()[0] += Real(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not upstream of the loss
    it->backward();
  }
}

std::size_t Tape::count(OpKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [kind](const Node& n) { return n.kind == kind; }));
}

}  // namespace deblur
