#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "deblur/tensor.hpp"

namespace deblur {

enum class OpKind {
  Conv2d,
  TransposedConv2d,
  BatchNorm,
  LeakyRelu,
  Sigmoid,
  Tanh,
  Dropout,
  MinPoolChannelsWindow,
  ConcatChannels,
  ReduceL1,
  ReduceL2Sq,
  Affine,
  Add,
  Mean,
  Log,
  Clamp,
};

std::string_view op_name(OpKind kind);

/// Ordered record of differentiable operations for reverse-mode accumulation.
///
/// Nodes are appended in execution order, so every node's inputs are leaves or
/// outputs of earlier nodes and reverse order is a valid topological order.
class Tape {
 public:
  using Backward = std::function<void()>;

  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    Backward backward;
  };

  /// True when at least one input participates in differentiation.
  static bool needs_grad(std::initializer_list<const Tensor*> inputs);

  void record(OpKind kind, std::vector<Tensor> inputs, Tensor output, Backward backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every node's backward exactly once, newest first.
  /// Gradients accumulate into leaves; call sites clear them between steps.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  std::size_t count(OpKind kind) const;
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

}  // namespace deblur
