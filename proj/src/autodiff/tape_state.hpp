#pragma once

#include <deque>
#include <initializer_list>
#include <memory>
#include <vector>

#include "xhm/autodiff.hpp"

namespace xhm::ad::detail {

struct Node {
  Op op = Op::leaf;
  std::vector<int> inputs;
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;

  // Op attributes; which ones are meaningful depends on `op`.
  double scale = 0.0;  // affine scale, softplus/sigmoid beta
  double shift = 0.0;  // affine shift
  std::size_t stride = 1;  // conv stride, pooling window
  Shape aux;  // target shape for reshape/expand/scatter, input shape for conv grads
  std::vector<double> constant;  // mul_const / add_const operand
  std::vector<std::size_t> index;  // gather/scatter positions, max_pool argmax, label
};

struct TapeState : std::enable_shared_from_this<TapeState> {
  // deque: references to existing nodes survive push_back.
  std::deque<Node> nodes;
  bool grad_enabled = true;

  static const std::shared_ptr<TapeState>& of(const Tensor& t) { return t.state_; }
  static Tensor handle(std::shared_ptr<TapeState> state, int id) { return Tensor(std::move(state), id); }
  static const Node& node(const Tensor& t) { return t.state_->nodes[static_cast<std::size_t>(t.id_)]; }

  Tensor push(Node node);
};

/// Computes node.shape and node.value from the node's inputs and attributes.
/// For max_pool this also fills node.index with the argmax positions.
void evaluate(Node& node, const std::deque<Node>& nodes);

/// Records `node` with the given inputs; all inputs must share one tape.
Tensor record(Node node, std::initializer_list<Tensor> inputs);

}  // namespace xhm::ad::detail
