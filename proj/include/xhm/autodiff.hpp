#pragma once

// Reverse-mode automatic differentiation over small tensor programs.
//
// A Tape records primitive operations in execution order. Every backward
// rule is itself written in terms of recorded primitives, so with
// GradOptions::create_graph the gradient is a differentiable expression on
// the same tape and can be differentiated again (double backprop).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "xhm/array.hpp"

namespace xhm::ad {

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  affine,
  mul_const,
  add_const,
  square,
  abs,
  sqrt,
  relu,
  softplus,
  sigmoid,
  sum,
  expand,
  reshape,
  transpose,
  matmul,
  spread_channels,
  per_channel_sum,
  channel_sum,
  channel_repeat,
  conv2d,
  conv2d_input_grad,
  conv2d_weight_grad,
  max_pool,
  gather,
  scatter_add,
  avg_pool,
  avg_unpool,
  softmax,
  cross_entropy,
};

const char* op_name(Op op);

namespace detail {
struct TapeState;
}

class Tape;
class NoGradGuard;

/// Handle to a value recorded on a tape. Cheap to copy; keeps its tape alive.
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return state_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::span<const double> data() const;
  Array array() const;
  /// Value of a single-element tensor.
  double item() const;
  bool requires_grad() const;
  Op op() const;
  int id() const { return id_; }
  Tape tape() const;

 private:
  friend class Tape;
  friend struct detail::TapeState;
  Tensor(std::shared_ptr<detail::TapeState> state, int id) : state_(std::move(state)), id_(id) {}

  std::shared_ptr<detail::TapeState> state_;
  int id_ = -1;
};

/// Ordered record of primitive operations. Nodes are appended in execution
/// order, so node inputs always precede the node (topological order).
/// A tape and its tensors belong to one thread.
class Tape {
 public:
  Tape();

  /// Leaf that gradients can be taken with respect to. Rejects NaN/Inf.
  Tensor variable(Array value);
  /// Leaf that never receives a gradient. Rejects NaN/Inf.
  Tensor constant(Array value);

  std::size_t size() const;
  Op op_at(std::size_t index) const;

  /// Re-executes every recorded node from its inputs and attributes and
  /// returns the recomputed values, one per node.
  std::vector<std::vector<double>> replay() const;

  bool same(const Tape& other) const { return state_ == other.state_; }

 private:
  friend class Tensor;
  friend class NoGradGuard;
  explicit Tape(std::shared_ptr<detail::TapeState> state) : state_(std::move(state)) {}
  std::shared_ptr<detail::TapeState> state_;
};

// Elementwise (operands of equal shape).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// scale * a + shift
Tensor affine(const Tensor& a, double scale, double shift);
/// Multiplies by a fixed array that is not differentiated (masks, signs).
Tensor mul_const(const Tensor& a, std::vector<double> factor);
Tensor add_const(const Tensor& a, std::vector<double> offset);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
/// Square root; its derivative is taken as zero where the value is zero.
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
/// (1/beta) * log(1 + exp(beta * a)), beta > 0.
Tensor softplus(const Tensor& a, double beta);
/// 1 / (1 + exp(-beta * a))
Tensor sigmoid(const Tensor& a, double beta);

// Reductions and shape manipulation.
Tensor sum(const Tensor& a);
/// Broadcasts a single-element tensor to `shape`.
Tensor expand(const Tensor& scalar, const Shape& shape);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor transpose(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
/// [C] -> [C, rest...], repeating each entry over the trailing dimensions.
Tensor spread_channels(const Tensor& bias, const Shape& shape);
/// [C, rest...] -> [C]
Tensor per_channel_sum(const Tensor& a);
/// [C, rest...] -> [rest...]
Tensor channel_sum(const Tensor& a);
/// [rest...] -> [C, rest...]
Tensor channel_repeat(const Tensor& a, std::size_t channels);
/// Adds a per-channel bias to a [C] or [C, rest...] tensor.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Element `index` of a flattened tensor as a scalar.
Tensor select(const Tensor& a, std::size_t index);

// Convolution and pooling over channel-first [C, H, W] tensors, valid padding.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride);
Tensor conv2d_input_grad(const Tensor& g, const Tensor& w, std::size_t stride, const Shape& input_shape);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& g, std::size_t stride, const Shape& weight_shape);
/// Non-overlapping max pooling; ties go to the lowest flat index.
Tensor max_pool(const Tensor& x, std::size_t window);
/// Flat input index chosen for each output of a max_pool node.
const std::vector<std::size_t>& max_pool_argmax(const Tensor& pooled);
Tensor gather(const Tensor& a, std::vector<std::size_t> index, const Shape& out_shape);
Tensor scatter_add(const Tensor& a, std::vector<std::size_t> index, const Shape& out_shape);
Tensor avg_pool(const Tensor& x, std::size_t window);
Tensor avg_unpool(const Tensor& g, std::size_t window, const Shape& input_shape);

Tensor softmax(const Tensor& logits);
/// log-sum-exp(logits) - logits[label]
Tensor cross_entropy(const Tensor& logits, std::size_t label);

struct GradOptions {
  /// Record the gradient computation so it can be differentiated again.
  bool create_graph = false;
  /// Guided backpropagation: at every ReLU/Softplus node the incoming
  /// gradient is zeroed where negative before the local derivative applies.
  bool guided = false;
};

/// Gradients of the scalar `output` with respect to each tensor in `wrt`.
/// Throws Errc::invalid_argument for a non-scalar output, Errc::detached
/// when a tensor is not on the output's tape or does not require a gradient,
/// and Errc::not_differentiable when create_graph meets a ReLU node.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt, const GradOptions& options = {});
Tensor grad(const Tensor& output, const Tensor& wrt, const GradOptions& options = {});

/// Plain backward pass returning gradient values, one per input.
std::vector<Array> backward(const Tensor& output, std::span<const Tensor> wrt);
/// Guided backward pass.
std::vector<Array> backward_guided(const Tensor& output, std::span<const Tensor> wrt);

using Program = std::function<Tensor(std::span<const Tensor>)>;

struct Recording {
  Tape tape;
  std::vector<Tensor> inputs;
  Tensor output;
};

/// Runs `program` on fresh variables holding `inputs`.
Recording record_forward(const Program& program, std::span<const Array> inputs);

/// d/dx loss(grad_x f(x)) for a scalar program f, computed by double
/// backpropagation. `loss` maps the first-order gradient to a scalar.
Array grad_of_loss_on_grad(const Program& f, const std::function<Tensor(const Tensor&)>& loss, const Array& x);

/// RAII switch that stops recorded operations from requiring gradients.
class NoGradGuard {
 public:
  explicit NoGradGuard(const Tape& tape);
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  std::shared_ptr<detail::TapeState> state_;
  bool previous_;
};

}  // namespace xhm::ad
