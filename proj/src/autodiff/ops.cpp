#include <algorithm>
#include <cmath>
#include <sstream>

#include "tape_state.hpp"
#include "xhm/error.hpp"

namespace xhm {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

Array::Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (data.size() != numel(shape))
    throw Error(Errc::shape_mismatch, "array of shape " + to_string(shape) + " given " + std::to_string(data.size()) +
                                          " values");
}

Array::Array(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

void require_finite(const std::vector<double>& data, const std::string& what) {
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i]))
      throw Error(Errc::non_finite, what + ": non-finite value at index " + std::to_string(i));
}

namespace ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::affine: return "affine";
    case Op::mul_const: return "mul_const";
    case Op::add_const: return "add_const";
    case Op::square: return "square";
    case Op::abs: return "abs";
    case Op::sqrt: return "sqrt";
    case Op::relu: return "relu";
    case Op::softplus: return "softplus";
    case Op::sigmoid: return "sigmoid";
    case Op::sum: return "sum";
    case Op::expand: return "expand";
    case Op::reshape: return "reshape";
    case Op::transpose: return "transpose";
    case Op::matmul: return "matmul";
    case Op::spread_channels: return "spread_channels";
    case Op::per_channel_sum: return "per_channel_sum";
    case Op::channel_sum: return "channel_sum";
    case Op::channel_repeat: return "channel_repeat";
    case Op::conv2d: return "conv2d";
    case Op::conv2d_input_grad: return "conv2d_input_grad";
    case Op::conv2d_weight_grad: return "conv2d_weight_grad";
    case Op::max_pool: return "max_pool";
    case Op::gather: return "gather";
    case Op::scatter_add: return "scatter_add";
    case Op::avg_pool: return "avg_pool";
    case Op::avg_unpool: return "avg_unpool";
    case Op::softmax: return "softmax";
    case Op::cross_entropy: return "cross_entropy";
  }
  return "unknown";
}

using detail::Node;
using detail::TapeState;

Tensor detail::TapeState::push(detail::Node node) {
  nodes.push_back(std::move(node));
  return handle(shared_from_this(), static_cast<int>(nodes.size() - 1));
}

namespace detail {

Tensor record(Node node, std::initializer_list<Tensor> inputs) {
  std::shared_ptr<TapeState> state;
  for (const Tensor& t : inputs) {
    if (!t.defined()) throw Error(Errc::detached, std::string(op_name(node.op)) + ": undefined tensor operand");
    const auto& s = TapeState::of(t);
    if (state && s != state)
      throw Error(Errc::detached, std::string(op_name(node.op)) + ": operands live on different tapes");
    state = s;
    node.inputs.push_back(t.id());
    node.requires_grad = node.requires_grad || t.requires_grad();
  }
  node.requires_grad = node.requires_grad && state->grad_enabled;
  evaluate(node, state->nodes);
  return state->push(std::move(node));
}

}  // namespace detail

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(Errc::shape_mismatch, std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

void same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
}

Node make(Op op) {
  Node n;
  n.op = op;
  return n;
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.shape().size() != rank)
    throw Error(Errc::shape_mismatch,
                std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " + to_string(t.shape()));
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

const Shape& Tensor::shape() const { return TapeState::node(*this).shape; }
std::size_t Tensor::numel() const { return TapeState::node(*this).value.size(); }
std::span<const double> Tensor::data() const { return TapeState::node(*this).value; }
Array Tensor::array() const { return Array(shape(), TapeState::node(*this).value); }
bool Tensor::requires_grad() const { return TapeState::node(*this).requires_grad; }
Op Tensor::op() const { return TapeState::node(*this).op; }
Tape Tensor::tape() const { return Tape(state_); }

double Tensor::item() const {
  const auto& v = TapeState::node(*this).value;
  if (v.size() != 1)
    throw Error(Errc::invalid_argument, "item() on tensor with " + std::to_string(v.size()) + " elements");
  return v[0];
}

// --- Tape -------------------------------------------------------------------

Tape::Tape() : state_(std::make_shared<TapeState>()) {}

namespace {
Tensor make_leaf(TapeState& state, Array value, bool requires_grad) {
  require_finite(value.data, "tape leaf");
  Node n;
  n.shape = std::move(value.shape);
  n.value = std::move(value.data);
  n.requires_grad = requires_grad;
  return state.push(std::move(n));
}
}  // namespace

Tensor Tape::variable(Array value) { return make_leaf(*state_, std::move(value), true); }
Tensor Tape::constant(Array value) { return make_leaf(*state_, std::move(value), false); }
std::size_t Tape::size() const { return state_->nodes.size(); }
Op Tape::op_at(std::size_t index) const { return state_->nodes.at(index).op; }

std::vector<std::vector<double>> Tape::replay() const {
  std::deque<Node> fresh;
  std::vector<std::vector<double>> values;
  values.reserve(state_->nodes.size());
  for (const Node& original : state_->nodes) {
    Node n = original;
    if (n.op != Op::leaf) {
      n.value.clear();
      if (n.op == Op::max_pool) n.index.clear();
      detail::evaluate(n, fresh);
    }
    values.push_back(n.value);
    fresh.push_back(std::move(n));
  }
  return values;
}

NoGradGuard::NoGradGuard(const Tape& tape) : state_(tape.state_), previous_(state_->grad_enabled) {
  state_->grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { state_->grad_enabled = previous_; }

// --- Elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  same_shape("add", a, b);
  return detail::record(make(Op::add), {a, b});
}

Tensor sub(const Tensor& a, const Tensor& b) {
  same_shape("sub", a, b);
  return detail::record(make(Op::sub), {a, b});
}

Tensor mul(const Tensor& a, const Tensor& b) {
  same_shape("mul", a, b);
  return detail::record(make(Op::mul), {a, b});
}

Tensor div(const Tensor& a, const Tensor& b) {
  same_shape("div", a, b);
  return detail::record(make(Op::div), {a, b});
}

Tensor affine(const Tensor& a, double scale, double shift) {
  Node n = make(Op::affine);
  n.scale = scale;
  n.shift = shift;
  return detail::record(std::move(n), {a});
}

Tensor mul_const(const Tensor& a, std::vector<double> factor) {
  if (factor.size() != a.numel())
    throw Error(Errc::shape_mismatch, "mul_const: " + std::to_string(factor.size()) + " factors for shape " +
                                          to_string(a.shape()));
  Node n = make(Op::mul_const);
  n.constant = std::move(factor);
  return detail::record(std::move(n), {a});
}

Tensor add_const(const Tensor& a, std::vector<double> offset) {
  if (offset.size() != a.numel())
    throw Error(Errc::shape_mismatch, "add_const: " + std::to_string(offset.size()) + " offsets for shape " +
                                          to_string(a.shape()));
  Node n = make(Op::add_const);
  n.constant = std::move(offset);
  return detail::record(std::move(n), {a});
}

Tensor square(const Tensor& a) { return detail::record(make(Op::square), {a}); }
Tensor abs(const Tensor& a) { return detail::record(make(Op::abs), {a}); }
Tensor sqrt(const Tensor& a) { return detail::record(make(Op::sqrt), {a}); }
Tensor relu(const Tensor& a) { return detail::record(make(Op::relu), {a}); }

Tensor softplus(const Tensor& a, double beta) {
  if (!(beta > 0.0)) throw Error(Errc::invalid_argument, "softplus: beta must be positive");
  Node n = make(Op::softplus);
  n.scale = beta;
  return detail::record(std::move(n), {a});
}

Tensor sigmoid(const Tensor& a, double beta) {
  Node n = make(Op::sigmoid);
  n.scale = beta;
  return detail::record(std::move(n), {a});
}

// --- Reductions and shapes --------------------------------------------------

Tensor sum(const Tensor& a) { return detail::record(make(Op::sum), {a}); }

Tensor expand(const Tensor& scalar, const Shape& shape) {
  if (scalar.numel() != 1) throw Error(Errc::shape_mismatch, "expand: operand " + to_string(scalar.shape()) + " is not a scalar");
  Node n = make(Op::expand);
  n.aux = shape;
  return detail::record(std::move(n), {scalar});
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  Node n = make(Op::reshape);
  n.aux = shape;
  return detail::record(std::move(n), {a});
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  return detail::record(make(Op::transpose), {a});
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.shape()[1] != b.shape()[0]) shape_error("matmul", a.shape(), b.shape());
  return detail::record(make(Op::matmul), {a, b});
}

Tensor spread_channels(const Tensor& bias, const Shape& shape) {
  require_rank("spread_channels", bias, 1);
  if (shape.empty() || shape[0] != bias.shape()[0]) shape_error("spread_channels", bias.shape(), shape);
  Node n = make(Op::spread_channels);
  n.aux = shape;
  return detail::record(std::move(n), {bias});
}

Tensor per_channel_sum(const Tensor& a) {
  if (a.shape().empty()) throw Error(Errc::shape_mismatch, "per_channel_sum: scalar operand");
  return detail::record(make(Op::per_channel_sum), {a});
}

Tensor channel_sum(const Tensor& a) {
  if (a.shape().empty()) throw Error(Errc::shape_mismatch, "channel_sum: scalar operand");
  return detail::record(make(Op::channel_sum), {a});
}

Tensor channel_repeat(const Tensor& a, std::size_t channels) {
  Node n = make(Op::channel_repeat);
  n.aux = a.shape();
  n.aux.insert(n.aux.begin(), channels);
  return detail::record(std::move(n), {a});
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.shape() == bias.shape()) return add(x, bias);
  return add(x, spread_channels(bias, x.shape()));
}

Tensor select(const Tensor& a, std::size_t index) {
  if (index >= a.numel())
    throw Error(Errc::invalid_argument, "select: index " + std::to_string(index) + " out of range for shape " +
                                            to_string(a.shape()));
  return gather(a, {index}, {});
}

// --- Convolution and pooling ------------------------------------------------

const std::vector<std::size_t>& max_pool_argmax(const Tensor& pooled) {
  if (!pooled.defined() || pooled.op() != Op::max_pool)
    throw Error(Errc::invalid_argument, "max_pool_argmax: tensor is not a max_pool result");
  return detail::TapeState::node(pooled).index;
}

namespace {
void check_conv(const char* op, const Shape& x, const Shape& w, std::size_t stride) {
  if (x.size() != 3 || w.size() != 4) shape_error(op, x, w);
  if (stride == 0) throw Error(Errc::invalid_argument, std::string(op) + ": stride must be positive");
  if (x[0] != w[1] || x[1] < w[2] || x[2] < w[3]) shape_error(op, x, w);
}

Shape conv_out(const Shape& x, const Shape& w, std::size_t stride) {
  return {w[0], (x[1] - w[2]) / stride + 1, (x[2] - w[3]) / stride + 1};
}
}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride) {
  check_conv("conv2d", x.shape(), w.shape(), stride);
  Node n = make(Op::conv2d);
  n.stride = stride;
  return detail::record(std::move(n), {x, w});
}

Tensor conv2d_input_grad(const Tensor& g, const Tensor& w, std::size_t stride, const Shape& input_shape) {
  check_conv("conv2d_input_grad", input_shape, w.shape(), stride);
  if (g.shape() != conv_out(input_shape, w.shape(), stride))
    shape_error("conv2d_input_grad", g.shape(), conv_out(input_shape, w.shape(), stride));
  Node n = make(Op::conv2d_input_grad);
  n.stride = stride;
  n.aux = input_shape;
  return detail::record(std::move(n), {g, w});
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& g, std::size_t stride, const Shape& weight_shape) {
  check_conv("conv2d_weight_grad", x.shape(), weight_shape, stride);
  if (g.shape() != conv_out(x.shape(), weight_shape, stride))
    shape_error("conv2d_weight_grad", g.shape(), conv_out(x.shape(), weight_shape, stride));
  Node n = make(Op::conv2d_weight_grad);
  n.stride = stride;
  n.aux = weight_shape;
  return detail::record(std::move(n), {x, g});
}

namespace {
void check_pool(const char* op, const Tensor& x, std::size_t window) {
  require_rank(op, x, 3);
  if (window == 0 || window > x.shape()[1] || window > x.shape()[2])
    throw Error(Errc::invalid_argument, std::string(op) + ": window " + std::to_string(window) +
                                            " does not fit shape " + to_string(x.shape()));
}
}  // namespace

Tensor max_pool(const Tensor& x, std::size_t window) {
  check_pool("max_pool", x, window);
  Node n = make(Op::max_pool);
  n.stride = window;
  return detail::record(std::move(n), {x});
}

Tensor gather(const Tensor& a, std::vector<std::size_t> index, const Shape& out_shape) {
  if (index.size() != numel(out_shape)) throw Error(Errc::shape_mismatch, "gather: index count does not match output shape");
  for (std::size_t i : index)
    if (i >= a.numel()) throw Error(Errc::invalid_argument, "gather: index out of range");
  Node n = make(Op::gather);
  n.index = std::move(index);
  n.aux = out_shape;
  return detail::record(std::move(n), {a});
}

Tensor scatter_add(const Tensor& a, std::vector<std::size_t> index, const Shape& out_shape) {
  if (index.size() != a.numel()) throw Error(Errc::shape_mismatch, "scatter_add: index count does not match operand");
  const std::size_t limit = numel(out_shape);
  for (std::size_t i : index)
    if (i >= limit) throw Error(Errc::invalid_argument, "scatter_add: index out of range");
  Node n = make(Op::scatter_add);
  n.index = std::move(index);
  n.aux = out_shape;
  return detail::record(std::move(n), {a});
}

Tensor avg_pool(const Tensor& x, std::size_t window) {
  check_pool("avg_pool", x, window);
  Node n = make(Op::avg_pool);
  n.stride = window;
  return detail::record(std::move(n), {x});
}

Tensor avg_unpool(const Tensor& g, std::size_t window, const Shape& input_shape) {
  require_rank("avg_unpool", g, 3);
  if (input_shape.size() != 3 || window == 0 || input_shape[0] != g.shape()[0] ||
      input_shape[1] / window != g.shape()[1] || input_shape[2] / window != g.shape()[2])
    shape_error("avg_unpool", g.shape(), input_shape);
  Node n = make(Op::avg_unpool);
  n.stride = window;
  n.aux = input_shape;
  return detail::record(std::move(n), {g});
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 1);
  return detail::record(make(Op::softmax), {logits});
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank("cross_entropy", logits, 1);
  if (label >= logits.numel())
    throw Error(Errc::invalid_argument, "cross_entropy: label " + std::to_string(label) + " out of range");
  Node n = make(Op::cross_entropy);
  n.index = {label};
  return detail::record(std::move(n), {logits});
}

}  // namespace ad
}  // namespace xhm
