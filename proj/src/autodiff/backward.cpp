#include <optional>

#include "tape_state.hpp"
#include "xhm/error.hpp"

namespace xhm::ad {

using detail::Node;
using detail::TapeState;

namespace {

std::vector<double> positive_mask(std::span<const double> g) {
  std::vector<double> m(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) m[i] = g[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

std::vector<double> sign_of(const std::vector<double>& v) {
  std::vector<double> s(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] > 0.0 ? 1.0 : (v[i] < 0.0 ? -1.0 : 0.0);
  return s;
}

class Backprop {
 public:
  Backprop(std::shared_ptr<TapeState> state, std::size_t last, std::vector<bool> reach, const GradOptions& options)
      : state_(std::move(state)), grads_(last + 1), reach_(std::move(reach)), options_(options) {}

  void seed(int id, Tensor g) { grads_[static_cast<std::size_t>(id)] = std::move(g); }

  void run() {
    for (std::size_t i = grads_.size(); i-- > 0;) {
      if (!grads_[i] || !reach_[i]) continue;
      const Node& node = state_->nodes[i];
      if (node.op == Op::leaf) continue;
      propagate(node, static_cast<int>(i), *grads_[i]);
    }
  }

  Tensor result(int id, const Shape& shape) {
    const auto slot = static_cast<std::size_t>(id);
    if (slot < grads_.size() && grads_[slot]) return *grads_[slot];
    NoGradGuard guard(at(0).tape());
    return state_->push(zeros(shape));
  }

 private:
  static Node zeros(const Shape& shape) {
    Node n;
    n.shape = shape;
    n.value.assign(numel(shape), 0.0);
    return n;
  }

  Tensor at(int id) const { return TapeState::handle(state_, id); }
  bool wanted(int id) const { return reach_[static_cast<std::size_t>(id)]; }

  void accumulate(int id, const Tensor& g) {
    auto& slot = grads_[static_cast<std::size_t>(id)];
    slot = slot ? add(*slot, g) : g;
  }

  void propagate(const Node& node, int self, Tensor g);

  std::shared_ptr<TapeState> state_;
  std::vector<std::optional<Tensor>> grads_;
  std::vector<bool> reach_;
  GradOptions options_;
};

void Backprop::propagate(const Node& node, int self, Tensor g) {
  const int a = node.inputs.empty() ? -1 : node.inputs[0];
  const int b = node.inputs.size() > 1 ? node.inputs[1] : -1;
  const Node& in0 = state_->nodes[static_cast<std::size_t>(a)];

  switch (node.op) {
    case Op::leaf:
      return;
    case Op::add:
      if (wanted(a)) accumulate(a, g);
      if (wanted(b)) accumulate(b, g);
      return;
    case Op::sub:
      if (wanted(a)) accumulate(a, g);
      if (wanted(b)) accumulate(b, affine(g, -1.0, 0.0));
      return;
    case Op::mul:
      if (wanted(a)) accumulate(a, mul(g, at(b)));
      if (wanted(b)) accumulate(b, mul(g, at(a)));
      return;
    case Op::div:
      if (wanted(a)) accumulate(a, div(g, at(b)));
      if (wanted(b)) accumulate(b, affine(div(mul(g, at(self)), at(b)), -1.0, 0.0));
      return;
    case Op::affine:
      accumulate(a, affine(g, node.scale, 0.0));
      return;
    case Op::mul_const:
      accumulate(a, mul_const(g, node.constant));
      return;
    case Op::add_const:
      accumulate(a, g);
      return;
    case Op::square:
      accumulate(a, mul(g, affine(at(a), 2.0, 0.0)));
      return;
    case Op::abs:
      accumulate(a, mul_const(g, sign_of(in0.value)));
      return;
    case Op::sqrt: {
      const auto& y = node.value;
      std::vector<double> mask(y.size()), fix(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) {
        mask[i] = y[i] > 0.0 ? 1.0 : 0.0;
        fix[i] = 1.0 - mask[i];
      }
      accumulate(a, mul_const(div(g, add_const(affine(at(self), 2.0, 0.0), std::move(fix))), std::move(mask)));
      return;
    }
    case Op::relu: {
      if (options_.create_graph)
        throw Error(Errc::not_differentiable,
                    "ReLU is not twice differentiable; switch the network activation to Softplus before taking "
                    "gradients of gradients");
      if (options_.guided) g = mul_const(g, positive_mask(g.data()));
      std::vector<double> mask(in0.value.size());
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = in0.value[i] > 0.0 ? 1.0 : 0.0;
      accumulate(a, mul_const(g, std::move(mask)));
      return;
    }
    case Op::softplus:
      if (options_.guided) g = mul_const(g, positive_mask(g.data()));
      accumulate(a, mul(g, sigmoid(at(a), node.scale)));
      return;
    case Op::sigmoid: {
      const Tensor s = at(self);
      accumulate(a, mul(g, affine(mul(s, affine(s, -1.0, 1.0)), node.scale, 0.0)));
      return;
    }
    case Op::sum:
      accumulate(a, expand(g, in0.shape));
      return;
    case Op::expand:
      accumulate(a, reshape(sum(g), in0.shape));
      return;
    case Op::reshape:
      accumulate(a, reshape(g, in0.shape));
      return;
    case Op::transpose:
      accumulate(a, transpose(g));
      return;
    case Op::matmul:
      if (wanted(a)) accumulate(a, matmul(g, transpose(at(b))));
      if (wanted(b)) accumulate(b, matmul(transpose(at(a)), g));
      return;
    case Op::spread_channels:
      accumulate(a, per_channel_sum(g));
      return;
    case Op::per_channel_sum:
      accumulate(a, spread_channels(g, in0.shape));
      return;
    case Op::channel_sum:
      accumulate(a, channel_repeat(g, in0.shape[0]));
      return;
    case Op::channel_repeat:
      accumulate(a, channel_sum(g));
      return;
    case Op::conv2d: {
      const Node& w = state_->nodes[static_cast<std::size_t>(b)];
      if (wanted(a)) accumulate(a, conv2d_input_grad(g, at(b), node.stride, in0.shape));
      if (wanted(b)) accumulate(b, conv2d_weight_grad(at(a), g, node.stride, w.shape));
      return;
    }
    case Op::conv2d_input_grad: {
      // Node computes T(g0, w); <U, T(g0, w)> = <conv(U, w), g0> = <W(U, g0), w>.
      const Node& w = state_->nodes[static_cast<std::size_t>(b)];
      if (wanted(a)) accumulate(a, conv2d(g, at(b), node.stride));
      if (wanted(b)) accumulate(b, conv2d_weight_grad(g, at(a), node.stride, w.shape));
      return;
    }
    case Op::conv2d_weight_grad:
      // Node computes W(x, g0); <V, W(x, g0)> = <T(g0, V), x> = <conv(x, V), g0>.
      if (wanted(a)) accumulate(a, conv2d_input_grad(at(b), g, node.stride, in0.shape));
      if (wanted(b)) accumulate(b, conv2d(at(a), g, node.stride));
      return;
    case Op::max_pool:
    case Op::gather:
      accumulate(a, scatter_add(g, node.index, in0.shape));
      return;
    case Op::scatter_add:
      accumulate(a, gather(g, node.index, in0.shape));
      return;
    case Op::avg_pool:
      accumulate(a, avg_unpool(g, node.stride, in0.shape));
      return;
    case Op::avg_unpool:
      accumulate(a, avg_pool(g, node.stride));
      return;
    case Op::softmax: {
      const Tensor y = at(self);
      accumulate(a, mul(y, sub(g, expand(sum(mul(g, y)), node.shape))));
      return;
    }
    case Op::cross_entropy: {
      std::vector<double> onehot(in0.value.size(), 0.0);
      onehot[node.index[0]] = -1.0;
      accumulate(a, mul(expand(g, in0.shape), add_const(softmax(at(a)), std::move(onehot))));
      return;
    }
  }
  throw Error(Errc::unsupported, std::string("no backward rule for ") + op_name(node.op));
}

}  // namespace

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> wrt, const GradOptions& options) {
  if (!output.defined()) throw Error(Errc::detached, "grad: output tensor is not on a tape");
  if (output.numel() != 1)
    throw Error(Errc::invalid_argument, "grad: output must be scalar, got shape " + to_string(output.shape()));

  const auto& state = TapeState::of(output);
  const auto last = static_cast<std::size_t>(output.id());
  std::vector<bool> target(last + 1, false);
  for (const Tensor& t : wrt) {
    if (!t.defined() || TapeState::of(t) != state)
      throw Error(Errc::detached, "grad: input tensor is not on the output's tape");
    if (!t.requires_grad()) throw Error(Errc::detached, "grad: input tensor does not require a gradient");
    if (static_cast<std::size_t>(t.id()) <= last) target[static_cast<std::size_t>(t.id())] = true;
  }

  // Nodes that depend on a requested input; nothing else needs a gradient.
  std::vector<bool> reach(last + 1, false);
  for (std::size_t i = 0; i <= last; ++i) {
    const Node& n = state->nodes[i];
    if (!n.requires_grad) continue;
    bool r = target[i];
    for (int k : n.inputs) r = r || reach[static_cast<std::size_t>(k)];
    reach[i] = r;
  }

  std::optional<NoGradGuard> guard;
  if (!options.create_graph) guard.emplace(output.tape());

  Backprop bp(state, last, std::move(reach), options);
  {
    NoGradGuard seed_guard(output.tape());
    bp.seed(output.id(), output.tape().constant(Array(output.shape(), 1.0)));
  }
  bp.run();

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Tensor& t : wrt) out.push_back(bp.result(t.id(), t.shape()));
  return out;
}

Tensor grad(const Tensor& output, const Tensor& wrt, const GradOptions& options) {
  return grad(output, std::span<const Tensor>(&wrt, 1), options).front();
}

namespace {
std::vector<Array> to_arrays(const std::vector<Tensor>& ts) {
  std::vector<Array> out;
  out.reserve(ts.size());
  for (const Tensor& t : ts) out.push_back(t.array());
  return out;
}
}  // namespace

std::vector<Array> backward(const Tensor& output, std::span<const Tensor> wrt) { return to_arrays(grad(output, wrt)); }

std::vector<Array> backward_guided(const Tensor& output, std::span<const Tensor> wrt) {
  GradOptions options;
  options.guided = true;
  return to_arrays(grad(output, wrt, options));
}

Recording record_forward(const Program& program, std::span<const Array> inputs) {
  Recording rec;
  for (const Array& a : inputs) rec.inputs.push_back(rec.tape.variable(a));
  rec.output = program(rec.inputs);
  if (!rec.output.defined() || !rec.output.tape().same(rec.tape))
    throw Error(Errc::detached, "record_forward: program output is not on the recording tape");
  return rec;
}

Array grad_of_loss_on_grad(const Program& f, const std::function<Tensor(const Tensor&)>& loss, const Array& x) {
  Recording rec = record_forward(f, std::span<const Array>(&x, 1));
  GradOptions options;
  options.create_graph = true;
  const Tensor first = grad(rec.output, rec.inputs[0], options);
  const Tensor l = loss(first);
  return grad(l, rec.inputs[0]).array();
}

}  // namespace xhm::ad
