#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xhm/array.hpp"
#include "xhm/autodiff.hpp"
#include "xhm/dataset.hpp"

namespace xhm {

/// Nonlinearity used by every activation layer of a network.
class ActivationKind {
 public:
  enum class Kind : std::uint8_t { relu, softplus };

  static ActivationKind relu() { return ActivationKind(Kind::relu, 0.0); }
  /// Throws Errc::invalid_argument unless beta > 0.
  static ActivationKind softplus(double beta);

  Kind kind() const { return kind_; }
  double beta() const { return beta_; }
  bool is_relu() const { return kind_ == Kind::relu; }
  std::string describe() const;

  friend bool operator==(const ActivationKind&, const ActivationKind&) = default;

 private:
  ActivationKind(Kind kind, double beta) : kind_(kind), beta_(beta) {}
  Kind kind_;
  double beta_;
};

/// Applies the activation to a tensor.
ad::Tensor activate(const ad::Tensor& x, const ActivationKind& mode);

/// Numeric values double as the layer tag of the weight file.
enum class LayerKind : std::uint8_t { dense = 0, conv = 1, max_pool = 2, avg_pool = 3, activation = 4, flatten = 5 };

const char* layer_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::activation;
  std::size_t in = 0;   // dense: input features; conv: input channels
  std::size_t out = 0;  // dense: output features; conv: output channels
  std::size_t kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1;
  std::size_t window = 0;  // pooling

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv(std::size_t kernel_h, std::size_t kernel_w, std::size_t in, std::size_t out,
                        std::size_t stride = 1);
  static LayerSpec max_pool(std::size_t window);
  static LayerSpec avg_pool(std::size_t window);
  static LayerSpec activation();
  static LayerSpec flatten();

  bool has_parameters() const { return kind == LayerKind::dense || kind == LayerKind::conv; }
  /// [out, in] for dense, [out, in, kh, kw] for conv, empty otherwise.
  Shape weight_shape() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Architecture {
  Shape input;  // [channels, rows, cols] or [features]
  std::size_t classes = 0;
  std::vector<LayerSpec> layers;

  /// Shape after each layer. Throws Errc::spec_mismatch when consecutive
  /// layers do not compose, a conv net reaches a dense layer without exactly
  /// one flatten, or the final output is not [classes].
  std::vector<Shape> layer_shapes() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// conv(5x5,1->8) act maxpool(2) conv(5x5,8->16) act maxpool(2) flatten dense(->10),
/// for 1x28x28 inputs.
Architecture reference_architecture();

struct LayerParams {
  Array weight;
  Array bias;  // empty when the layer has no bias

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Parameters bound to a tape for one forward pass.
struct BoundParams {
  std::vector<ad::Tensor> weights;
  std::vector<ad::Tensor> biases;
};

/// Per-layer tensors captured during a forward pass.
struct ForwardTrace {
  std::vector<ad::Tensor> inputs;
  std::vector<ad::Tensor> outputs;
};

/// Feed-forward classifier. Immutable once built; safe to share read-only.
class Network {
 public:
  /// Throws Errc::spec_mismatch if parameter shapes disagree with `arch`,
  /// Errc::non_finite for NaN/Inf parameters.
  Network(Architecture arch, std::vector<LayerParams> params, ActivationKind mode = ActivationKind::relu());

  static Network zeros(const Architecture& arch);
  /// He-normal weights and zero biases from a seeded generator.
  static Network random(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  const std::vector<LayerParams>& parameters() const { return params_; }
  const ActivationKind& activation() const { return mode_; }
  std::size_t classes() const { return arch_.classes; }
  const Shape& input_shape() const { return arch_.input; }

  /// Copies the parameters onto `tape`, as variables when `trainable`.
  BoundParams bind(const ad::Tape& tape, bool trainable) const;

  /// Logits for `x` using the network's activation mode.
  ad::Tensor forward(const ad::Tensor& x, ForwardTrace* trace = nullptr) const;
  ad::Tensor forward(const ad::Tensor& x, const BoundParams& params, ForwardTrace* trace = nullptr) const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  Architecture arch_;
  std::vector<LayerParams> params_;
  ActivationKind mode_;
};

/// Logits for one input. Throws Errc::shape_mismatch on a wrong input shape.
Array predict(const Network& net, const Array& x);
std::size_t predict_class(const Network& net, const Array& x);
double accuracy(const Network& net, const Dataset& data);

/// Same parameters, every activation layer evaluated with `mode`.
Network set_activation_mode(const Network& net, ActivationKind mode);

/// FNV-1a over the raw parameter bytes.
std::uint64_t parameter_checksum(const Network& net);

void save_weights(const Network& net, const std::filesystem::path& path);
/// Throws Errc::bad_magic, Errc::truncated (naming the layer index) or
/// Errc::spec_mismatch.
Network load_weights(const Architecture& arch, const std::filesystem::path& path);

struct TrainOptions {
  std::size_t epochs = 5;
  double learning_rate = 0.1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
};

struct TrainResult {
  Network net;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;  // 0 without a test set
  std::vector<double> epoch_loss;
};

/// Minibatch SGD on softmax cross-entropy. Deterministic given the seed.
TrainResult train(const Architecture& arch, const Dataset& train_set, const Dataset* test_set,
                  const TrainOptions& options);

}  // namespace xhm
