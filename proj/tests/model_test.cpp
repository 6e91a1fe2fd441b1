#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_support.hpp"
#include "xhm/error.hpp"
#include "xhm/model.hpp"

using namespace xhm;
using xhm::testing::random_array;

namespace {

Architecture small_conv() {
  Architecture a;
  a.input = {1, 8, 8};
  a.classes = 3;
  a.layers = {LayerSpec::conv(3, 3, 1, 2), LayerSpec::activation(), LayerSpec::max_pool(2),
              LayerSpec::flatten(), LayerSpec::dense(18, 3)};
  return a;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("xhm_model_test_" + name);
}

}  // namespace

TEST(Model, ZeroNetGivesZeroLogits) {
  const Network net = Network::zeros(reference_architecture());
  std::mt19937_64 rng(3);
  const Array logits = predict(net, random_array({1, 28, 28}, rng, 0.0, 1.0));
  ASSERT_EQ(logits.shape, (Shape{10}));
  for (double v : logits.data) EXPECT_EQ(v, 0.0);
}

TEST(Model, IdentityDenseNet) {
  Architecture a{{3}, 3, {LayerSpec::dense(3, 3)}};
  LayerParams p{Array({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Array({3}, 0.0)};
  const Network net(a, {p});
  EXPECT_EQ(predict(net, Array({3}, {1, 0, 0})), Array({3}, {1, 0, 0}));
}

TEST(Model, WrongInputShapeIsRejected) {
  const Network net = Network::zeros(reference_architecture());
  EXPECT_EQ(code_of([&] { predict(net, Array({1, 27, 28})); }), Errc::shape_mismatch);
}

TEST(Model, ArchitectureMustCompose) {
  Architecture a = small_conv();
  a.layers[4] = LayerSpec::dense(17, 3);
  EXPECT_EQ(code_of([&] { a.layer_shapes(); }), Errc::spec_mismatch);
  Architecture no_flatten{{1, 4, 4}, 2, {LayerSpec::conv(4, 4, 1, 2)}};
  EXPECT_EQ(code_of([&] { no_flatten.layer_shapes(); }), Errc::spec_mismatch);
  Architecture two_flatten{{1, 4, 4}, 2, {LayerSpec::flatten(), LayerSpec::flatten(), LayerSpec::dense(16, 2)}};
  EXPECT_EQ(code_of([&] { two_flatten.layer_shapes(); }), Errc::spec_mismatch);
  EXPECT_EQ(reference_architecture().layer_shapes().back(), (Shape{10}));
}

TEST(Model, SoftplusBetaMustBePositive) {
  EXPECT_EQ(code_of([] { ActivationKind::softplus(0.0); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { ActivationKind::softplus(-1.0); }), Errc::invalid_argument);
}

TEST(Model, LargeBetaSoftplusMatchesRelu) {
  const Network net = Network::random(reference_architecture(), 11);
  const Network smooth = set_activation_mode(net, ActivationKind::softplus(1e6));
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    const Array x = random_array({1, 28, 28}, rng, 0.0, 1.0);
    const Array a = predict(net, x), b = predict(smooth, x);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-4);
  }
}

TEST(Model, SwitchingBackToReluIsBitExact) {
  const Network net = Network::random(reference_architecture(), 12);
  const Network back = set_activation_mode(set_activation_mode(net, ActivationKind::softplus(3.0)),
                                           ActivationKind::relu());
  std::mt19937_64 rng(6);
  const Array x = random_array({1, 28, 28}, rng, 0.0, 1.0);
  EXPECT_EQ(predict(net, x), predict(back, x));
  EXPECT_EQ(parameter_checksum(net), parameter_checksum(back));
}

TEST(Model, SoftplusAtZeroInputGivesLn2) {
  Architecture a = small_conv();
  std::vector<LayerParams> params = Network::random(a, 2).parameters();
  for (LayerParams& p : params) p.bias = Array();
  const Network net(a, params, ActivationKind::softplus(1.0));
  ad::Tape tape;
  ForwardTrace trace;
  net.forward(tape.constant(Array({1, 8, 8}, 0.0)), &trace);
  for (double v : trace.outputs[1].data()) EXPECT_NEAR(v, std::log(2.0), 1e-15);
}

TEST(Model, SoftplusGapShrinksWithBeta) {
  const Network net = Network::random(small_conv(), 9);
  std::mt19937_64 rng(10);
  const Array x = random_array({1, 8, 8}, rng, 0.0, 1.0);
  const Array relu = predict(net, x);
  double previous = INFINITY;
  for (double beta : {10.0, 100.0, 1000.0}) {
    const Array smooth = predict(set_activation_mode(net, ActivationKind::softplus(beta)), x);
    double gap = 0.0;
    for (std::size_t i = 0; i < relu.size(); ++i) gap = std::max(gap, std::abs(relu[i] - smooth[i]));
    EXPECT_LT(gap, previous);
    previous = gap;
  }
}

TEST(Model, PredictIsPure) {
  const Network net = Network::random(reference_architecture(), 4);
  std::mt19937_64 rng(8);
  const Array x = random_array({1, 28, 28}, rng, 0.0, 1.0);
  EXPECT_EQ(predict(net, x), predict(net, x));
}

TEST(Weights, RoundTripIsBitExact) {
  const Network net = Network::random(reference_architecture(), 21);
  const auto path = temp_file("roundtrip.xhw");
  save_weights(net, path);
  const Network back = load_weights(reference_architecture(), path);
  EXPECT_EQ(back, net);
  std::filesystem::remove(path);
}

TEST(Weights, HeaderLayout) {
  Architecture a{{2}, 1, {LayerSpec::dense(2, 1)}};
  const Network net(a, {LayerParams{Array({1, 2}, {1.0, -2.0}), Array({1}, {0.5})}});
  const auto path = temp_file("layout.xhw");
  save_weights(net, path);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.size(), 4u + 4 + 1 + 1 + 8 + 16 + 4 + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "XHW1");
  EXPECT_EQ(bytes[4], 1);  // layer count, little-endian
  EXPECT_EQ(bytes[7], 0);
  EXPECT_EQ(bytes[8], 0);  // dense tag
  EXPECT_EQ(bytes[9], 2);  // rank
  EXPECT_EQ(bytes[10], 1);
  EXPECT_EQ(bytes[14], 2);
  // 1.0 as little-endian IEEE-754: 00 .. 00 f0 3f
  EXPECT_EQ(bytes[18 + 6], 0xf0);
  EXPECT_EQ(bytes[18 + 7], 0x3f);
  EXPECT_EQ(bytes[34], 1);  // bias present
  std::filesystem::remove(path);
}

TEST(Weights, BadMagic) {
  const auto path = temp_file("magic.xhw");
  save_weights(Network::random(small_conv(), 1), path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.write("XXXX", 4);
  }
  EXPECT_EQ(code_of([&] { load_weights(small_conv(), path); }), Errc::bad_magic);
  std::filesystem::remove(path);
}

TEST(Weights, TruncationNamesLayer) {
  const auto path = temp_file("trunc.xhw");
  save_weights(Network::random(small_conv(), 1), path);
  // conv layer 0: header 8 + tag/rank 2 + dims 16 + 18 weights; cut inside them
  std::filesystem::resize_file(path, 8 + 2 + 16 + 8 * 5);
  try {
    load_weights(small_conv(), path);
    FAIL() << "expected truncation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncated);
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos) << e.what();
  }
  std::filesystem::remove(path);
}

TEST(Weights, ShapeMismatchAgainstSpec) {
  const auto path = temp_file("shape.xhw");
  save_weights(Network::random(small_conv(), 1), path);
  Architecture other = small_conv();
  other.layers[0] = LayerSpec::conv(3, 3, 1, 3);
  other.layers[4] = LayerSpec::dense(27, 3);
  EXPECT_EQ(code_of([&] { load_weights(other, path); }), Errc::spec_mismatch);
  std::filesystem::remove(path);
}

TEST(Train, SeparableTwoPointSet) {
  Dataset d;
  d.channels = 1;
  d.rows = 1;
  d.cols = 2;
  d.pixels = {1.0, 0.0, 0.0, 1.0};
  d.labels = {0, 1};
  Architecture a{{1, 1, 2}, 2, {LayerSpec::flatten(), LayerSpec::dense(2, 2)}};
  TrainOptions opt;
  opt.epochs = 1;
  opt.batch_size = 1;
  opt.learning_rate = 1.0;
  const TrainResult r = train(a, d, nullptr, opt);
  EXPECT_EQ(r.train_accuracy, 1.0);
  EXPECT_EQ(r.epoch_loss.size(), 1u);
}

TEST(Train, SameSeedSameParameters) {
  std::mt19937_64 rng(1);
  Dataset d;
  d.rows = d.cols = 8;
  for (int i = 0; i < 24; ++i) {
    const Array img = random_array({1, 8, 8}, rng, 0.0, 1.0);
    d.pixels.insert(d.pixels.end(), img.data.begin(), img.data.end());
    d.labels.push_back(static_cast<std::uint8_t>(i % 3));
  }
  TrainOptions opt;
  opt.epochs = 2;
  opt.batch_size = 5;
  const TrainResult a = train(small_conv(), d, &d, opt);
  const TrainResult b = train(small_conv(), d, &d, opt);
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  opt.seed = 2;
  EXPECT_NE(parameter_checksum(train(small_conv(), d, &d, opt).net), parameter_checksum(a.net));
}

TEST(Train, EmptyDatasetIsRejected) {
  Dataset d;
  d.rows = d.cols = 8;
  EXPECT_EQ(code_of([&] { train(small_conv(), d, nullptr, {}); }), Errc::invalid_argument);
}

TEST(Train, LabelOutsideClassesIsRejected) {
  Dataset d;
  d.rows = d.cols = 8;
  d.pixels.assign(64, 0.5);
  d.labels = {7};
  EXPECT_EQ(code_of([&] { train(small_conv(), d, nullptr, {}); }), Errc::invalid_argument);
}
