#include <algorithm>
#include <numeric>
#include <random>

#include "xhm/error.hpp"
#include "xhm/model.hpp"

namespace xhm {

TrainResult train(const Architecture& arch, const Dataset& train_set, const Dataset* test_set,
                  const TrainOptions& options) {
  if (train_set.size() == 0) throw Error(Errc::invalid_argument, "training set is empty");
  if (options.batch_size == 0) throw Error(Errc::invalid_argument, "batch size must be positive");
  if (!(options.learning_rate > 0.0)) throw Error(Errc::invalid_argument, "learning rate must be positive");
  if (train_set.image_shape() != arch.input)
    throw Error(Errc::shape_mismatch, "training images " + to_string(train_set.image_shape()) +
                                          " vs network input " + to_string(arch.input));
  for (std::uint8_t label : train_set.labels)
    if (label >= arch.classes)
      throw Error(Errc::invalid_argument, "label " + std::to_string(label) + " outside " +
                                              std::to_string(arch.classes) + " classes");

  Network net = Network::random(arch, options.seed);
  std::vector<LayerParams> params = net.parameters();
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{net, 0.0, 0.0, {}};
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      std::vector<LayerParams> step = params;
      for (LayerParams& p : step) {
        std::fill(p.weight.data.begin(), p.weight.data.end(), 0.0);
        std::fill(p.bias.data.begin(), p.bias.data.end(), 0.0);
      }
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        ad::Tape tape;
        const BoundParams bound = net.bind(tape, true);
        std::vector<ad::Tensor> wrt;
        for (std::size_t l = 0; l < params.size(); ++l) {
          if (!bound.weights[l].defined()) continue;
          wrt.push_back(bound.weights[l]);
          wrt.push_back(bound.biases[l]);
        }
        const ad::Tensor loss = ad::cross_entropy(net.forward(tape.constant(train_set.image(idx)), bound),
                                                  train_set.labels[idx]);
        total_loss += loss.item();
        const std::vector<Array> grads = ad::backward(loss, wrt);
        std::size_t g = 0;
        for (std::size_t l = 0; l < params.size(); ++l) {
          if (!bound.weights[l].defined()) continue;
          for (std::size_t i = 0; i < grads[g].size(); ++i) step[l].weight.data[i] += grads[g][i];
          ++g;
          for (std::size_t i = 0; i < grads[g].size(); ++i) step[l].bias.data[i] += grads[g][i];
          ++g;
        }
      }
      const double scale = options.learning_rate / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < params.size(); ++l) {
        for (std::size_t i = 0; i < params[l].weight.data.size(); ++i)
          params[l].weight.data[i] -= scale * step[l].weight.data[i];
        for (std::size_t i = 0; i < params[l].bias.data.size(); ++i)
          params[l].bias.data[i] -= scale * step[l].bias.data[i];
      }
      net = Network(arch, params);
    }
    result.epoch_loss.push_back(total_loss / static_cast<double>(order.size()));
  }
  result.net = net;
  result.train_accuracy = accuracy(net, train_set);
  if (test_set) result.test_accuracy = accuracy(net, *test_set);
  return result;
}

}  // namespace xhm
