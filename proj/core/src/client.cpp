#include "fedhm/client.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "fedhm/errors.hpp"
#include "fedhm/layers.hpp"
#include "fedhm/network.hpp"

namespace fedhm {

LocalResult local_update(const Model& model, const Dataset& data, const LocalTrainingConfig& config,
                         std::uint64_t shuffle_seed) {
  if (data.size() == 0) throw ValueError("local update on an empty client dataset");
  if (config.epochs == 0) throw ValueError("local epochs must be at least 1");
  if (config.batch_size == 0) throw ValueError("batch size must be at least 1");
  config.sgd.validate();

  LocalResult result{model, {}, 0};
  SgdState state{config.sgd, {}};
  std::mt19937_64 rng(shuffle_seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const Tensor x = data.gather(batch);
      labels.clear();
      for (std::size_t i : batch) labels.push_back(data.labels[i]);

      Trace trace;
      const Tensor logits = forward_train(result.model, x, trace);
      const nn::LossResult loss = nn::softmax_cross_entropy(logits, labels);
      const Gradients grads = backward(result.model, trace, loss.grad);
      sgd_step(result.model, grads.params, state);

      loss_sum += loss.loss * static_cast<double>(batch.size());
      result.samples_processed += batch.size();
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return result;
}

Client::Client(std::size_t id, Dataset data) : id_(id), data_(std::move(data)) {
  data_.validate();
}

ClientUpdate Client::train(const Model& dispatched, const LocalTrainingConfig& config,
                           std::uint64_t shuffle_seed) const {
  LocalResult r = local_update(dispatched, data_, config, shuffle_seed);
  return ClientUpdate{id_, std::move(r.model), data_.size(), r.samples_processed,
                      r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back()};
}

}  // namespace fedhm
