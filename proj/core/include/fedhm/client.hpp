#pragma once

#include <cstdint>
#include <vector>

#include "fedhm/data.hpp"
#include "fedhm/model.hpp"
#include "fedhm/sgd.hpp"

namespace fedhm {

struct LocalTrainingConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  SgdConfig sgd;

  friend bool operator==(const LocalTrainingConfig&, const LocalTrainingConfig&) = default;
};

struct LocalResult {
  Model model;
  std::vector<double> epoch_losses;  // sample-weighted mean loss of every epoch
  std::uint64_t samples_processed = 0;
};

/// E epochs of mini-batch SGD on `data`, Frobenius decay on factorized
/// weights and weight decay on the rest. Momentum starts from zero.
LocalResult local_update(const Model& model, const Dataset& data, const LocalTrainingConfig& config,
                         std::uint64_t shuffle_seed);

/// What a client sends back: parameters and metadata only.
struct ClientUpdate {
  std::size_t client_id = 0;
  Model model;
  std::size_t num_samples = 0;
  std::uint64_t samples_processed = 0;
  double final_loss = 0.0;
};

/// A simulated participant. Its dataset never leaves the object; the server
/// sees only ClientUpdate values.
class Client {
 public:
  Client(std::size_t id, Dataset data);

  std::size_t id() const noexcept { return id_; }
  std::size_t num_samples() const noexcept { return data_.size(); }

  ClientUpdate train(const Model& dispatched, const LocalTrainingConfig& config,
                     std::uint64_t shuffle_seed) const;

 private:
  std::size_t id_;
  Dataset data_;
};

}  // namespace fedhm
