#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedhm/config.hpp"

namespace fedhm {

ModelSpec build_model_spec(const ExperimentConfig& config);

struct ExperimentData {
  Dataset train;
  Dataset test;
};

/// Loads (or synthesizes) the train/test split the config describes.
ExperimentData load_experiment_data(const ExperimentConfig& config);

/// Partitions the training set and wraps every shard in a Client.
std::vector<Client> make_clients(const ExperimentConfig& config, const Dataset& train);

/// Honours FEDHM_THREADS (0 = serial) when it is set.
void apply_environment(ExperimentConfig& config);

struct RunArtifacts {
  std::filesystem::path metrics;
  std::filesystem::path weights;
  std::filesystem::path resolved_config;
  RunResult result;
};

/// Trains end to end and writes metrics, final weights and the resolved
/// config into config.output_dir.
RunArtifacts run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

struct LevelSummary {
  std::size_t level = 0;  // 0 = full reference model
  double ratio = 1.0;     // rank or width ratio of the level
  std::uint64_t params = 0;
  std::uint64_t macs = 0;   // forward, per sample
  std::uint64_t bytes = 0;  // one transfer
  double compression = 1.0;  // params / full params
};

struct Description {
  std::string model;
  Method method = Method::FedHM;
  std::vector<LevelSummary> levels;
  std::size_t participants = 0;
  std::uint64_t round_bytes = 0;  // upload + download for one round under the level-1.. schedule at round 1
};

/// Accounting only, no training and no data loading.
Description describe(const ExperimentConfig& config);
std::string format_description(const Description& d);

}  // namespace fedhm
