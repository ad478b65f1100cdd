#pragma once

#include <filesystem>
#include <string>

#include "fedhm/data.hpp"
#include "fedhm/metrics.hpp"
#include "fedhm/server.hpp"

namespace fedhm {

struct ModelConfig {
  std::string name = "tiny_cnn";  // tiny_cnn | resnet18 | resnet34; ignored when spec_file is set
  std::string spec_file;
  std::size_t classes = 0;
  Shape input_shape;
  std::vector<std::size_t> widths{8, 16, 32};  // tiny_cnn only

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | idx | csv
  BlobSpec blobs;
  std::size_t train_per_class = 64;
  std::size_t test_per_class = 64;
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_csv, test_csv;
  Shape sample_shape;  // csv: reshape each row; empty keeps (d)
  bool normalize = false;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct PartitionConfig {
  std::string scheme = "iid";  // iid | dirichlet
  double alpha = 0.5;

  friend bool operator==(const PartitionConfig&, const PartitionConfig&) = default;
};

struct ExperimentConfig {
  ModelConfig model;
  DatasetConfig dataset;
  std::size_t clients = 20;
  PartitionConfig partition;
  FederatedConfig federated;
  std::string output_dir = "fedhm_out";
  RecordFormat format = RecordFormat::Csv;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses a JSON config, applies defaults and validates every field.
/// Relative file paths are resolved against `base_dir`.
ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Fully resolved config as JSON; parse_config_text(config_to_json(c)) == c.
std::string config_to_json(const ExperimentConfig& config);

}  // namespace fedhm
