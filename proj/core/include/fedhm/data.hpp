#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedhm/tensor.hpp"

namespace fedhm {

/// Labelled samples: features are (N, C, H, W) or (N, d).
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string split = "train";

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const;
  /// N > 0, labels in [0, classes), features finite and aligned with labels.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Features of the listed samples stacked into a batch.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

/// Class-conditional Gaussian clusters around per-class template vectors.
/// Templates have +-1 entries and are rescaled if needed so that every pair
/// of class means is at least 4 * noise apart.
struct BlobSpec {
  std::size_t classes = 4;
  Shape sample_shape{1, 8, 8};
  double noise = 0.3;
  std::uint64_t seed = 0;  // selects the class templates

  friend bool operator==(const BlobSpec&, const BlobSpec&) = default;
};

/// (classes, prod(sample_shape)) matrix of class means.
Tensor blob_means(const BlobSpec& spec);

/// `per_class` samples of every class, interleaved by class, with noise drawn
/// from `sample_seed`.
Dataset synth_blobs(const BlobSpec& spec, std::size_t per_class, std::uint64_t sample_seed,
                    std::string split = "train");

/// IDX (MNIST) image/label pair. Pixels are scaled to [0, 1]; images become
/// (N, 1, H, W).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// `label,f0,f1,...` rows with an optional header line. Features become (N, d).
Dataset load_csv(const std::filesystem::path& path);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-channel statistics (axis 1; every feature of a vector dataset is its own channel).
ChannelStats channel_stats(const Dataset& data);
/// Maps every channel to zero mean / unit variance under `stats`. Channels with
/// zero spread are only centred.
void normalize(Dataset& data, const ChannelStats& stats);

}  // namespace fedhm
