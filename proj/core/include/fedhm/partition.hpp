#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedhm {

/// Disjoint assignment of sample indices to clients.
struct Partition {
  std::vector<std::vector<std::size_t>> clients;
  std::string scheme;  // "iid" or "dirichlet"
  double alpha = 0.0;
  std::uint64_t seed = 0;

  std::size_t num_clients() const noexcept { return clients.size(); }
};

/// Random permutation cut into P contiguous chunks whose sizes differ by at most one.
Partition partition_iid(std::size_t num_samples, std::size_t num_clients, std::uint64_t seed);

/// Per-class Dirichlet split: for every class draw p ~ Dir(alpha 1_P) and hand
/// out that class's shuffled indices by cumulative share. Draws that leave a
/// client empty are repeated a bounded number of times; any client still empty
/// afterwards receives one sample from the largest client.
Partition partition_dirichlet(std::span<const int> labels, std::size_t num_clients, double alpha,
                              std::uint64_t seed);

/// Throws ValueError unless the lists are disjoint, cover [0, N) exactly and
/// none is empty.
void validate_partition(const Partition& partition, std::size_t num_samples);

}  // namespace fedhm
