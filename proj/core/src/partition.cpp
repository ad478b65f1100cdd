#include "fedhm/partition.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>

#include "fedhm/errors.hpp"

namespace fedhm {

namespace {

constexpr int kMaxDirichletRedraws = 100;

void check_sizes(std::size_t n, std::size_t p) {
  if (p == 0) throw ValueError("partition needs at least one client");
  if (p > n) {
    throw ValueError("cannot give " + std::to_string(p) + " clients a sample each from " +
                     std::to_string(n) + " samples");
  }
}

std::vector<double> dirichlet(std::size_t p, double alpha, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> w(p);
  double sum = 0.0;
  for (auto& v : w) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    // Every draw underflowed (tiny alpha): the limit is a point mass.
    std::uniform_int_distribution<std::size_t> pick(0, p - 1);
    std::fill(w.begin(), w.end(), 0.0);
    w[pick(rng)] = 1.0;
    return w;
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

Partition partition_iid(std::size_t n, std::size_t p, std::uint64_t seed) {
  check_sizes(n, p);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Partition out{std::vector<std::vector<std::size_t>>(p), "iid", 0.0, seed};
  std::size_t at = 0;
  for (std::size_t c = 0; c < p; ++c) {
    const std::size_t take = n / p + (c < n % p ? 1 : 0);
    out.clients[c].assign(perm.begin() + static_cast<long>(at), perm.begin() + static_cast<long>(at + take));
    at += take;
  }
  return out;
}

Partition partition_dirichlet(std::span<const int> labels, std::size_t p, double alpha,
                              std::uint64_t seed) {
  if (!(alpha > 0.0)) throw ValueError("Dirichlet concentration must be positive");
  check_sizes(labels.size(), p);
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::mt19937_64 rng(seed);
  Partition out{{}, "dirichlet", alpha, seed};
  for (int attempt = 0; attempt < kMaxDirichletRedraws; ++attempt) {
    out.clients.assign(p, {});
    for (auto& [label, idx] : by_class) {
      std::vector<std::size_t> shuffled = idx;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto share = dirichlet(p, alpha, rng);
      const double total = static_cast<double>(shuffled.size());
      double cum = 0.0;
      std::size_t begin = 0;
      for (std::size_t c = 0; c < p; ++c) {
        cum += share[c];
        std::size_t end = c + 1 == p ? shuffled.size()
                                     : std::min(shuffled.size(), static_cast<std::size_t>(std::llround(cum * total)));
        end = std::max(end, begin);
        out.clients[c].insert(out.clients[c].end(), shuffled.begin() + static_cast<long>(begin),
                              shuffled.begin() + static_cast<long>(end));
        begin = end;
      }
    }
    if (std::none_of(out.clients.begin(), out.clients.end(), [](const auto& c) { return c.empty(); })) break;
  }

  for (std::size_t c = 0; c < p; ++c) {
    if (!out.clients[c].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t d = 1; d < p; ++d)
      if (out.clients[d].size() > out.clients[donor].size()) donor = d;
    out.clients[c].push_back(out.clients[donor].back());
    out.clients[donor].pop_back();
  }
  for (auto& c : out.clients) std::sort(c.begin(), c.end());
  return out;
}

void validate_partition(const Partition& partition, std::size_t n) {
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (std::size_t c = 0; c < partition.clients.size(); ++c) {
    if (partition.clients[c].empty()) throw ValueError("client " + std::to_string(c) + " received no samples");
    for (std::size_t i : partition.clients[c]) {
      if (i >= n) throw ValueError("sample index " + std::to_string(i) + " out of range");
      if (seen[i]) throw ValueError("sample " + std::to_string(i) + " assigned twice");
      seen[i] = 1;
      ++total;
    }
  }
  if (total != n) throw ValueError("partition covers " + std::to_string(total) + " of " + std::to_string(n) + " samples");
}

}  // namespace fedhm
