#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedhm/client.hpp"
#include "fedhm/metrics.hpp"
#include "fedhm/modelspec.hpp"

namespace fedhm {

enum class Method {
  FedHM,            // per-level low-rank factorization, recovery, Eq.-style softmax weights
  FedAvg,           // homogeneous full model, data-size weighted mean
  WidthSlimFedAvg,  // homogeneous FedAvg on one width-slimmed model
  HeteroFLChannel,  // nested width-slim clients, per-coordinate channel aggregation
};

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

enum class ScheduleMode { Fixed, Dynamic };

std::string_view to_string(ScheduleMode m);
ScheduleMode schedule_mode_from_string(std::string_view s);

/// Capability level per client, 1-based. Fixed mode uses `assignment`
/// (default: client p gets level (p mod levels) + 1); dynamic mode draws a
/// uniform level per client per round from (seed, round).
struct CapabilitySchedule {
  ScheduleMode mode = ScheduleMode::Fixed;
  std::vector<std::size_t> assignment;
  std::uint64_t seed = 0;
  std::size_t levels = 1;
};

std::vector<std::size_t> resolve_capabilities(const CapabilitySchedule& schedule, std::size_t num_clients,
                                              std::size_t round);

struct FederatedConfig {
  Method method = Method::FedHM;
  std::size_t rounds = 1;
  double sample_fraction = 0.5;
  LocalTrainingConfig local;
  std::vector<double> rank_ratios{0.5, 0.25, 0.125, 0.083};
  std::vector<double> width_ratios{0.64, 0.5, 0.4, 0.35};
  HybridPlan plan;  // gamma is overridden per level
  double tau = 0.0;  // 0 means "unset": infinite for fixed schedules, 5 for dynamic
  ScheduleMode schedule = ScheduleMode::Fixed;
  std::vector<std::size_t> assignment;
  std::uint64_t seed_init = 0;
  std::uint64_t seed_sample = 1;
  std::uint64_t seed_data = 2;
  std::size_t threads = 0;  // 0 = serial
  bool record_time = false;

  /// Number of capability levels the method distinguishes.
  friend bool operator==(const FederatedConfig&, const FederatedConfig&) = default;

  std::size_t levels() const;
  double resolved_tau() const;
  void validate(std::size_t num_clients) const;
};

/// Number of participants per round: max(1, round(C * P)).
std::size_t participants_per_round(double sample_fraction, std::size_t num_clients);

/// `count` distinct client indices drawn without replacement, ascending.
std::vector<std::size_t> sample_participants(std::size_t num_clients, std::size_t count, std::mt19937_64& rng);

/// Seed of client `id`'s local shuffling stream in `round`.
std::uint64_t client_seed(std::uint64_t seed_data, std::size_t round, std::size_t id);

/// Model handed to capability `level` (1-based) given the current global model.
Model level_model(const Model& global, const FederatedConfig& config, std::size_t level);

/// Initial global model of a run (full-width, or the slim model for WidthSlimFedAvg).
Model initial_global(const ModelSpec& spec, const FederatedConfig& config);

struct RunResult {
  Model global;
  std::vector<RoundRecord> records;
};

using RoundCallback = std::function<void(const RoundRecord&)>;

RunResult server_execute(const ModelSpec& spec, const FederatedConfig& config, std::span<const Client> clients,
                         const Dataset& test, const RoundCallback& on_record = {});

}  // namespace fedhm
