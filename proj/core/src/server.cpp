#include "fedhm/server.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <thread>

#include "fedhm/accounting.hpp"
#include "fedhm/aggregate.hpp"
#include "fedhm/errors.hpp"

namespace fedhm {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::FedHM: return "fedhm";
    case Method::FedAvg: return "fedavg";
    case Method::WidthSlimFedAvg: return "widthslim-fedavg";
    case Method::HeteroFLChannel: return "heterofl-channel";
  }
  return "?";
}

Method method_from_string(std::string_view s) {
  for (Method m : {Method::FedHM, Method::FedAvg, Method::WidthSlimFedAvg, Method::HeteroFLChannel})
    if (to_string(m) == s) return m;
  throw ValueError("unknown method `" + std::string(s) + "`");
}

std::string_view to_string(ScheduleMode m) { return m == ScheduleMode::Fixed ? "fixed" : "dynamic"; }

ScheduleMode schedule_mode_from_string(std::string_view s) {
  if (s == "fixed") return ScheduleMode::Fixed;
  if (s == "dynamic") return ScheduleMode::Dynamic;
  throw ValueError("unknown schedule `" + std::string(s) + "`");
}

std::vector<std::size_t> resolve_capabilities(const CapabilitySchedule& schedule, std::size_t num_clients,
                                              std::size_t round) {
  if (schedule.levels == 0) throw ValueError("schedule needs at least one level");
  std::vector<std::size_t> levels(num_clients);
  if (schedule.mode == ScheduleMode::Fixed) {
    if (!schedule.assignment.empty() && schedule.assignment.size() != num_clients)
      throw ValueError("fixed assignment must list one level per client");
    for (std::size_t p = 0; p < num_clients; ++p) {
      levels[p] = schedule.assignment.empty() ? p % schedule.levels + 1 : schedule.assignment[p];
      if (levels[p] < 1 || levels[p] > schedule.levels)
        throw ValueError("client " + std::to_string(p) + " assigned to level " + std::to_string(levels[p]) +
                         " outside 1.." + std::to_string(schedule.levels));
    }
    return levels;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(schedule.seed), static_cast<std::uint32_t>(schedule.seed >> 32),
                    static_cast<std::uint32_t>(round)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<std::size_t> pick(1, schedule.levels);
  for (auto& l : levels) l = pick(rng);
  return levels;
}

std::size_t FederatedConfig::levels() const {
  switch (method) {
    case Method::FedHM: return rank_ratios.size();
    case Method::HeteroFLChannel: return width_ratios.size();
    default: return 1;
  }
}

double FederatedConfig::resolved_tau() const {
  if (tau > 0.0) return tau;
  return schedule == ScheduleMode::Fixed ? kInfiniteTemperature : 5.0;
}

void FederatedConfig::validate(std::size_t num_clients) const {
  if (num_clients == 0) throw ValueError("at least one client is required");
  if (!(sample_fraction > 0.0) || sample_fraction > 1.0) throw ValueError("sample fraction must lie in (0, 1]");
  if (tau < 0.0 || std::isnan(tau)) throw ValueError("temperature must be positive");
  local.sgd.validate();
  if (local.epochs == 0) throw ValueError("local epochs must be at least 1");
  if (local.batch_size == 0) throw ValueError("batch size must be at least 1");
  const auto check_ratios = [](const std::vector<double>& r, const char* what) {
    if (r.empty()) throw ValueError(std::string(what) + " list is empty");
    for (double v : r)
      if (!(v > 0.0) || v > 1.0) throw ValueError(std::string(what) + " must lie in (0, 1]");
  };
  if (method == Method::FedHM) check_ratios(rank_ratios, "rank ratio");
  if (method == Method::HeteroFLChannel || method == Method::WidthSlimFedAvg) check_ratios(width_ratios, "width ratio");
  if (!assignment.empty()) {
    CapabilitySchedule s{ScheduleMode::Fixed, assignment, 0, levels()};
    resolve_capabilities(s, num_clients, 1);
  }
}

std::size_t participants_per_round(double sample_fraction, std::size_t num_clients) {
  const auto k = static_cast<std::size_t>(std::llround(sample_fraction * static_cast<double>(num_clients)));
  return std::clamp<std::size_t>(k, 1, num_clients);
}

std::vector<std::size_t> sample_participants(std::size_t num_clients, std::size_t count, std::mt19937_64& rng) {
  if (count > num_clients) throw ValueError("cannot sample more participants than clients");
  std::vector<std::size_t> pool(num_clients);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, num_clients - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::uint64_t client_seed(std::uint64_t seed_data, std::size_t round, std::size_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_data), static_cast<std::uint32_t>(seed_data >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(id), 0x6c6f63u};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Model level_model(const Model& global, const FederatedConfig& config, std::size_t level) {
  if (level < 1 || level > config.levels()) throw ValueError("capability level out of range");
  switch (config.method) {
    case Method::FedHM: {
      const double gamma = config.rank_ratios[level - 1];
      if (gamma >= 1.0) return global;
      HybridPlan plan = config.plan;
      plan.gamma = gamma;
      return factorize_model(global, plan);
    }
    case Method::HeteroFLChannel: {
      const double omega = config.width_ratios[level - 1];
      if (omega >= 1.0) return global;
      return slice_model(global, width_slim(global.spec, omega));
    }
    default: return global;
  }
}

Model initial_global(const ModelSpec& spec, const FederatedConfig& config) {
  ModelSpec base = unfactorized(spec);
  if (config.method == Method::WidthSlimFedAvg && config.width_ratios.front() < 1.0)
    base = width_slim(base, config.width_ratios.front());
  return materialize(base, config.seed_init);
}

namespace {

struct Task {
  std::size_t client = 0;  // index into the client span
  std::size_t level = 0;
};

template <class Fn>
void run_parallel(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

RunResult server_execute(const ModelSpec& spec, const FederatedConfig& config, std::span<const Client> clients,
                         const Dataset& test, const RoundCallback& on_record) {
  config.validate(clients.size());
  RunResult result{initial_global(spec, config), {}};
  Model& global = result.global;
  if (config.rounds == 0) return result;

  const std::size_t levels = config.levels();
  const CapabilitySchedule schedule{config.schedule, config.assignment, config.seed_sample, levels};
  const std::size_t per_round = participants_per_round(config.sample_fraction, clients.size());
  const double tau = config.resolved_tau();
  std::mt19937_64 sample_rng(config.seed_sample);

  // Models served to each level, derived from the current global model.
  std::vector<std::optional<Model>> served(levels);
  const auto served_model = [&](std::size_t level) -> const Model& {
    auto& slot = served[level - 1];
    if (!slot) slot = level_model(global, config, level);
    return *slot;
  };

  std::uint64_t cum_macs_total = 0;
  std::vector<std::uint64_t> cum_macs_level(levels, 0);

  for (std::size_t round = 1; round <= config.rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto caps = resolve_capabilities(schedule, clients.size(), round);
    const auto chosen = sample_participants(clients.size(), per_round, sample_rng);

    std::vector<Task> tasks;
    for (std::size_t c : chosen) tasks.push_back({c, caps[c]});
    for (const Task& t : tasks) served_model(t.level);

    std::vector<ClientUpdate> updates(tasks.size());
    run_parallel(tasks.size(), config.threads, [&](std::size_t i) {
      const Client& client = clients[tasks[i].client];
      try {
        updates[i] = client.train(*served[tasks[i].level - 1], config.local,
                                  client_seed(config.seed_data, round, client.id()));
      } catch (const std::exception& e) {
        throw Error("round " + std::to_string(round) + ", client " + std::to_string(client.id()) + ": " + e.what());
      }
    });

    std::uint64_t bytes_up = 0, bytes_down = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const Model& sent = *served[tasks[i].level - 1];
      bytes_down += comm_bytes(sent);
      bytes_up += comm_bytes(updates[i].model);
      const std::uint64_t macs = count_macs(sent.spec) * updates[i].samples_processed;
      cum_macs_total += macs;
      cum_macs_level[tasks[i].level - 1] += macs;
    }

    // Aggregation consumes results in ascending client order (tasks are sorted).
    std::vector<Model> trained;
    trained.reserve(updates.size());
    for (auto& u : updates) trained.push_back(std::move(u.model));
    switch (config.method) {
      case Method::FedHM: {
        std::vector<double> gammas;
        for (std::size_t i = 0; i < trained.size(); ++i) {
          trained[i] = recover_model(trained[i]);
          gammas.push_back(std::min(1.0, config.rank_ratios[tasks[i].level - 1]));
        }
        global = aggregate(trained, gammas, tau);
        break;
      }
      case Method::FedAvg:
      case Method::WidthSlimFedAvg: {
        std::vector<std::size_t> sizes;
        for (const auto& u : updates) sizes.push_back(u.num_samples);
        global = fedavg_round(trained, sizes);
        break;
      }
      case Method::HeteroFLChannel:
        global = heterofl_aggregate(global, trained);
        break;
    }
    std::fill(served.begin(), served.end(), std::nullopt);

    const double seconds =
        config.record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
    const double global_acc = evaluate_top1(global, test);
    std::vector<RoundRecord> rows;
    rows.push_back({round, 0, count_params(global), global_acc, bytes_up, bytes_down, cum_macs_total, seconds});
    for (std::size_t level = 1; level <= levels; ++level) {
      const Model& m = served_model(level);
      const double acc = m.spec == global.spec ? global_acc : evaluate_top1(m, test);
      const std::uint64_t bytes = comm_bytes(m);
      rows.push_back({round, level, count_params(m), acc, bytes, bytes, cum_macs_level[level - 1], seconds});
    }
    for (const auto& r : rows) {
      result.records.push_back(r);
      if (on_record) on_record(r);
    }
  }
  return result;
}

}  // namespace fedhm
