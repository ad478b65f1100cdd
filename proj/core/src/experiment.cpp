#include "fedhm/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "fedhm/accounting.hpp"
#include "fedhm/errors.hpp"
#include "fedhm/partition.hpp"
#include "fedhm/serialize.hpp"

namespace fedhm {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

constexpr std::uint32_t kTrainTag = 0x7472;
constexpr std::uint32_t kTestTag = 0x7465;
constexpr std::uint32_t kPartitionTag = 0x7061;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void fit_classes(Dataset& data, std::size_t classes, const char* which) {
  if (data.classes > classes)
    throw ValueError(std::string(which) + " set has labels up to " + std::to_string(data.classes - 1) +
                     " but the model predicts " + std::to_string(classes) + " classes");
  data.classes = classes;
}

}  // namespace

ModelSpec build_model_spec(const ExperimentConfig& config) {
  const ModelConfig& m = config.model;
  ModelSpec spec;
  if (!m.spec_file.empty()) {
    spec = spec_from_json(read_text(m.spec_file));
  } else if (m.name == "tiny_cnn") {
    spec = build_tiny_cnn(m.input_shape[0], m.classes, m.input_shape[1], {m.widths[0], m.widths[1], m.widths[2]});
  } else {
    const auto blocks = m.name == "resnet18" ? std::array<std::size_t, 4>{2, 2, 2, 2}
                                             : std::array<std::size_t, 4>{3, 4, 6, 3};
    spec = build_resnet_cifar(blocks, m.classes, m.name, m.input_shape[0], m.input_shape[1]);
  }
  validate(spec);
  return spec;
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  const DatasetConfig& d = config.dataset;
  ExperimentData out;
  if (d.kind == "synthetic") {
    const std::uint64_t seed = config.federated.seed_data;
    out.train = synth_blobs(d.blobs, d.train_per_class, derive_seed(seed, kTrainTag), "train");
    out.test = synth_blobs(d.blobs, d.test_per_class, derive_seed(seed, kTestTag), "test");
  } else if (d.kind == "idx") {
    out.train = load_idx(d.train_images, d.train_labels);
    out.test = load_idx(d.test_images, d.test_labels);
  } else {
    out.train = load_csv(d.train_csv);
    out.test = load_csv(d.test_csv);
    if (!d.sample_shape.empty()) {
      for (Dataset* s : {&out.train, &out.test}) {
        Shape shape{s->size()};
        shape.insert(shape.end(), d.sample_shape.begin(), d.sample_shape.end());
        s->features = s->features.reshaped(shape);
      }
    }
  }
  out.train.split = "train";
  out.test.split = "test";
  const ModelSpec spec = build_model_spec(config);
  fit_classes(out.train, spec.classes, "training");
  fit_classes(out.test, spec.classes, "test");
  if (out.train.sample_shape() != spec.input_shape || out.test.sample_shape() != spec.input_shape)
    throw DimensionError("dataset samples have shape " + shape_string(out.train.sample_shape()) +
                         " but the model expects " + shape_string(spec.input_shape));
  if (d.normalize) {
    const ChannelStats stats = channel_stats(out.train);
    normalize(out.train, stats);
    normalize(out.test, stats);
  }
  out.train.validate();
  out.test.validate();
  return out;
}

std::vector<Client> make_clients(const ExperimentConfig& config, const Dataset& train) {
  const std::uint64_t seed = derive_seed(config.federated.seed_data, kPartitionTag);
  const Partition part = config.partition.scheme == "iid"
                             ? partition_iid(train.size(), config.clients, seed)
                             : partition_dirichlet(train.labels, config.clients, config.partition.alpha, seed);
  validate_partition(part, train.size());
  std::vector<Client> clients;
  clients.reserve(part.num_clients());
  for (std::size_t p = 0; p < part.num_clients(); ++p) clients.emplace_back(p, train.subset(part.clients[p]));
  return clients;
}

void apply_environment(ExperimentConfig& config) {
  if (const char* env = std::getenv("FEDHM_THREADS")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("FEDHM_THREADS", "expected a non-negative integer");
    config.federated.threads = static_cast<std::size_t>(v);
  }
}

RunArtifacts run_experiment(const ExperimentConfig& config, std::ostream* log) {
  const ModelSpec spec = build_model_spec(config);
  const ExperimentData data = load_experiment_data(config);
  const std::vector<Client> clients = make_clients(config, data.train);

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  RunArtifacts art;
  art.resolved_config = dir / "config.resolved.json";
  write_text(art.resolved_config, config_to_json(config));

  if (log) {
    *log << "method " << to_string(config.federated.method) << ", model " << spec.name << ", " << clients.size()
         << " clients, " << config.federated.rounds << " rounds\n";
    if (config.federated.method == Method::HeteroFLChannel)
      *log << "note: channel-aggregation baseline without static BN or masked loss; a lower bound on HeteroFL\n";
  }
  const RoundCallback progress = [log](const RoundRecord& r) {
    if (log && r.level == 0) *log << "round " << r.round << "  acc " << r.acc_top1 << '\n';
  };
  art.result = server_execute(spec, config.federated, clients, data.test, progress);

  art.metrics = dir / (config.format == RecordFormat::Csv ? "metrics.csv" : "metrics.jsonl");
  emit(art.result.records, art.metrics, config.format);
  art.weights = dir / "final_model.bin";
  save_weights(art.result.global, art.weights);
  if (config.federated.method == Method::HeteroFLChannel)
    write_text(dir / "NOTE.txt",
               "heterofl-channel: channel aggregation only (no static BN, no masked cross-entropy).\n"
               "Results are a lower bound on HeteroFL as published.\n");
  return art;
}

Description describe(const ExperimentConfig& config) {
  const ModelSpec spec = unfactorized(build_model_spec(config));
  const FederatedConfig& f = config.federated;
  Description d;
  d.model = spec.name;
  d.method = f.method;

  const std::uint64_t full_params = count_params(spec);
  const auto summary = [&](std::size_t level, double ratio, const ModelSpec& s) {
    const std::uint64_t p = count_params(s);
    return LevelSummary{level, ratio, p, count_macs(s), comm_bytes(s),
                        static_cast<double>(p) / static_cast<double>(full_params)};
  };
  d.levels.push_back(summary(0, 1.0, spec));

  std::vector<ModelSpec> level_specs;
  for (std::size_t level = 1; level <= f.levels(); ++level) {
    ModelSpec s = spec;
    double ratio = 1.0;
    if (f.method == Method::FedHM) {
      ratio = f.rank_ratios[level - 1];
      if (ratio < 1.0) {
        HybridPlan plan = f.plan;
        plan.gamma = ratio;
        s = make_hybrid(spec, plan);
      }
    } else if (f.method == Method::HeteroFLChannel || f.method == Method::WidthSlimFedAvg) {
      ratio = f.width_ratios[level - 1];
      if (ratio < 1.0) s = width_slim(spec, ratio);
    }
    d.levels.push_back(summary(level, ratio, s));
    level_specs.push_back(std::move(s));
  }

  // Round-1 participants under the configured schedule and sampling seed.
  d.participants = participants_per_round(f.sample_fraction, config.clients);
  std::mt19937_64 rng(f.seed_sample);
  const auto chosen = sample_participants(config.clients, d.participants, rng);
  const auto caps = resolve_capabilities({f.schedule, f.assignment, f.seed_sample, f.levels()}, config.clients, 1);
  for (std::size_t c : chosen) d.round_bytes += 2 * comm_bytes(level_specs[caps[c] - 1]);
  return d;
}

std::string format_description(const Description& d) {
  std::ostringstream os;
  os << "model " << d.model << "  method " << to_string(d.method) << '\n';
  os << "level  ratio     params        MACs/sample      bytes/transfer  compression\n";
  for (const auto& l : d.levels) {
    char line[160];
    std::snprintf(line, sizeof line, "%-6zu %-9.4g %-13llu %-16llu %-15llu %.6f\n", l.level, l.ratio,
                  static_cast<unsigned long long>(l.params), static_cast<unsigned long long>(l.macs),
                  static_cast<unsigned long long>(l.bytes), l.compression);
    os << line;
  }
  os << "participants/round " << d.participants << "  round-1 bytes (up+down) " << d.round_bytes << '\n';
  return os.str();
}

}  // namespace fedhm
