#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedhm/errors.hpp"
#include "fedhm/experiment.hpp"

namespace {

struct Overrides {
  std::string out;
  std::optional<std::uint64_t> seed_init, seed_sample, seed_data;
  std::string format;
};

fedhm::ExperimentConfig load(const std::string& path, const Overrides& o) {
  fedhm::ExperimentConfig cfg = fedhm::parse_config(path);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.seed_init) cfg.federated.seed_init = *o.seed_init;
  if (o.seed_sample) cfg.federated.seed_sample = *o.seed_sample;
  if (o.seed_data) cfg.federated.seed_data = *o.seed_data;
  if (!o.format.empty()) cfg.format = o.format == "csv" ? fedhm::RecordFormat::Csv : fedhm::RecordFormat::JsonLines;
  fedhm::apply_environment(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedhm - federated learning simulator with low-rank heterogeneous clients"};
  app.require_subcommand(1);

  Overrides o;
  std::string config_path;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (overrides output.dir)");
    sub->add_option("--seed-init", o.seed_init, "model initialization seed");
    sub->add_option("--seed-sample", o.seed_sample, "participant sampling seed");
    sub->add_option("--seed-data", o.seed_data, "data generation / partition / shuffling seed");
    sub->add_option("--format", o.format, "metrics format")->check(CLI::IsMember({"csv", "jsonl"}));
  };

  CLI::App* run = app.add_subcommand("run", "train and write metrics, final weights and the resolved config");
  add_common(run);
  CLI::App* describe = app.add_subcommand("describe", "print per-level parameter, MAC and byte accounting");
  add_common(describe);

  CLI11_PARSE(app, argc, argv);

  try {
    const fedhm::ExperimentConfig cfg = load(config_path, o);
    if (run->parsed()) {
      const auto art = fedhm::run_experiment(cfg, &std::cerr);
      std::cout << "metrics " << art.metrics.string() << '\n'
                << "weights " << art.weights.string() << '\n'
                << "config  " << art.resolved_config.string() << '\n';
    } else {
      std::cout << fedhm::format_description(fedhm::describe(cfg));
    }
  } catch (const fedhm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
