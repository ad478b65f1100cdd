#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedhm/errors.hpp"
#include "fedhm/experiment.hpp"

using namespace fedhm;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({"model": {"name": "tiny_cnn"}, "dataset": {"kind": "synthetic"}})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

std::string config_error_field(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FEDHM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmoke = R"({
  "model": {"name": "tiny_cnn"},
  "dataset": {"kind": "synthetic", "classes": 4, "sample_shape": [1, 8, 8], "noise": 0.3},
  "clients": 4, "rounds": 2,
  "local": {"epochs": 1},
  "rank_ratios": [0.5, 0.25]
})";

}  // namespace

TEST(Config, MinimalConfigGetsDefaults) {
  const ExperimentConfig c = parse_config_text(kMinimal);
  EXPECT_EQ(c.clients, 20u);
  EXPECT_EQ(c.federated.sample_fraction, 0.5);
  EXPECT_EQ(c.federated.local.epochs, 10u);
  EXPECT_EQ(c.federated.local.batch_size, 64u);
  EXPECT_EQ(c.federated.local.sgd.lr, 0.1);
  EXPECT_EQ(c.federated.local.sgd.momentum, 0.9);
  EXPECT_EQ(c.federated.local.sgd.weight_decay, 1e-4);
  EXPECT_EQ(c.federated.rank_ratios, (std::vector<double>{0.5, 0.25, 0.125, 0.083}));
  EXPECT_EQ(c.federated.method, Method::FedHM);
  EXPECT_EQ(c.model.classes, 4u);
  EXPECT_EQ(c.model.input_shape, (Shape{1, 8, 8}));
}

TEST(Config, TemperatureDefaultFollowsSchedule) {
  EXPECT_TRUE(std::isinf(parse_config_text(kMinimal).federated.tau));
  const ExperimentConfig d = parse_config_text(
      R"({"model": {"name": "tiny_cnn"}, "dataset": {"kind": "synthetic"}, "schedule": {"mode": "dynamic"}})");
  EXPECT_EQ(d.federated.tau, 5.0);
  const ExperimentConfig e = parse_config_text(
      R"({"model": {"name": "tiny_cnn"}, "dataset": {"kind": "synthetic"}, "tau": "inf", "schedule": {"mode": "dynamic"}})");
  EXPECT_TRUE(std::isinf(e.federated.tau));
}

TEST(Config, NamedFieldDiagnostics) {
  const std::string base = R"({"model": {"name": "tiny_cnn"}, "dataset": {"kind": "synthetic"}, )";
  EXPECT_EQ(config_error_field(base + R"("local": {"lr": -0.1}})"), "local.lr");
  try {
    parse_config_text(base + R"("local": {"lr": -0.1}})");
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("`lr`"), std::string::npos) << e.what();
  }
  EXPECT_EQ(config_error_field(base + R"("colour": 1})"), "colour");
  EXPECT_EQ(config_error_field(base + R"("local": {"epoch": 1}})"), "local.epoch");
  EXPECT_EQ(config_error_field(base + R"("clients": "many"})"), "clients");
  EXPECT_EQ(config_error_field(base + R"("sample_fraction": 1.5})"), "sample_fraction");
  EXPECT_EQ(config_error_field(base + R"("rank_ratios": [0.5, 0]})"), "rank_ratios");
  EXPECT_EQ(config_error_field(base + R"("partition": {"scheme": "dirichlet", "alpha": -1}})"), "partition.alpha");
  EXPECT_EQ(config_error_field(base + R"("method": "fedprox"})"), "method");
  EXPECT_EQ(config_error_field(base + R"("schedule": {"assignment": [1, 2]}})"), "schedule.assignment");
  EXPECT_EQ(config_error_field(R"({"dataset": {"kind": "synthetic"}})"), "model");
  EXPECT_EQ(config_error_field(R"({"model": {}, "dataset": {"kind": "idx"}})"), "dataset.train_images");
  EXPECT_THROW(parse_config_text("{not json"), FormatError);
}

TEST(Config, EchoRoundTrip) {
  const std::vector<std::string> texts{
      kMinimal, kSmoke,
      R"({"method": "heterofl-channel", "model": {"name": "resnet18", "classes": 10, "input_shape": [3, 32, 32]},
          "dataset": {"kind": "csv", "train_csv": "/tmp/a.csv", "test_csv": "/tmp/b.csv", "sample_shape": [3, 32, 32]},
          "clients": 5, "schedule": {"mode": "fixed", "assignment": [1, 2, 3, 4, 1]},
          "partition": {"scheme": "dirichlet", "alpha": 0.1}, "tau": 5, "seeds": {"init": 18446744073709551615},
          "output": {"format": "jsonl", "record_time": true}})"};
  for (const auto& t : texts) {
    const ExperimentConfig c = parse_config_text(t);
    EXPECT_EQ(parse_config_text(config_to_json(c)), c) << config_to_json(c);
    EXPECT_EQ(config_to_json(parse_config_text(config_to_json(c))), config_to_json(c));
  }
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
  const ExperimentConfig c = parse_config_text(
      R"({"model": {"name": "tiny_cnn", "classes": 2, "input_shape": [1, 2, 2]},
          "dataset": {"kind": "csv", "train_csv": "data/train.csv", "test_csv": "/abs/test.csv"}})",
      "/work/exp");
  EXPECT_EQ(c.dataset.train_csv, "/work/exp/data/train.csv");
  EXPECT_EQ(c.dataset.test_csv, "/abs/test.csv");
}

TEST(Describe, ReportsResNetScaleAccounting) {
  ExperimentConfig c = parse_config_text(
      R"({"model": {"name": "resnet18", "classes": 10, "input_shape": [3, 32, 32]}, "dataset": {"kind": "synthetic"}})");
  const Description d = describe(c);
  EXPECT_EQ(d.levels[0].params, 11173962u);
  ASSERT_EQ(d.levels.size(), 5u);
  for (std::size_t i = 2; i < d.levels.size(); ++i) {
    EXPECT_LT(d.levels[i].params, d.levels[i - 1].params);
    EXPECT_LT(d.levels[i].macs, d.levels[i - 1].macs);
    EXPECT_EQ(d.levels[i].bytes, 4 * d.levels[i].params);
  }
  c.federated.rank_ratios = {1.0};
  c.federated.plan.rho = 21;
  const Description one = describe(c);
  EXPECT_EQ(one.levels[1].compression, 1.0);
  EXPECT_NE(format_description(d).find("11173962"), std::string::npos);
}

TEST(Cli, SmokeRunIsFastAndDeterministic) {
  const fs::path cfg = write_config("fedhm_cli_smoke.json", kSmoke);
  const fs::path a = fs::temp_directory_path() / "fedhm_cli_a", b = fs::temp_directory_path() / "fedhm_cli_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + a.string()), 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  EXPECT_EQ(slurp(a / "final_model.bin"), slurp(b / "final_model.bin"));
  EXPECT_TRUE(fs::exists(a / "config.resolved.json"));
  EXPECT_EQ(parse_config(a / "config.resolved.json").federated, parse_config(cfg).federated);

  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + b.string() + " --seed-sample 99"), 0);
  EXPECT_NE(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + b.string() + " --format jsonl"), 0);
  EXPECT_TRUE(fs::exists(b / "metrics.jsonl"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, DegenerateFedHMMatchesFedAvgMetrics) {
  const std::string body = R"("model": {"name": "tiny_cnn"},
    "dataset": {"kind": "synthetic", "classes": 4, "sample_shape": [1, 8, 8]},
    "clients": 4, "rounds": 2, "local": {"epochs": 1}, "rank_ratios": [1.0], "tau": "inf"})";
  const fs::path hm = write_config("fedhm_cli_hm.json", R"({"method": "fedhm", )" + body);
  const fs::path avg = write_config("fedhm_cli_avg.json", R"({"method": "fedavg", )" + body);
  const fs::path a = fs::temp_directory_path() / "fedhm_cli_hm", b = fs::temp_directory_path() / "fedhm_cli_avg";
  ASSERT_EQ(run_cli("run " + hm.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run_cli("run " + avg.string() + " --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "metrics.csv"), slurp(b / "metrics.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, ExitCodes) {
  const fs::path bad = write_config("fedhm_cli_bad.json", R"({"model": {"name": "vgg"}, "dataset": {}})");
  EXPECT_EQ(run_cli("run " + bad.string()), 2);
  EXPECT_NE(run_cli("run /nonexistent/config.json"), 0);
  EXPECT_NE(run_cli(""), 0);
  EXPECT_EQ(run_cli("describe " + write_config("fedhm_cli_desc.json", kMinimal).string()), 0);
}
