#include "fedhm/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "fedhm/aggregate.hpp"
#include "fedhm/errors.hpp"

namespace fedhm {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(join(path, key), "unknown key");
  }
}

std::uint64_t as_unsigned(const json& v, const std::string& field) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) throw ConfigError(field, "must be non-negative");
  throw ConfigError(field, "expected a non-negative integer");
}

double as_number(const json& v, const std::string& field) {
  if (!v.is_number()) throw ConfigError(field, "expected a number");
  return v.get<double>();
}

// Typed optional lookups: return `def` when the key is absent.
std::uint64_t opt_u64(const json& j, const std::string& path, const char* key, std::uint64_t def) {
  return j.contains(key) ? as_unsigned(j.at(key), join(path, key)) : def;
}

double opt_num(const json& j, const std::string& path, const char* key, double def) {
  return j.contains(key) ? as_number(j.at(key), join(path, key)) : def;
}

bool opt_bool(const json& j, const std::string& path, const char* key, bool def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return j.at(key).get<bool>();
}

std::string opt_str(const json& j, const std::string& path, const char* key, std::string def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_string()) throw ConfigError(join(path, key), "expected a string");
  return j.at(key).get<std::string>();
}

std::vector<double> opt_nums(const json& j, const std::string& path, const char* key, std::vector<double> def) {
  if (!j.contains(key)) return def;
  const std::string field = join(path, key);
  if (!j.at(key).is_array()) throw ConfigError(field, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j.at(key)) out.push_back(as_number(v, field));
  return out;
}

std::vector<std::size_t> opt_sizes(const json& j, const std::string& path, const char* key,
                                   std::vector<std::size_t> def) {
  if (!j.contains(key)) return def;
  const std::string field = join(path, key);
  if (!j.at(key).is_array()) throw ConfigError(field, "expected an array of non-negative integers");
  std::vector<std::size_t> out;
  for (const auto& v : j.at(key)) out.push_back(as_unsigned(v, field));
  return out;
}

const json& section(const json& root, const char* key) {
  static const json kEmpty = json::object();
  return root.contains(key) ? root.at(key) : kEmpty;
}

std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

void check_ratios(const std::vector<double>& r, const std::string& field) {
  require(!r.empty(), field, "must list at least one ratio");
  for (double v : r) require(v > 0.0 && v <= 1.0, field, "every ratio must lie in (0, 1]");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  check_object(root, "", {"method", "model", "dataset", "clients", "sample_fraction", "rounds", "threads", "local",
                          "rank_ratios", "width_ratios", "hybrid", "tau", "schedule", "partition", "seeds", "output"});
  require(root.contains("model"), "model", "is required");
  require(root.contains("dataset"), "dataset", "is required");

  ExperimentConfig c;
  FederatedConfig& f = c.federated;

  try {
    f.method = method_from_string(opt_str(root, "", "method", "fedhm"));
  } catch (const ValueError&) {
    throw ConfigError("method", "expected fedhm, fedavg, widthslim-fedavg or heterofl-channel");
  }

  // dataset
  const json& d = root.at("dataset");
  check_object(d, "dataset", {"kind", "classes", "sample_shape", "noise", "template_seed", "train_per_class",
                              "test_per_class", "train_images", "train_labels", "test_images", "test_labels",
                              "train_csv", "test_csv", "normalize"});
  DatasetConfig& ds = c.dataset;
  ds.kind = opt_str(d, "dataset", "kind", "synthetic");
  ds.normalize = opt_bool(d, "dataset", "normalize", false);
  if (ds.kind == "synthetic") {
    ds.blobs.classes = opt_u64(d, "dataset", "classes", ds.blobs.classes);
    ds.blobs.sample_shape = opt_sizes(d, "dataset", "sample_shape", ds.blobs.sample_shape);
    ds.blobs.noise = opt_num(d, "dataset", "noise", ds.blobs.noise);
    ds.blobs.seed = opt_u64(d, "dataset", "template_seed", ds.blobs.seed);
    ds.train_per_class = opt_u64(d, "dataset", "train_per_class", ds.train_per_class);
    ds.test_per_class = opt_u64(d, "dataset", "test_per_class", ds.test_per_class);
    require(ds.blobs.classes >= 2, "dataset.classes", "must be at least 2");
    require(!ds.blobs.sample_shape.empty() && shape_size(ds.blobs.sample_shape) > 0, "dataset.sample_shape",
            "must be a non-empty shape");
    require(ds.blobs.noise >= 0.0 && std::isfinite(ds.blobs.noise), "dataset.noise", "must be non-negative");
    require(ds.train_per_class >= 1, "dataset.train_per_class", "must be at least 1");
    require(ds.test_per_class >= 1, "dataset.test_per_class", "must be at least 1");
    for (const char* k : {"train_images", "train_labels", "test_images", "test_labels", "train_csv", "test_csv"})
      require(!d.contains(k), join("dataset", k), "not used by synthetic datasets");
  } else if (ds.kind == "idx") {
    for (auto [key, dst] : {std::pair{"train_images", &ds.train_images}, std::pair{"train_labels", &ds.train_labels},
                            std::pair{"test_images", &ds.test_images}, std::pair{"test_labels", &ds.test_labels}}) {
      *dst = resolve_path(opt_str(d, "dataset", key, ""), base_dir);
      require(!dst->empty(), join("dataset", key), "is required for idx datasets");
    }
  } else if (ds.kind == "csv") {
    ds.train_csv = resolve_path(opt_str(d, "dataset", "train_csv", ""), base_dir);
    ds.test_csv = resolve_path(opt_str(d, "dataset", "test_csv", ""), base_dir);
    ds.sample_shape = opt_sizes(d, "dataset", "sample_shape", {});
    require(!ds.train_csv.empty(), "dataset.train_csv", "is required for csv datasets");
    require(!ds.test_csv.empty(), "dataset.test_csv", "is required for csv datasets");
  } else {
    throw ConfigError("dataset.kind", "expected synthetic, idx or csv");
  }
  if (ds.kind != "synthetic") {
    for (const char* k : {"noise", "template_seed", "train_per_class", "test_per_class", "classes"})
      require(!d.contains(k), join("dataset", k), "only used by synthetic datasets");
    if (ds.kind == "idx") require(!d.contains("sample_shape"), "dataset.sample_shape", "not used by idx datasets");
  }

  // model
  const json& m = root.at("model");
  check_object(m, "model", {"name", "spec_file", "classes", "input_shape", "widths"});
  ModelConfig& mc = c.model;
  mc.spec_file = resolve_path(opt_str(m, "model", "spec_file", ""), base_dir);
  mc.name = opt_str(m, "model", "name", mc.spec_file.empty() ? "tiny_cnn" : "");
  mc.widths = opt_sizes(m, "model", "widths", mc.widths);
  if (mc.spec_file.empty()) {
    require(mc.name == "tiny_cnn" || mc.name == "resnet18" || mc.name == "resnet34", "model.name",
            "expected tiny_cnn, resnet18 or resnet34");
    Shape default_shape;
    std::size_t default_classes = 0;
    if (ds.kind == "synthetic") {
      default_shape = ds.blobs.sample_shape;
      default_classes = ds.blobs.classes;
    } else if (ds.kind == "csv") {
      default_shape = ds.sample_shape;
    }
    mc.classes = opt_u64(m, "model", "classes", default_classes);
    mc.input_shape = opt_sizes(m, "model", "input_shape", default_shape);
    require(mc.classes >= 2, "model.classes", "must be at least 2");
    require(mc.input_shape.size() == 3 && mc.input_shape[1] == mc.input_shape[2] && mc.input_shape[0] > 0 &&
                mc.input_shape[1] > 0,
            "model.input_shape", "expected a square (channels, height, width) image shape");
    require(mc.widths.size() == 3, "model.widths", "expected three stage widths");
    for (std::size_t w : mc.widths) require(w >= 1, "model.widths", "widths must be positive");
  } else {
    require(!m.contains("name") && !m.contains("classes") && !m.contains("input_shape"), "model.spec_file",
            "a spec file already fixes name, classes and input shape");
  }

  // federation
  c.clients = opt_u64(root, "", "clients", c.clients);
  f.sample_fraction = opt_num(root, "", "sample_fraction", f.sample_fraction);
  f.rounds = opt_u64(root, "", "rounds", f.rounds);
  f.threads = opt_u64(root, "", "threads", f.threads);
  require(c.clients >= 1, "clients", "must be at least 1");
  require(f.sample_fraction > 0.0 && f.sample_fraction <= 1.0, "sample_fraction", "must lie in (0, 1]");

  const json& l = section(root, "local");
  check_object(l, "local", {"epochs", "batch_size", "lr", "momentum", "weight_decay", "frobenius_decay"});
  f.local.epochs = opt_u64(l, "local", "epochs", f.local.epochs);
  f.local.batch_size = opt_u64(l, "local", "batch_size", f.local.batch_size);
  f.local.sgd.lr = opt_num(l, "local", "lr", f.local.sgd.lr);
  f.local.sgd.momentum = opt_num(l, "local", "momentum", f.local.sgd.momentum);
  f.local.sgd.weight_decay = opt_num(l, "local", "weight_decay", f.local.sgd.weight_decay);
  f.local.sgd.frobenius_decay = opt_num(l, "local", "frobenius_decay", f.local.sgd.frobenius_decay);
  require(f.local.epochs >= 1, "local.epochs", "must be at least 1");
  require(f.local.batch_size >= 1, "local.batch_size", "must be at least 1");
  require(f.local.sgd.lr >= 0.0 && std::isfinite(f.local.sgd.lr), "local.lr", "learning rate `lr` must be non-negative");
  require(f.local.sgd.momentum >= 0.0 && f.local.sgd.momentum < 1.0, "local.momentum", "must lie in [0, 1)");
  require(f.local.sgd.weight_decay >= 0.0, "local.weight_decay", "must be non-negative");
  require(f.local.sgd.frobenius_decay >= 0.0, "local.frobenius_decay", "must be non-negative");

  f.rank_ratios = opt_nums(root, "", "rank_ratios", f.rank_ratios);
  f.width_ratios = opt_nums(root, "", "width_ratios", f.width_ratios);
  check_ratios(f.rank_ratios, "rank_ratios");
  check_ratios(f.width_ratios, "width_ratios");

  const json& h = section(root, "hybrid");
  check_object(h, "hybrid", {"rho", "factorize_stem", "factorize_classifier"});
  f.plan.rho = opt_u64(h, "hybrid", "rho", f.plan.rho);
  f.plan.factorize_stem = opt_bool(h, "hybrid", "factorize_stem", false);
  f.plan.factorize_classifier = opt_bool(h, "hybrid", "factorize_classifier", false);

  const json& s = section(root, "schedule");
  check_object(s, "schedule", {"mode", "assignment"});
  try {
    f.schedule = schedule_mode_from_string(opt_str(s, "schedule", "mode", "fixed"));
  } catch (const ValueError&) {
    throw ConfigError("schedule.mode", "expected fixed or dynamic");
  }
  f.assignment = opt_sizes(s, "schedule", "assignment", {});
  if (!f.assignment.empty()) {
    require(f.schedule == ScheduleMode::Fixed, "schedule.assignment", "only valid for the fixed schedule");
    require(f.assignment.size() == c.clients, "schedule.assignment", "must list one level per client");
    for (std::size_t a : f.assignment)
      require(a >= 1 && a <= f.levels(), "schedule.assignment",
              "levels must lie in 1.." + std::to_string(f.levels()));
  }

  if (root.contains("tau")) {
    const json& t = root.at("tau");
    if (t.is_string()) {
      require(t.get<std::string>() == "inf", "tau", "expected a positive number or \"inf\"");
      f.tau = kInfiniteTemperature;
    } else {
      f.tau = as_number(t, "tau");
      require(f.tau > 0.0, "tau", "must be positive");
    }
  } else {
    f.tau = f.resolved_tau();
  }

  const json& p = section(root, "partition");
  check_object(p, "partition", {"scheme", "alpha"});
  c.partition.scheme = opt_str(p, "partition", "scheme", "iid");
  require(c.partition.scheme == "iid" || c.partition.scheme == "dirichlet", "partition.scheme",
          "expected iid or dirichlet");
  c.partition.alpha = opt_num(p, "partition", "alpha", c.partition.alpha);
  require(c.partition.alpha > 0.0 && std::isfinite(c.partition.alpha), "partition.alpha", "must be positive");

  const json& sd = section(root, "seeds");
  check_object(sd, "seeds", {"init", "sample", "data"});
  f.seed_init = opt_u64(sd, "seeds", "init", f.seed_init);
  f.seed_sample = opt_u64(sd, "seeds", "sample", f.seed_sample);
  f.seed_data = opt_u64(sd, "seeds", "data", f.seed_data);

  const json& o = section(root, "output");
  check_object(o, "output", {"dir", "format", "record_time"});
  c.output_dir = opt_str(o, "output", "dir", c.output_dir);
  const std::string fmt = opt_str(o, "output", "format", "csv");
  require(fmt == "csv" || fmt == "jsonl", "output.format", "expected csv or jsonl");
  c.format = fmt == "csv" ? RecordFormat::Csv : RecordFormat::JsonLines;
  f.record_time = opt_bool(o, "output", "record_time", false);
  require(!c.output_dir.empty(), "output.dir", "must not be empty");
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::filesystem::absolute(path).parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
  const FederatedConfig& f = c.federated;
  ordered j;
  j["method"] = std::string(to_string(f.method));

  ordered model;
  if (c.model.spec_file.empty()) {
    model["name"] = c.model.name;
    model["classes"] = c.model.classes;
    model["input_shape"] = c.model.input_shape;
  } else {
    model["spec_file"] = c.model.spec_file;
  }
  model["widths"] = c.model.widths;
  j["model"] = model;

  const DatasetConfig& ds = c.dataset;
  ordered data;
  data["kind"] = ds.kind;
  if (ds.kind == "synthetic") {
    data["classes"] = ds.blobs.classes;
    data["sample_shape"] = ds.blobs.sample_shape;
    data["noise"] = ds.blobs.noise;
    data["template_seed"] = ds.blobs.seed;
    data["train_per_class"] = ds.train_per_class;
    data["test_per_class"] = ds.test_per_class;
  } else if (ds.kind == "idx") {
    data["train_images"] = ds.train_images;
    data["train_labels"] = ds.train_labels;
    data["test_images"] = ds.test_images;
    data["test_labels"] = ds.test_labels;
  } else {
    data["train_csv"] = ds.train_csv;
    data["test_csv"] = ds.test_csv;
    data["sample_shape"] = ds.sample_shape;
  }
  data["normalize"] = ds.normalize;
  j["dataset"] = data;

  j["clients"] = c.clients;
  j["sample_fraction"] = f.sample_fraction;
  j["rounds"] = f.rounds;
  j["threads"] = f.threads;
  j["local"] = {{"epochs", f.local.epochs},
                {"batch_size", f.local.batch_size},
                {"lr", f.local.sgd.lr},
                {"momentum", f.local.sgd.momentum},
                {"weight_decay", f.local.sgd.weight_decay},
                {"frobenius_decay", f.local.sgd.frobenius_decay}};
  j["rank_ratios"] = f.rank_ratios;
  j["width_ratios"] = f.width_ratios;
  j["hybrid"] = {{"rho", f.plan.rho},
                 {"factorize_stem", f.plan.factorize_stem},
                 {"factorize_classifier", f.plan.factorize_classifier}};
  if (std::isinf(f.tau))
    j["tau"] = "inf";
  else
    j["tau"] = f.tau;
  j["schedule"] = {{"mode", std::string(to_string(f.schedule))}, {"assignment", f.assignment}};
  j["partition"] = {{"scheme", c.partition.scheme}, {"alpha", c.partition.alpha}};
  j["seeds"] = {{"init", f.seed_init}, {"sample", f.seed_sample}, {"data", f.seed_data}};
  j["output"] = {{"dir", c.output_dir},
                 {"format", c.format == RecordFormat::Csv ? "csv" : "jsonl"},
                 {"record_time", f.record_time}};
  return j.dump(2) + "\n";
}

}  // namespace fedhm
