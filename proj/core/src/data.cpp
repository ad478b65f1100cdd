#include "fedhm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>

#include "fedhm/errors.hpp"

namespace fedhm {

Shape Dataset::sample_shape() const {
  if (features.rank() < 2) return {};
  return Shape(features.shape().begin() + 1, features.shape().end());
}

void Dataset::validate() const {
  if (labels.empty()) throw ValueError("dataset (" + split + ") is empty");
  if (features.rank() < 2 || features.dim(0) != labels.size()) {
    throw DimensionError("dataset features " + shape_string(features.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ValueError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  if (!features.all_finite()) throw ValueError("dataset features contain non-finite values");
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const Shape s = sample_shape();
  const std::size_t stride = shape_size(s);
  Shape out_shape{indices.size()};
  out_shape.insert(out_shape.end(), s.begin(), s.end());
  Tensor out(out_shape);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = indices[r];
    if (src >= size()) throw ValueError("sample index " + std::to_string(src) + " out of range");
    std::copy_n(features.data().begin() + static_cast<long>(src * stride), stride,
                out.data().begin() + static_cast<long>(r * stride));
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = gather(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  out.classes = classes;
  out.split = split;
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(classes, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Tensor blob_means(const BlobSpec& spec) {
  if (spec.classes < 2) throw ValueError("synthetic data needs at least 2 classes");
  if (spec.noise < 0.0) throw ValueError("noise must be non-negative");
  const std::size_t d = shape_size(spec.sample_shape);
  if (d == 0) throw ValueError("synthetic sample shape is empty");
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution coin(0.5);
  Tensor means({spec.classes, d});
  for (auto& v : means.data()) v = coin(rng) ? 1.0 : -1.0;

  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < spec.classes; ++a) {
    for (std::size_t b = a + 1; b < spec.classes; ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += std::pow(means.at(a, j) - means.at(b, j), 2);
      min_dist = std::min(min_dist, std::sqrt(s));
    }
  }
  // Identical templates (possible for tiny d) get a deterministic class offset.
  if (min_dist == 0.0) {
    for (std::size_t c = 0; c < spec.classes; ++c) means.at(c, c % d) += static_cast<double>(c);
    min_dist = 1.0;
  }
  const double required = 4.0 * spec.noise;
  if (min_dist < required) {
    const double scale = required / min_dist;
    for (auto& v : means.data()) v *= scale;
  }
  return means;
}

Dataset synth_blobs(const BlobSpec& spec, std::size_t per_class, std::uint64_t sample_seed,
                    std::string split) {
  if (per_class == 0) throw ValueError("synth_blobs: per_class must be at least 1");
  const Tensor means = blob_means(spec);
  const std::size_t d = means.dim(1);
  const std::size_t n = per_class * spec.classes;
  Shape shape{n};
  shape.insert(shape.end(), spec.sample_shape.begin(), spec.sample_shape.end());
  Dataset out;
  out.features = Tensor(shape);
  out.labels.resize(n);
  out.classes = spec.classes;
  out.split = std::move(split);
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t c = s % spec.classes;
    out.labels[s] = static_cast<int>(c);
    for (std::size_t j = 0; j < d; ++j) out.features[s * d + j] = means.at(c, j) + spec.noise * gauss(rng);
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at, const std::string& file) {
  if (b.size() < at + 4) throw FormatError(file + ": truncated IDX header", b.size());
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  const std::string iname = images_path.filename().string();
  const std::string lname = labels_path.filename().string();

  if (be32(img, 0, iname) != 0x00000803) throw FormatError(iname + ": bad IDX image magic", 0);
  const std::size_t n = be32(img, 4, iname);
  const std::size_t h = be32(img, 8, iname);
  const std::size_t w = be32(img, 12, iname);
  if (img.size() != 16 + n * h * w) {
    throw FormatError(iname + ": expected " + std::to_string(16 + n * h * w) + " bytes, found " +
                          std::to_string(img.size()),
                      std::min<std::size_t>(img.size(), 16 + n * h * w));
  }
  if (be32(lab, 0, lname) != 0x00000801) throw FormatError(lname + ": bad IDX label magic", 0);
  const std::size_t nl = be32(lab, 4, lname);
  if (nl != n) throw FormatError(lname + ": " + std::to_string(nl) + " labels for " + std::to_string(n) + " images", 4);
  if (lab.size() != 8 + n) {
    throw FormatError(lname + ": expected " + std::to_string(8 + n) + " bytes, found " +
                          std::to_string(lab.size()),
                      std::min<std::size_t>(lab.size(), 8 + n));
  }
  if (n == 0) throw FormatError(iname + ": no images", 4);

  Dataset out;
  out.features = Tensor({n, 1, h, w});
  for (std::size_t i = 0; i < n * h * w; ++i) out.features[i] = img[16 + i] / 255.0;
  out.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = lab[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.classes = static_cast<std::size_t>(max_label) + 1;
  return out;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string file = path.filename().string();
  std::vector<int> labels;
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t offset = 0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);

    auto parse_double = [&](const std::string& f, double& v) {
      const char* b = f.data();
      const char* e = f.data() + f.size();
      while (b < e && *b == ' ') ++b;
      auto [ptr, ec] = std::from_chars(b, e, v);
      return ec == std::errc() && ptr == e;
    };
    double label_value = 0.0;
    if (!parse_double(fields[0], label_value)) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw FormatError(file + ": non-numeric label `" + fields[0] + "`", line_start);
    }
    first = false;
    if (label_value < 0 || label_value != std::floor(label_value)) {
      throw FormatError(file + ": label must be a non-negative integer", line_start);
    }
    if (fields.size() < 2) throw FormatError(file + ": row has no features", line_start);
    if (width == 0) width = fields.size() - 1;
    if (fields.size() - 1 != width) {
      throw FormatError(file + ": row has " + std::to_string(fields.size() - 1) +
                            " features, expected " + std::to_string(width),
                        line_start);
    }
    labels.push_back(static_cast<int>(label_value));
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      if (!parse_double(fields[j], v)) {
        throw FormatError(file + ": bad feature value `" + fields[j] + "`", line_start);
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw FormatError(file + ": no data rows", offset);
  Dataset out;
  out.features = Tensor({labels.size(), width}, std::move(values));
  out.classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  out.labels = std::move(labels);
  return out;
}

ChannelStats channel_stats(const Dataset& data) {
  const Tensor& x = data.features;
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.size() / (n * c);
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double count = static_cast<double>(n * inner);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) sum += x[(i * c + ch) * inner + j];
    const double mean = sum / count;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) var += std::pow(x[(i * c + ch) * inner + j] - mean, 2);
    s.mean[ch] = mean;
    s.stddev[ch] = std::sqrt(var / count);
  }
  return s;
}

void normalize(Dataset& data, const ChannelStats& stats) {
  Tensor& x = data.features;
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (stats.mean.size() != c) throw DimensionError("normalize: channel count mismatch");
  const std::size_t inner = x.size() / (n * c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double sd = stats.stddev[ch] > 0.0 ? stats.stddev[ch] : 1.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) {
        double& v = x[(i * c + ch) * inner + j];
        v = (v - stats.mean[ch]) / sd;
      }
  }
}

}  // namespace fedhm
