#include "fedhm/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fedhm/accounting.hpp"
#include "fedhm/errors.hpp"
#include "fedhm/network.hpp"

namespace fedhm {

double evaluate_top1(const Model& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ValueError("evaluate_top1: empty dataset");
  if (model.spec.classes != data.classes)
    throw DimensionError("evaluate_top1: model has " + std::to_string(model.spec.classes) +
                         " outputs but the dataset has " + std::to_string(data.classes) + " classes");
  if (batch_size == 0) batch_size = data.size();

  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, idx.size() - start);
    const Tensor logits = forward_eval(model, data.gather({idx.data() + start, count}));
    const std::size_t c = logits.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < c; ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      if (static_cast<int>(best) == data.labels[start + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::uint64_t comm_bytes(const ModelSpec& spec) { return kWireBytesPerParam * count_params(spec); }
std::uint64_t comm_bytes(const Model& model) { return kWireBytesPerParam * count_params(model); }

Ratio comm_ratio(const ModelSpec& hybrid, const ModelSpec& full) {
  const std::uint64_t den = count_params(full);
  if (den == 0) throw ValueError("comm_ratio: reference model has no parameters");
  const std::uint64_t num = count_params(hybrid);
  const std::uint64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_row(const RoundRecord& r) {
  std::ostringstream os;
  os << r.round << ',' << r.level << ',' << r.params << ',' << fixed6(r.acc_top1) << ','
     << r.bytes_up << ',' << r.bytes_down << ',' << r.cum_macs << ',' << fixed6(r.seconds);
  return os.str();
}

// Hand-built so numbers keep the same fixed 6-decimal rendering as the CSV.
std::string json_row(const RoundRecord& r) {
  std::ostringstream os;
  os << "{\"round\":" << r.round << ",\"level\":" << r.level << ",\"params\":" << r.params
     << ",\"acc_top1\":" << fixed6(r.acc_top1) << ",\"bytes_up\":" << r.bytes_up
     << ",\"bytes_down\":" << r.bytes_down << ",\"cum_macs\":" << r.cum_macs
     << ",\"seconds\":" << fixed6(r.seconds) << '}';
  return os.str();
}

std::uint64_t parse_u64(const std::string& s, std::size_t line) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size() || s.front() == '-')
    throw FormatError("metrics line " + std::to_string(line) + ": bad integer `" + s + "`", line);
  return v;
}

double parse_double(const std::string& s, std::size_t line) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size())
    throw FormatError("metrics line " + std::to_string(line) + ": bad number `" + s + "`", line);
  return v;
}

}  // namespace

std::string format_records(const std::vector<RoundRecord>& records, RecordFormat format) {
  std::string out;
  if (format == RecordFormat::Csv) {
    out += kCsvHeader;
    out += '\n';
    for (const auto& r : records) out += csv_row(r) + '\n';
  } else {
    for (const auto& r : records) out += json_row(r) + '\n';
  }
  return out;
}

std::vector<RoundRecord> parse_records(const std::string& text, RecordFormat format) {
  std::vector<RoundRecord> records;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  if (format == RecordFormat::Csv) {
    if (!std::getline(in, line) || line != kCsvHeader)
      throw FormatError("metrics CSV: missing or unexpected header", 0);
    ++lineno;
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    RoundRecord r;
    if (format == RecordFormat::Csv) {
      std::vector<std::string> f;
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) f.push_back(cell);
      if (f.size() != 8)
        throw FormatError("metrics line " + std::to_string(lineno) + ": expected 8 fields", lineno);
      r.round = parse_u64(f[0], lineno);
      r.level = parse_u64(f[1], lineno);
      r.params = parse_u64(f[2], lineno);
      r.acc_top1 = parse_double(f[3], lineno);
      r.bytes_up = parse_u64(f[4], lineno);
      r.bytes_down = parse_u64(f[5], lineno);
      r.cum_macs = parse_u64(f[6], lineno);
      r.seconds = parse_double(f[7], lineno);
    } else {
      try {
        const auto j = nlohmann::json::parse(line);
        r.round = j.at("round").get<std::size_t>();
        r.level = j.at("level").get<std::size_t>();
        r.params = j.at("params").get<std::uint64_t>();
        r.acc_top1 = j.at("acc_top1").get<double>();
        r.bytes_up = j.at("bytes_up").get<std::uint64_t>();
        r.bytes_down = j.at("bytes_down").get<std::uint64_t>();
        r.cum_macs = j.at("cum_macs").get<std::uint64_t>();
        r.seconds = j.at("seconds").get<double>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("metrics line " + std::to_string(lineno) + ": " + e.what(), lineno);
      }
    }
    records.push_back(r);
  }
  return records;
}

void emit(const std::vector<RoundRecord>& records, const std::filesystem::path& path, RecordFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::string text = format_records(records, format);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace fedhm
