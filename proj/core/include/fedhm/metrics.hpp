#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedhm/data.hpp"
#include "fedhm/model.hpp"

namespace fedhm {

/// Parameters travel as 32-bit floats; bytes count the parameter payload.
inline constexpr std::uint64_t kWireBytesPerParam = 4;

/// One metrics row.
///
/// level 0 is the aggregated global model: bytes_up / bytes_down are the
/// round totals over all participants and cum_macs the cumulative client
/// forward MACs. Level i >= 1 is the model served to capability level i:
/// bytes are those of a single transfer of that model and cum_macs covers
/// the level-i participants only.
struct RoundRecord {
  std::size_t round = 0;
  std::size_t level = 0;
  std::uint64_t params = 0;
  double acc_top1 = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t cum_macs = 0;
  double seconds = 0.0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

/// Fraction of samples whose arg-max logit (ties -> lowest class) equals the
/// label, with eval-mode BatchNorm.
double evaluate_top1(const Model& model, const Dataset& data, std::size_t batch_size = 256);

std::uint64_t comm_bytes(const ModelSpec& spec);
std::uint64_t comm_bytes(const Model& model);

struct Ratio {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;
  double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
};
/// Parameter count of `hybrid` over that of `full`.
Ratio comm_ratio(const ModelSpec& hybrid, const ModelSpec& full);

enum class RecordFormat { Csv, JsonLines };

inline constexpr const char* kCsvHeader = "round,level,params,acc_top1,bytes_up,bytes_down,cum_macs,seconds";

std::string format_records(const std::vector<RoundRecord>& records, RecordFormat format);
std::vector<RoundRecord> parse_records(const std::string& text, RecordFormat format);

void emit(const std::vector<RoundRecord>& records, const std::filesystem::path& path, RecordFormat format);

}  // namespace fedhm
