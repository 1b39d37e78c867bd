#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gbu::data {

inline constexpr std::uint8_t kAwake = 0;
inline constexpr std::uint8_t kRem = 1;
inline constexpr std::uint8_t kNonRem = 2;
inline constexpr std::uint8_t kMissingStage = 255;

/// Targets are trained on (spo2 - kSpo2Center) / kSpo2Scale.
inline constexpr double kSpo2Center = 95.0;
inline constexpr double kSpo2Scale = 5.0;

/// One night. breathing has fb*T samples; spo2 and stages have fo*T.
struct Record {
  std::string subject_id;
  std::string dataset_id;
  int fb = 10;
  int fo = 1;
  std::size_t duration_s = 0;
  int gender = 0;
  std::map<std::string, int> vars;
  std::vector<float> breathing;
  std::vector<float> spo2;
  std::vector<std::uint8_t> stages;

  /// Throws kLengthInconsistency / kValueRange.
  void validate() const;
  /// "gender" or one of vars; kUnknownGroup otherwise.
  [[nodiscard]] int variable(const std::string& name) const;
  [[nodiscard]] bool has_variable(const std::string& name) const;
};

/// 8 + H + 4*fb*T + 4*fo*T + fo*T for a header of H bytes.
std::size_t rsp1_file_size(std::size_t header_bytes, int fb, int fo, std::size_t duration_s);

std::vector<std::byte> encode_record(const Record& record);
Record decode_record(std::span<const std::byte> bytes, const std::string& where = "record");

void write_record(const Record& record, const std::filesystem::path& path);
Record read_record(const std::filesystem::path& path);

/// Every *.rsp1 under dir, sorted by file name.
std::vector<Record> read_record_dir(const std::filesystem::path& dir);

/// Zero mean, unit variance; series with variance below 1e-8 map to zeros.
std::vector<double> normalize_breathing(std::span<const float> breathing);

/// Model input samples: normalized (or raw) breathing narrowed to float.
std::vector<float> model_breathing(const Record& record, bool normalize = true);
/// (spo2 - kSpo2Center) / kSpo2Scale.
std::vector<double> normalized_spo2(const Record& record);
double denormalize_spo2(double y);

/// Drops trailing seconds so T is a multiple of quantum. kRecordTooShort if T < quantum.
Record crop_to_multiple(Record record, std::size_t quantum = 24);

struct SubjectSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Sorts and de-duplicates the ids, shuffles them with the seed, then cuts at
/// round(ratio * n), clamped so both sides are non-empty.
SubjectSplit split_subjects(std::vector<std::string> subject_ids, double ratio, std::uint64_t seed);

/// Records whose subject_id is in ids, in input order.
std::vector<Record> select_subjects(const std::vector<Record>& records, const std::vector<std::string>& ids);

}  // namespace gbu::data
