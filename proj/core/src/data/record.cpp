#include "gbu/data/record.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "gbu/common/error.hpp"
#include "gbu/common/json.hpp"

namespace gbu::data {

static_assert(std::endian::native == std::endian::little, "RSP1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'S', 'P', '1'};

std::size_t samples(int rate, std::size_t seconds) { return static_cast<std::size_t>(rate) * seconds; }

template <typename V>
void append_raw(std::vector<std::byte>& out, const std::vector<V>& values) {
  const auto* p = reinterpret_cast<const std::byte*>(values.data());
  out.insert(out.end(), p, p + values.size() * sizeof(V));
}

template <typename V>
std::vector<V> take_raw(std::span<const std::byte> bytes, std::size_t& offset, std::size_t count) {
  std::vector<V> out(count);
  std::memcpy(out.data(), bytes.data() + offset, count * sizeof(V));
  offset += count * sizeof(V);
  return out;
}

}  // namespace

void Record::validate() const {
  require(fb > 0 && fo > 0 && duration_s > 0, ErrorCode::kLengthInconsistency,
          subject_id + ": rates and duration must be positive");
  require(breathing.size() == samples(fb, duration_s), ErrorCode::kLengthInconsistency,
          subject_id + ": breathing has " + std::to_string(breathing.size()) + " samples, expected " +
              std::to_string(samples(fb, duration_s)));
  require(spo2.size() == samples(fo, duration_s) && stages.size() == spo2.size(), ErrorCode::kLengthInconsistency,
          subject_id + ": spo2/stage length does not match fo*T");
  for (std::size_t i = 0; i < spo2.size(); ++i)
    require(std::isfinite(spo2[i]) && spo2[i] >= 0.0f && spo2[i] <= 100.0f, ErrorCode::kValueRange,
            subject_id + ": spo2[" + std::to_string(i) + "] = " + std::to_string(spo2[i]) + " outside [0, 100]");
  for (std::size_t i = 0; i < stages.size(); ++i)
    require(stages[i] <= kNonRem || stages[i] == kMissingStage, ErrorCode::kValueRange,
            subject_id + ": stage[" + std::to_string(i) + "] = " + std::to_string(stages[i]));
  for (std::size_t i = 0; i < breathing.size(); ++i)
    require(std::isfinite(breathing[i]), ErrorCode::kValueRange, subject_id + ": non-finite breathing sample");
  require(gender == 0 || gender == 1, ErrorCode::kValueRange, subject_id + ": gender must be 0 or 1");
}

bool Record::has_variable(const std::string& name) const { return name == "gender" || vars.contains(name); }

int Record::variable(const std::string& name) const {
  if (name == "gender") return gender;
  const auto it = vars.find(name);
  require(it != vars.end(), ErrorCode::kUnknownGroup, subject_id + " has no variable '" + name + "'");
  return it->second;
}

std::size_t rsp1_file_size(std::size_t header_bytes, int fb, int fo, std::size_t duration_s) {
  return 8 + header_bytes + 4 * samples(fb, duration_s) + 4 * samples(fo, duration_s) + samples(fo, duration_s);
}

std::vector<std::byte> encode_record(const Record& record) {
  record.validate();
  Json vars = Json::object();
  for (const auto& [k, v] : record.vars) vars[k] = v;
  const Json header{{"subject_id", record.subject_id}, {"dataset_id", record.dataset_id},
                    {"fb", record.fb},                 {"fo", record.fo},
                    {"duration_s", record.duration_s}, {"gender", record.gender},
                    {"vars", vars}};
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());

  std::vector<std::byte> out;
  out.reserve(rsp1_file_size(text.size(), record.fb, record.fo, record.duration_s));
  const auto* magic = reinterpret_cast<const std::byte*>(kMagic);
  out.insert(out.end(), magic, magic + 4);
  const auto* lp = reinterpret_cast<const std::byte*>(&len);
  out.insert(out.end(), lp, lp + 4);
  const auto* hp = reinterpret_cast<const std::byte*>(text.data());
  out.insert(out.end(), hp, hp + text.size());
  append_raw(out, record.breathing);
  append_raw(out, record.spo2);
  append_raw(out, record.stages);
  return out;
}

Record decode_record(std::span<const std::byte> bytes, const std::string& where) {
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::kBadMagic,
          where + ": not an RSP1 record");
  require(bytes.size() >= 8, ErrorCode::kTruncated, where + ": truncated before header length");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, 4);
  require(bytes.size() >= 8 + static_cast<std::size_t>(header_len), ErrorCode::kTruncated,
          where + ": truncated header");
  Json header;
  try {
    const auto* text = reinterpret_cast<const char*>(bytes.data() + 8);
    header = Json::parse(text, text + header_len);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kTruncated, where + ": unreadable header: " + e.what());
  }
  const std::string ctx = where + " header";
  reject_unknown_keys(header, {"subject_id", "dataset_id", "fb", "fo", "duration_s", "gender", "vars"}, ctx);
  Record r;
  try {
    r.subject_id = header.at("subject_id").get<std::string>();
    r.dataset_id = header.at("dataset_id").get<std::string>();
    r.fb = header.at("fb").get<int>();
    r.fo = header.at("fo").get<int>();
    r.duration_s = header.at("duration_s").get<std::size_t>();
    r.gender = header.at("gender").get<int>();
    if (header.contains("vars"))
      for (const auto& [k, v] : header.at("vars").items()) r.vars[k] = v.get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, ctx + ": " + e.what());
  }
  require(r.fb > 0 && r.fo > 0, ErrorCode::kLengthInconsistency, where + ": non-positive sampling rate");

  const std::size_t expected = rsp1_file_size(header_len, r.fb, r.fo, r.duration_s);
  require(bytes.size() >= expected, ErrorCode::kTruncated,
          where + ": " + std::to_string(bytes.size()) + " bytes, header implies " + std::to_string(expected));
  require(bytes.size() == expected, ErrorCode::kLengthInconsistency,
          where + ": " + std::to_string(bytes.size() - expected) + " trailing bytes");
  std::size_t offset = 8 + header_len;
  r.breathing = take_raw<float>(bytes, offset, samples(r.fb, r.duration_s));
  r.spo2 = take_raw<float>(bytes, offset, samples(r.fo, r.duration_s));
  r.stages = take_raw<std::uint8_t>(bytes, offset, samples(r.fo, r.duration_s));
  r.validate();
  return r;
}

void write_record(const Record& record, const std::filesystem::path& path) {
  const auto bytes = encode_record(record);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

Record read_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  const std::vector<char> raw{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_record(std::as_bytes(std::span<const char>(raw)), path.string());
}

std::vector<Record> read_record_dir(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorCode::kIo, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".rsp1") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Record> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_record(f));
  return out;
}

std::vector<double> normalize_breathing(std::span<const float> breathing) {
  std::vector<double> out(breathing.begin(), breathing.end());
  if (out.empty()) return out;
  const double n = static_cast<double>(out.size());
  double mean = 0.0;
  for (double x : out) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : out) var += (x - mean) * (x - mean);
  var /= n;
  if (var < 1e-8) return std::vector<double>(out.size(), 0.0);
  const double inv = 1.0 / std::sqrt(var);
  for (double& x : out) x = (x - mean) * inv;
  return out;
}

std::vector<float> model_breathing(const Record& record, bool normalize) {
  if (!normalize) return record.breathing;
  const auto z = normalize_breathing(record.breathing);
  return {z.begin(), z.end()};
}

std::vector<double> normalized_spo2(const Record& record) {
  std::vector<double> out(record.spo2.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (record.spo2[i] - kSpo2Center) / kSpo2Scale;
  return out;
}

double denormalize_spo2(double y) { return y * kSpo2Scale + kSpo2Center; }

Record crop_to_multiple(Record record, std::size_t quantum) {
  require(quantum > 0, ErrorCode::kContract, "crop quantum must be positive");
  require(record.duration_s >= quantum, ErrorCode::kRecordTooShort,
          record.subject_id + ": T = " + std::to_string(record.duration_s) + " s is shorter than " +
              std::to_string(quantum) + " s");
  const std::size_t t = record.duration_s / quantum * quantum;
  record.duration_s = t;
  record.breathing.resize(samples(record.fb, t));
  record.spo2.resize(samples(record.fo, t));
  record.stages.resize(samples(record.fo, t));
  return record;
}

SubjectSplit split_subjects(std::vector<std::string> ids, double ratio, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  require(ids.size() >= 2, ErrorCode::kContract, "split_subjects needs at least two subjects");
  require(ratio > 0.0 && ratio < 1.0, ErrorCode::kContract, "split ratio must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n = static_cast<long>(ids.size());
  const long cut = std::clamp(std::lround(ratio * static_cast<double>(n)), 1L, n - 1);
  SubjectSplit out;
  out.train.assign(ids.begin(), ids.begin() + cut);
  out.test.assign(ids.begin() + cut, ids.end());
  return out;
}

std::vector<Record> select_subjects(const std::vector<Record>& records, const std::vector<std::string>& ids) {
  std::vector<Record> out;
  for (const auto& r : records)
    if (std::find(ids.begin(), ids.end(), r.subject_id) != ids.end()) out.push_back(r);
  return out;
}

}  // namespace gbu::data
