#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gbu/common/json.hpp"
#include "gbu/data/record.hpp"

namespace gbu::data {

/// SpO2 = base + offset + slope * tanh(gain * (lagged envelope mean / envelope_mean - 1)).
struct GroupResponse {
  double offset = 0.0;
  double slope = 2.0;
};

/// Generator parameters; the generated SpO2 is a known function of the
/// breathing envelope, gender and stage, so tests can use it as an oracle.
struct SynthProfile {
  std::uint64_t seed = 1;
  std::size_t subjects = 20;
  std::size_t nights_per_subject = 1;
  std::size_t night_seconds = 1440;
  std::string dataset_id = "synth";
  double female_fraction = 0.5;

  double rate_min_bpm = 10.0;
  double rate_max_bpm = 22.0;
  std::array<double, 3> stage_rate_offset_bpm{3.0, 1.5, -1.5};
  double rate_theta = 1.0 / 30.0;  // per second
  double rate_sigma = 0.4;         // bpm / sqrt(s)

  double envelope_mean = 1.0;
  double envelope_theta = 1.0 / 60.0;
  double envelope_sigma = 0.08;
  double envelope_floor = 0.2;
  double noise_std = 0.05;

  double lag_seconds = 30.0;
  double spo2_base = 95.0;
  double response_gain = 3.0;
  double spo2_noise_std = 0.1;
  /// [gender][stage]
  std::array<std::array<GroupResponse, 3>, 2> response{};

  /// Stages used by the chain: 0..stage_count-1 (2 drops non-REM, 3 uses all).
  std::size_t stage_count = 3;
  std::array<double, 3> mean_dwell_s{120.0, 240.0, 480.0};
  double min_dwell_s = 30.0;
  double missing_stage_fraction = 0.0;

  /// Throws kConfig.
  void validate() const;
};

/// Gender offsets +2 / -2 and slopes that flip sign between groups.
SynthProfile default_profile();

Json to_json(const SynthProfile& profile);
/// Strict: unknown keys rejected (kConfig). Missing keys keep default_profile() values.
SynthProfile synth_profile_from_json(const Json& j);

/// Subjects are "<dataset>-s###"; records come out subject-major, night-minor.
std::vector<Record> synth_generate(const SynthProfile& profile);

/// Writes one RSP1 file per record plus manifest.json; returns the manifest.
Json write_synth_dataset(const SynthProfile& profile, const std::vector<Record>& records,
                         const std::filesystem::path& dir);

}  // namespace gbu::data
