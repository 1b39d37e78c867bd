#include "gbu/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gbu/common/error.hpp"
#include "gbu/common/hash.hpp"

namespace gbu::data {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::uint8_t> stage_chain(const SynthProfile& p, std::mt19937_64& rng) {
  std::vector<std::uint8_t> out;
  out.reserve(p.night_seconds);
  std::uniform_int_distribution<std::size_t> first(0, p.stage_count - 1);
  auto stage = first(rng);
  while (out.size() < p.night_seconds) {
    std::exponential_distribution<double> extra(1.0 / std::max(1.0, p.mean_dwell_s[stage] - p.min_dwell_s));
    const auto dwell = static_cast<std::size_t>(std::lround(p.min_dwell_s + extra(rng)));
    for (std::size_t i = 0; i < std::max<std::size_t>(dwell, 1) && out.size() < p.night_seconds; ++i)
      out.push_back(static_cast<std::uint8_t>(stage));
    if (p.stage_count > 1) {
      std::uniform_int_distribution<std::size_t> other(0, p.stage_count - 2);
      const auto next = other(rng);
      stage = next >= stage ? next + 1 : next;
    }
  }
  return out;
}

Record generate_night(const SynthProfile& p, const std::string& subject, int gender, double base_rate,
                      std::mt19937_64& rng) {
  Record r;
  r.subject_id = subject;
  r.dataset_id = p.dataset_id;
  r.fb = 10;
  r.fo = 1;
  r.duration_s = p.night_seconds;
  r.gender = gender;
  r.stages = stage_chain(p, rng);

  const double dt = 1.0 / r.fb;
  std::normal_distribution<double> gauss;
  std::vector<double> env_per_second(p.night_seconds, 0.0);
  r.breathing.resize(p.night_seconds * static_cast<std::size_t>(r.fb));
  double envelope = p.envelope_mean;
  double rate_jitter = 0.0;
  double phase = 2.0 * std::numbers::pi * std::uniform_real_distribution<double>()(rng);
  for (std::size_t i = 0; i < r.breathing.size(); ++i) {
    const std::size_t sec = i / static_cast<std::size_t>(r.fb);
    envelope += p.envelope_theta * (p.envelope_mean - envelope) * dt + p.envelope_sigma * std::sqrt(dt) * gauss(rng);
    envelope = std::max(envelope, p.envelope_floor);
    rate_jitter += -p.rate_theta * rate_jitter * dt + p.rate_sigma * std::sqrt(dt) * gauss(rng);
    const double rate = std::clamp(base_rate + p.stage_rate_offset_bpm[r.stages[sec]] + rate_jitter, p.rate_min_bpm,
                                   p.rate_max_bpm);
    phase += 2.0 * std::numbers::pi * rate / 60.0 * dt;
    r.breathing[i] = static_cast<float>(envelope * std::sin(phase) + p.noise_std * gauss(rng));
    env_per_second[sec] += envelope / r.fb;
  }

  const auto lag = static_cast<std::size_t>(std::max(1.0, std::round(p.lag_seconds)));
  r.spo2.resize(p.night_seconds);
  double window = 0.0;
  for (std::size_t t = 0; t < p.night_seconds; ++t) {
    // mean envelope over the preceding `lag` seconds (just second 0 at the start)
    double avg = env_per_second[0];
    if (t > 0) {
      window += env_per_second[t - 1];
      if (t > lag) window -= env_per_second[t - 1 - lag];
      avg = window / static_cast<double>(std::min(t, lag));
    }
    const auto& g = p.response[static_cast<std::size_t>(gender)][r.stages[t]];
    const double drive = std::tanh(p.response_gain * (avg / p.envelope_mean - 1.0));
    const double value = p.spo2_base + g.offset + g.slope * drive + p.spo2_noise_std * gauss(rng);
    r.spo2[t] = static_cast<float>(std::clamp(value, 0.0, 100.0));
  }

  if (p.missing_stage_fraction > 0.0) {
    std::bernoulli_distribution missing(p.missing_stage_fraction);
    for (auto& s : r.stages)
      if (missing(rng)) s = kMissingStage;
  }
  r.validate();
  return r;
}

Json response_json(const SynthProfile& p) {
  Json out = Json::array();
  for (const auto& by_stage : p.response) {
    Json row = Json::array();
    for (const auto& g : by_stage) row.push_back(Json{{"offset", g.offset}, {"slope", g.slope}});
    out.push_back(row);
  }
  return out;
}

}  // namespace

void SynthProfile::validate() const {
  require(subjects >= 1 && nights_per_subject >= 1, ErrorCode::kConfig, "profile needs subjects and nights");
  require(night_seconds >= 24, ErrorCode::kConfig, "night_seconds must be at least 24");
  require(rate_min_bpm > 0.0 && rate_max_bpm >= rate_min_bpm, ErrorCode::kConfig,
          "breathing-rate range must be positive and ordered");
  require(envelope_mean > 0.0 && envelope_floor > 0.0 && envelope_theta > 0.0 && envelope_sigma >= 0.0,
          ErrorCode::kConfig, "envelope parameters must be positive");
  require(rate_theta > 0.0 && rate_sigma >= 0.0 && noise_std >= 0.0 && spo2_noise_std >= 0.0, ErrorCode::kConfig,
          "rate and noise parameters must be non-negative");
  require(lag_seconds >= 1.0, ErrorCode::kConfig, "lag_seconds must be at least 1");
  require(stage_count >= 1 && stage_count <= 3, ErrorCode::kConfig, "stage_count must be 1, 2 or 3");
  require(female_fraction >= 0.0 && female_fraction <= 1.0, ErrorCode::kConfig, "female_fraction outside [0, 1]");
  require(missing_stage_fraction >= 0.0 && missing_stage_fraction < 1.0, ErrorCode::kConfig,
          "missing_stage_fraction outside [0, 1)");
  for (double d : mean_dwell_s) require(d >= min_dwell_s && d > 0.0, ErrorCode::kConfig, "dwell means below minimum");
  require(min_dwell_s >= 1.0, ErrorCode::kConfig, "min_dwell_s must be at least 1");
}

SynthProfile default_profile() {
  SynthProfile p;
  p.envelope_sigma = 0.05;
  p.response[0] = {GroupResponse{2.0, 1.5}, GroupResponse{2.0, 3.0}, GroupResponse{2.0, 2.5}};
  p.response[1] = {GroupResponse{-2.0, -1.5}, GroupResponse{-2.0, -3.0}, GroupResponse{-2.0, -2.5}};
  return p;
}

Json to_json(const SynthProfile& p) {
  return Json{{"seed", p.seed},
              {"subjects", p.subjects},
              {"nights_per_subject", p.nights_per_subject},
              {"night_seconds", p.night_seconds},
              {"dataset_id", p.dataset_id},
              {"female_fraction", p.female_fraction},
              {"rate_min_bpm", p.rate_min_bpm},
              {"rate_max_bpm", p.rate_max_bpm},
              {"stage_rate_offset_bpm", p.stage_rate_offset_bpm},
              {"rate_theta", p.rate_theta},
              {"rate_sigma", p.rate_sigma},
              {"envelope_mean", p.envelope_mean},
              {"envelope_theta", p.envelope_theta},
              {"envelope_sigma", p.envelope_sigma},
              {"envelope_floor", p.envelope_floor},
              {"noise_std", p.noise_std},
              {"lag_seconds", p.lag_seconds},
              {"spo2_base", p.spo2_base},
              {"response_gain", p.response_gain},
              {"spo2_noise_std", p.spo2_noise_std},
              {"response", response_json(p)},
              {"stage_count", p.stage_count},
              {"mean_dwell_s", p.mean_dwell_s},
              {"min_dwell_s", p.min_dwell_s},
              {"missing_stage_fraction", p.missing_stage_fraction}};
}

SynthProfile synth_profile_from_json(const Json& j) {
  const std::string where = "synth profile";
  require(j.is_object(), ErrorCode::kConfig, where + " must be a JSON object");
  reject_unknown_keys(j,
                      {"seed", "subjects", "nights_per_subject", "night_seconds", "dataset_id", "female_fraction",
                       "rate_min_bpm", "rate_max_bpm", "stage_rate_offset_bpm", "rate_theta", "rate_sigma",
                       "envelope_mean", "envelope_theta", "envelope_sigma", "envelope_floor", "noise_std",
                       "lag_seconds", "spo2_base", "response_gain", "spo2_noise_std", "response", "stage_count",
                       "mean_dwell_s", "min_dwell_s", "missing_stage_fraction"},
                      where);
  SynthProfile p = default_profile();
  p.seed = json_get(j, "seed", p.seed, where);
  p.subjects = json_get(j, "subjects", p.subjects, where);
  p.nights_per_subject = json_get(j, "nights_per_subject", p.nights_per_subject, where);
  p.night_seconds = json_get(j, "night_seconds", p.night_seconds, where);
  p.dataset_id = json_get(j, "dataset_id", p.dataset_id, where);
  p.female_fraction = json_get(j, "female_fraction", p.female_fraction, where);
  p.rate_min_bpm = json_get(j, "rate_min_bpm", p.rate_min_bpm, where);
  p.rate_max_bpm = json_get(j, "rate_max_bpm", p.rate_max_bpm, where);
  p.stage_rate_offset_bpm = json_get(j, "stage_rate_offset_bpm", p.stage_rate_offset_bpm, where);
  p.rate_theta = json_get(j, "rate_theta", p.rate_theta, where);
  p.rate_sigma = json_get(j, "rate_sigma", p.rate_sigma, where);
  p.envelope_mean = json_get(j, "envelope_mean", p.envelope_mean, where);
  p.envelope_theta = json_get(j, "envelope_theta", p.envelope_theta, where);
  p.envelope_sigma = json_get(j, "envelope_sigma", p.envelope_sigma, where);
  p.envelope_floor = json_get(j, "envelope_floor", p.envelope_floor, where);
  p.noise_std = json_get(j, "noise_std", p.noise_std, where);
  p.lag_seconds = json_get(j, "lag_seconds", p.lag_seconds, where);
  p.spo2_base = json_get(j, "spo2_base", p.spo2_base, where);
  p.response_gain = json_get(j, "response_gain", p.response_gain, where);
  p.spo2_noise_std = json_get(j, "spo2_noise_std", p.spo2_noise_std, where);
  p.stage_count = json_get(j, "stage_count", p.stage_count, where);
  p.mean_dwell_s = json_get(j, "mean_dwell_s", p.mean_dwell_s, where);
  p.min_dwell_s = json_get(j, "min_dwell_s", p.min_dwell_s, where);
  p.missing_stage_fraction = json_get(j, "missing_stage_fraction", p.missing_stage_fraction, where);
  if (j.contains("response")) {
    const Json& resp = j.at("response");
    require(resp.is_array() && resp.size() == 2, ErrorCode::kConfig, where + ": response must be [2][3]");
    for (std::size_t g = 0; g < 2; ++g) {
      require(resp[g].is_array() && resp[g].size() == 3, ErrorCode::kConfig, where + ": response must be [2][3]");
      for (std::size_t s = 0; s < 3; ++s) {
        const Json& e = resp[g][s];
        require(e.is_object(), ErrorCode::kConfig, where + ": response entries are {offset, slope}");
        reject_unknown_keys(e, {"offset", "slope"}, where + ".response");
        p.response[g][s].offset = json_get(e, "offset", p.response[g][s].offset, where);
        p.response[g][s].slope = json_get(e, "slope", p.response[g][s].slope, where);
      }
    }
  }
  p.validate();
  return p;
}

std::vector<Record> synth_generate(const SynthProfile& p) {
  p.validate();
  auto rng = stream(p.seed, 0);
  const auto n_female = static_cast<std::size_t>(std::lround(p.female_fraction * static_cast<double>(p.subjects)));
  std::vector<int> genders(p.subjects, 0);
  std::fill(genders.begin(), genders.begin() + static_cast<std::ptrdiff_t>(n_female), 1);
  std::shuffle(genders.begin(), genders.end(), rng);
  std::uniform_real_distribution<double> rate(p.rate_min_bpm, p.rate_max_bpm);

  std::vector<Record> out;
  out.reserve(p.subjects * p.nights_per_subject);
  for (std::size_t s = 0; s < p.subjects; ++s) {
    char id[32];
    std::snprintf(id, sizeof(id), "-s%03zu", s);
    const double base_rate = rate(rng);
    for (std::size_t n = 0; n < p.nights_per_subject; ++n) {
      auto night_rng = stream(p.seed, 1 + s * p.nights_per_subject + n);
      out.push_back(generate_night(p, p.dataset_id + id, genders[s], base_rate, night_rng));
    }
  }
  return out;
}

Json write_synth_dataset(const SynthProfile& profile, const std::vector<Record>& records,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Json files = Json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    char name[64];
    std::snprintf(name, sizeof(name), "night%04zu.rsp1", i);
    write_record(r, dir / name);
    files.push_back(Json{{"file", name}, {"subject_id", r.subject_id}, {"gender", r.gender},
                         {"duration_s", r.duration_s}});
  }
  const Json generator = to_json(profile);
  Json manifest{{"generator", generator},
                {"config_hash", hex64(fnv1a64(generator.dump()))},
                {"tool_version", std::string(kToolVersion)},
                {"files", files}};
  write_json_file((dir / "manifest.json").string(), manifest);
  return manifest;
}

}  // namespace gbu::data
