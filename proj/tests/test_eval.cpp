#include <gtest/gtest.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "gbu/common/error.hpp"
#include "gbu/data/synth.hpp"
#include "gbu/eval/evaluate.hpp"
#include "gbu/eval/metrics.hpp"
#include "gbu/model/model.hpp"

using namespace gbu;
using namespace gbu::eval;

namespace {

template <typename F>
void expect_error(F&& f, ErrorCode code) {
  try {
    f();
    FAIL() << "expected error " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

// Captures warnings from the default logger for the lifetime of the object.
struct LogCapture {
  std::ostringstream out;
  std::shared_ptr<spdlog::logger> previous = spdlog::default_logger();
  LogCapture() {
    spdlog::set_default_logger(
        std::make_shared<spdlog::logger>("capture", std::make_shared<spdlog::sinks::ostream_sink_mt>(out)));
  }
  ~LogCapture() { spdlog::set_default_logger(previous); }
};

// Scalar re-implementation of the three formulas.
Metrics oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0, abs_sum = 0, sq_sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    abs_sum += std::fabs(a[i] - b[i]);
    sq_sum += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return {sab / std::sqrt(saa * sbb), abs_sum / n, std::sqrt(sq_sum / n), true};
}

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double mean, double sd) {
  std::normal_distribution<double> g(mean, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

NightPrediction random_night(std::mt19937_64& rng, const std::string& dataset, const std::string& subject,
                             std::size_t seconds) {
  NightPrediction p;
  p.dataset_id = dataset;
  p.subject_id = subject;
  p.y = gaussian(rng, seconds, 95, 2);
  p.y_hat = p.y;
  std::normal_distribution<double> err(0, 1.5);
  for (auto& x : p.y_hat) x += err(rng);
  p.stages.assign(seconds, 2);
  return p;
}

void expect_jensen(const Aggregate& a) {
  EXPECT_LE(a.mae, a.rmse + 1e-12);
}

}  // namespace

TEST(Segment, CountsAndTailDrop) {
  EXPECT_EQ(segment(480).size(), 2u);
  const auto one = segment(250);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], (std::pair<std::size_t, std::size_t>{0, 240}));
  const auto two = segment(480);
  EXPECT_EQ(two[1], (std::pair<std::size_t, std::size_t>{240, 480}));
}

TEST(Segment, ShortSeriesWarns) {
  LogCapture capture;
  EXPECT_TRUE(segment(239).empty());
  EXPECT_NE(capture.out.str().find("warning"), std::string::npos);
}

TEST(Metrics, IdentityIsPerfect) {
  const std::vector<double> y{90, 93, 91, 97, 95};
  const auto m = metrics(y, y);
  EXPECT_NEAR(m.corr, 1.0, 1e-15);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
}

TEST(Metrics, HandExample) {
  const std::vector<double> y_hat{90, 92, 94, 96}, y{91, 91, 95, 95};
  const auto m = metrics(y_hat, y);
  EXPECT_NEAR(m.corr, 16.0 / std::sqrt(320.0), 1e-15);
  EXPECT_NEAR(m.mae, 1.0, 1e-15);
  EXPECT_NEAR(m.rmse, 1.0, 1e-15);
}

TEST(Metrics, FlatSeriesHasNoCorrelation) {
  const std::vector<double> y_hat{90, 92, 94, 96}, flat{95, 95, 95, 95};
  const auto m = metrics(y_hat, flat);
  EXPECT_FALSE(m.corr_defined);
  EXPECT_EQ(m.corr, 0.0);
  EXPECT_NEAR(m.mae, 2.5, 1e-15);
  EXPECT_NEAR(m.rmse, 3.0, 1e-15);
  EXPECT_FALSE(metrics(flat, y_hat).corr_defined);
}

TEST(Metrics, TooShortIsError) {
  const std::vector<double> one{1.0};
  expect_error([&] { metrics(one, one); }, ErrorCode::kLength);
  const std::vector<double> two{1.0, 2.0};
  expect_error([&] { metrics(one, two); }, ErrorCode::kDimension);
}

TEST(Metrics, MatchesScalarOracleOnRandomSegments) {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = gaussian(rng, 240, 95, 2);
    const auto y_hat = gaussian(rng, 240, 94, 1.5);
    const auto got = metrics(y_hat, y);
    const auto want = oracle(y_hat, y);
    EXPECT_NEAR(got.corr, want.corr, 1e-9);
    EXPECT_NEAR(got.mae, want.mae, 1e-9);
    EXPECT_NEAR(got.rmse, want.rmse, 1e-9);
    EXPECT_LE(got.mae, got.rmse);
  }
}

TEST(Metrics, CorrelationIgnoresPositiveAffineMaps) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> scale(0.05, 20.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = gaussian(rng, 240, 95, 2);
    const auto y_hat = gaussian(rng, 240, 94, 1.5);
    auto mapped = y_hat;
    const double a = scale(rng), b = shift(rng);
    for (auto& x : mapped) x = a * x + b;
    EXPECT_NEAR(metrics(mapped, y).corr, metrics(y_hat, y).corr, 1e-9);
  }
}

TEST(Quantile, InterpolatesOneToHundred) {
  std::vector<double> v(100);
  for (std::size_t i = 0; i < 100; ++i) v[i] = static_cast<double>(i + 1);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 50.5);
  EXPECT_DOUBLE_EQ(quantile(v, 0.25), 25.75);
  EXPECT_DOUBLE_EQ(quantile(v, 0.75), 75.25);
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 100.0);
  std::shuffle(v.begin(), v.end(), std::mt19937_64(2));
  const auto s = series_stats(v);
  EXPECT_DOUBLE_EQ(s.median, 50.5);
  EXPECT_DOUBLE_EQ(s.q1, 25.75);
  EXPECT_DOUBLE_EQ(s.q3, 75.25);
  EXPECT_DOUBLE_EQ(s.mean, 50.5);
  EXPECT_EQ(s.count, 100u);
}

TEST(Score, HandBuiltAggregates) {
  NightPrediction a;
  a.dataset_id = "d";
  a.subject_id = "a";
  a.y.assign(480, 95.0);
  a.y_hat.assign(480, 95.0);
  for (std::size_t t = 0; t < 240; ++t) {
    a.y[t] = 94.0 + static_cast<double>(t % 3);
    a.y_hat[t] = a.y[t] + 1.0;
  }
  // second segment flat: corr excluded, errors zero
  a.stages.assign(480, 2);
  const std::vector<NightPrediction> preds{a};
  const auto report = score(preds, {});
  EXPECT_EQ(report.overall.segments, 2u);
  EXPECT_EQ(report.overall.excluded, 1u);
  EXPECT_NEAR(report.overall.corr, 1.0, 1e-12);
  EXPECT_NEAR(report.overall.mae, 0.5, 1e-12);
  EXPECT_NEAR(report.overall.rmse, 0.5, 1e-12);
  ASSERT_EQ(report.nights.size(), 1u);
  EXPECT_EQ(report.by_dataset.at("d").segments, 2u);
}

TEST(Score, SegmentAndNightMeansDiffer) {
  std::mt19937_64 rng(7);
  std::vector<NightPrediction> preds{random_night(rng, "d", "a", 240), random_night(rng, "d", "b", 960)};
  for (auto& x : preds[0].y_hat) x += 3.0;
  EvalOptions opts;
  const auto seg = score(preds, opts);
  opts.aggregation = Aggregation::kNight;
  const auto night = score(preds, opts);
  EXPECT_EQ(seg.overall.segments, 5u);
  EXPECT_EQ(night.overall_night.nights, 2u);
  const double m0 = seg.nights[0].score.mae, m1 = seg.nights[1].score.mae;
  EXPECT_NEAR(night.headline().mae, (m0 + m1) / 2, 1e-12);
  EXPECT_NEAR(seg.headline().mae, (m0 * 1 + m1 * 4) / 5, 1e-12);
  EXPECT_NE(seg.headline().mae, night.headline().mae);
}

TEST(Score, RandomReportsKeepBookkeepingAndJensen) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<NightPrediction> preds;
    std::size_t expected_segments = 0;
    const std::size_t n = 1 + rng() % 6;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t seconds = 240 + rng() % 1000;
      expected_segments += seconds / 240;
      preds.push_back(random_night(rng, rng() % 2 ? "x" : "y", "s" + std::to_string(i), seconds));
    }
    const auto report = score(preds, {});
    EXPECT_EQ(report.overall.segments, expected_segments);
    EXPECT_EQ(report.overall_night.segments, expected_segments);
    std::size_t by_dataset = 0;
    for (const auto& [name, a] : report.by_dataset) {
      by_dataset += a.segments;
      expect_jensen(a);
    }
    EXPECT_EQ(by_dataset, expected_segments);
    expect_jensen(report.overall);
    expect_jensen(report.overall_night);
    for (const auto& [name, a] : report.by_dataset_night) expect_jensen(a);
    for (const auto& night : report.nights) expect_jensen(night.score);
  }
}

TEST(Score, IndependentOfNightOrder) {
  std::mt19937_64 rng(9);
  std::vector<NightPrediction> preds;
  for (int i = 0; i < 7; ++i) preds.push_back(random_night(rng, i % 2 ? "x" : "y", "s" + std::to_string(i), 720));
  const auto base = to_json(score(preds, {})).dump();
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(preds.begin(), preds.end(), rng);
    EXPECT_EQ(to_json(score(preds, {})).dump(), base);
  }
}

TEST(Score, JsonCarriesBothMeansAndHeadline) {
  std::mt19937_64 rng(10);
  const std::vector<NightPrediction> preds{random_night(rng, "d", "a", 480)};
  auto report = score(preds, {});
  report.config_hash = "abc";
  const auto j = to_json(report);
  EXPECT_EQ(j.at("aggregation"), "segment");
  EXPECT_TRUE(j.at("overall").contains("segment_mean"));
  EXPECT_TRUE(j.at("overall").contains("night_mean"));
  EXPECT_EQ(j.at("headline").at("mae"), j.at("overall").at("segment_mean").at("mae"));
  EXPECT_EQ(j.at("config_hash"), "abc");
  EXPECT_EQ(parse_aggregation("night"), Aggregation::kNight);
  expect_error([] { parse_aggregation("mean"); }, ErrorCode::kConfig);
}

TEST(Evaluate, EmptyTestSetIsError) {
  const auto m = model::build_model<float>(model::tiny_config(), 1);
  expect_error([&] { evaluate(m, nullptr, {}, {}); }, ErrorCode::kEmptyInput);
}

TEST(Evaluate, PerfectPredictorOnSyntheticNights) {
  auto p = data::default_profile();
  p.subjects = 4;
  p.night_seconds = 720;
  const auto records = data::synth_generate(p);
  std::vector<NightPrediction> preds;
  for (const auto& r : records) {
    NightPrediction n;
    n.subject_id = r.subject_id;
    n.dataset_id = r.dataset_id;
    n.y.assign(r.spo2.begin(), r.spo2.end());
    n.y_hat = n.y;
    n.stages = r.stages;
    preds.push_back(std::move(n));
  }
  const auto report = score(preds, {});
  EXPECT_EQ(report.overall.mae, 0.0);
  EXPECT_EQ(report.overall.rmse, 0.0);
  EXPECT_NEAR(report.overall.corr, 1.0, 1e-12);
  EXPECT_EQ(report.overall.segments, 12u);
}

TEST(Evaluate, DumpRoundTripsAndMatchesNightMae) {
  auto p = data::default_profile();
  p.subjects = 2;
  p.night_seconds = 480;
  const auto records = data::synth_generate(p);
  const auto m = model::build_model<float>(model::tiny_config(model::Variant::kGated), 5);
  const auto gate = gate::identity_gate_map(2, 3);
  const auto report = evaluate(m, &gate, records, {});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto pred = predict_night(m, &gate, records[i]);
    EXPECT_EQ(pred.gate.size(), 480u);
    const auto path = std::filesystem::temp_directory_path() / ("gbu_eval_dump_" + std::to_string(i) + ".tsv");
    dump_predictions(pred, path);
    const auto rows = read_dump(path);
    ASSERT_EQ(rows.size(), records[i].fo * records[i].duration_s);
    double mae = 0.0;
    for (std::size_t t = 0; t < rows.size(); ++t) {
      EXPECT_EQ(rows[t].t, t);
      EXPECT_EQ(rows[t].y_hat_raw, pred.y_hat[t]);
      EXPECT_EQ(rows[t].y_hat_rounded, round_half_up(pred.y_hat[t]));
      EXPECT_GE(rows[t].gate_status, 1);
      mae += std::fabs(rows[t].y_hat_raw - rows[t].y_true);
    }
    mae /= static_cast<double>(rows.size());
    const auto night = std::find_if(report.nights.begin(), report.nights.end(),
                                    [&](const NightScore& s) { return s.subject_id == records[i].subject_id; });
    ASSERT_NE(night, report.nights.end());
    EXPECT_NEAR(mae, night->score.mae, 1e-6);
    std::filesystem::remove(path);
  }
}

TEST(Evaluate, RoundHalfUp) {
  EXPECT_EQ(round_half_up(94.4), 94);
  EXPECT_EQ(round_half_up(94.5), 95);
  EXPECT_EQ(round_half_up(94.49999), 94);
  EXPECT_EQ(round_half_up(-0.5), 0);
}

TEST(GroupDistribution, SingleGroupCoversEveryValue) {
  std::mt19937_64 rng(11);
  auto pa = data::default_profile();
  pa.subjects = 2;
  pa.night_seconds = 240;
  auto records = data::synth_generate(pa);
  std::vector<NightPrediction> preds;
  std::vector<double> all;
  for (auto& r : records) {
    r.vars["site"] = 3;
    auto n = random_night(rng, r.dataset_id, r.subject_id, 240);
    all.insert(all.end(), n.y.begin(), n.y.end());
    preds.push_back(std::move(n));
  }
  const auto dist = group_distribution(records, preds, "site");
  ASSERT_EQ(dist.groups.size(), 1u);
  const auto want = series_stats(all);
  const auto& got = dist.groups.at(3).truth;
  EXPECT_EQ(got.count, 480u);
  EXPECT_DOUBLE_EQ(got.median, want.median);
  EXPECT_DOUBLE_EQ(got.min, want.min);
  EXPECT_DOUBLE_EQ(got.max, want.max);
  expect_error([&] { group_distribution(records, preds, "race"); }, ErrorCode::kUnknownGroup);
}

TEST(GroupDistribution, GeneratorOffsetsShowUpInGroupMeans) {
  auto p = data::default_profile();
  p.subjects = 8;
  p.night_seconds = 1440;
  const auto records = data::synth_generate(p);
  std::vector<NightPrediction> preds;
  for (const auto& r : records) {
    NightPrediction n;
    n.subject_id = r.subject_id;
    n.dataset_id = r.dataset_id;
    n.y.assign(r.spo2.begin(), r.spo2.end());
    n.y_hat = n.y;
    preds.push_back(std::move(n));
  }
  const auto dist = group_distribution(records, preds, "gender");
  ASSERT_EQ(dist.groups.size(), 2u);
  EXPECT_NEAR(dist.groups.at(0).truth.mean - dist.groups.at(1).truth.mean, 4.0, 0.5);
}
