#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "gbu/common/error.hpp"
#include "gbu/data/synth.hpp"
#include "gbu/model/model.hpp"
#include "gbu/train/adam.hpp"
#include "gbu/train/trainer.hpp"

using namespace gbu;
using namespace gbu::train;

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

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("gbu_train_" + name);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<data::Record> nights(std::size_t subjects, std::size_t seconds, std::uint64_t seed = 1) {
  auto p = data::default_profile();
  p.seed = seed;
  p.subjects = subjects;
  p.night_seconds = seconds;
  return data::synth_generate(p);
}

template <typename T>
bool same_params(const model::ParamSet<T>& a, const model::ParamSet<T>& b, bool trainable_only = false) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, e] : a) {
    if (trainable_only && !e.trainable) continue;
    if (!b.contains(name) || b.at(name).values() != e.tensor.values()) return false;
  }
  return true;
}

// Textbook scalar Adam, written independently of the library.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g, double lr, double b1, double b2, double eps) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  std::vector<double> p{0.5, -1.25}, g{0, 0}, m{0, 0}, v{0, 0};
  for (std::size_t t = 1; t <= 3; ++t) adam_update<double>(p, g, m, v, t, {});
  EXPECT_EQ(p, (std::vector<double>{0.5, -1.25}));
}

TEST(Adam, FirstStepIsMinusLearningRate) {
  std::vector<double> p{0.0}, g{1.0}, m{0.0}, v{0.0};
  adam_update<double>(p, g, m, v, 1, {});
  EXPECT_NEAR(p[0], -2e-4 / (1 + 1e-8), 1e-18);
}

TEST(Adam, QuadraticMatchesScalarOracle) {
  // f(x) = 0.5 * a * (x - c)^2, gradient a * (x - c)
  const AdamOptions opts{0.05, 0.9, 0.999, 1e-8};
  for (double a : {0.3, 2.0, 11.0}) {
    std::vector<double> p{1.7}, m{0}, v{0};
    double x = 1.7;
    ScalarAdam oracle;
    for (std::size_t t = 1; t <= 3; ++t) {
      std::vector<double> g{a * (p[0] + 0.4)};
      adam_update<double>(p, g, m, v, t, opts);
      x = oracle.step(x, a * (x + 0.4), opts.lr, opts.beta1, opts.beta2, opts.eps);
      EXPECT_NEAR(p[0], x, 1e-10);
    }
  }
}

TEST(Adam, NonFiniteGradientRejectedBeforeAnyUpdate) {
  model::ParamSet<double> params;
  params.add("a", nn::Tensor<double>::from_data({2}, {1.0, 2.0}), true);
  params.add("b", nn::Tensor<double>::from_data({1}, {3.0}), true);
  params.at("a").node().grad = {0.5, 0.5};
  params.at("b").node().grad = {std::numeric_limits<double>::quiet_NaN()};
  AdamState<double> state;
  expect_error([&] { adam_step(params, state); }, ErrorCode::kNonFinite);
  EXPECT_EQ(params.at("a").values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(state.step, 0u);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const auto records = nights(2, 96);
  TrainOptions opts;
  opts.epochs = 2;
  opts.seed = 4;
  opts.adam.lr = 0.0;
  const auto config = model::tiny_config(model::Variant::kBackbone);
  const auto before = model::build_model<float>(config, opts.seed);
  const auto result = train::train(config, records, opts);
  EXPECT_TRUE(same_params(before.params, result.state.model.params, true));
  // batch-norm running statistics are buffers and still move
  for (const auto& [name, e] : before.params)
    if (!e.trainable) EXPECT_TRUE(name.find("running") != std::string::npos) << name;
  EXPECT_EQ(result.log.epochs.size(), 2u);
  EXPECT_EQ(result.log.epochs[0].steps, 2u);
}

TEST(Train, EmptyDatasetIsError) {
  TrainOptions opts;
  opts.epochs = 1;
  expect_error([&] { train::train(model::tiny_config(), {}, opts); }, ErrorCode::kEmptyInput);
}

TEST(Train, SameSeedGivesBitIdenticalCheckpoints) {
  const auto records = nights(3, 96);
  for (auto variant : {model::Variant::kBackbone, model::Variant::kVarAug, model::Variant::kGated}) {
    TrainOptions opts;
    opts.epochs = 3;
    opts.seed = 9;
    const auto config = model::tiny_config(variant);
    const auto a = train::train(config, records, opts);
    const auto b = train::train(config, records, opts);
    const auto pa = temp_path("det_a.gbu1"), pb = temp_path("det_b.gbu1");
    save_train_state(pa, a.state);
    save_train_state(pb, b.state);
    EXPECT_EQ(file_bytes(pa), file_bytes(pb)) << model::to_string(variant);
    // save -> load -> save is closed
    save_train_state(pb, load_train_state(pa));
    EXPECT_EQ(file_bytes(pa), file_bytes(pb));
    std::filesystem::remove(pa);
    std::filesystem::remove(pb);
  }
}

TEST(Train, DifferentSeedsDiffer) {
  const auto records = nights(2, 96);
  TrainOptions opts;
  opts.epochs = 1;
  opts.seed = 1;
  const auto a = train::train(model::tiny_config(), records, opts);
  opts.seed = 2;
  const auto b = train::train(model::tiny_config(), records, opts);
  EXPECT_FALSE(same_params(a.state.model.params, b.state.model.params));
}

TEST(Train, ResumeFromCheckpointIsBitIdentical) {
  const auto records = nights(3, 96);
  TrainOptions opts;
  opts.epochs = 4;
  opts.seed = 17;
  const auto config = model::tiny_config(model::Variant::kGated);
  const auto straight = train::train(config, records, opts);

  auto state = init_train_state(config, opts);
  TrainLog log;
  train_epochs(state, records, opts, 2, log);
  const auto mid = temp_path("resume.gbu1");
  save_train_state(mid, state);
  auto resumed = load_train_state(mid);
  EXPECT_EQ(resumed.epochs_done, 2u);
  train_epochs(resumed, records, opts, 4, log);

  EXPECT_TRUE(same_params(straight.state.model.params, resumed.model.params));
  EXPECT_EQ(straight.state.adam.step, resumed.adam.step);
  EXPECT_EQ(straight.state.adam.m, resumed.adam.m);
  EXPECT_EQ(straight.state.adam.v, resumed.adam.v);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(straight.log.epochs[i].loss, log.epochs[i].loss);
  std::filesystem::remove(mid);
}

TEST(Train, PeriodicCheckpointsWritten) {
  const auto records = nights(1, 96);
  const auto dir = temp_path("ckpt_dir");
  std::filesystem::remove_all(dir);
  TrainOptions opts;
  opts.epochs = 4;
  opts.checkpoint_every = 2;
  opts.checkpoint_dir = dir;
  (void)train::train(model::tiny_config(), records, opts);
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_0002.gbu1"));
  EXPECT_TRUE(std::filesystem::exists(dir / "epoch_0004.gbu1"));
  EXPECT_FALSE(std::filesystem::exists(dir / "epoch_0003.gbu1"));
  EXPECT_EQ(load_train_state(dir / "epoch_0002.gbu1").epochs_done, 2u);
  std::filesystem::remove_all(dir);
}

TEST(Train, LogCarriesSeedAndJsonLines) {
  const auto records = nights(1, 96);
  TrainOptions opts;
  opts.epochs = 2;
  opts.seed = 33;
  const auto result = train::train(model::tiny_config(), records, opts);
  const auto path = temp_path("log.jsonl");
  result.log.write_jsonl(path);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = Json::parse(line);
    EXPECT_EQ(j.at("seed"), 33u);
    EXPECT_EQ(j.at("epoch"), ++n);
    EXPECT_TRUE(std::isfinite(j.at("loss").get<double>()));
  }
  EXPECT_EQ(n, 2u);
  std::filesystem::remove(path);
}

TEST(Pipeline, OneHeadEqualsPlainContinuation) {
  const auto records = nights(4, 96);
  auto config = model::tiny_config(model::Variant::kGated);
  config.n_gate_heads = 1;
  PipelineOptions opts;
  opts.train.epochs = 5;
  opts.train.seed = 21;
  const auto piped = train_gated_pipeline(config, records, opts);
  const auto plain = train::train(config, records, opts.train, gate::single_head_gate_map(config.v_states, config.u_classes));
  EXPECT_TRUE(same_params(piped.state.model.params, plain.state.model.params));
  for (const auto& [k, h] : piped.gate.table) EXPECT_EQ(h, 1);
  ASSERT_EQ(piped.log.epochs.size(), 5u);
  EXPECT_EQ(piped.log.epochs[0].phase, "pretrain");
  EXPECT_EQ(piped.log.epochs[1].phase, "gated");
}

TEST(Pipeline, ExpandedHeadsAgreeBeforeFirstGatedStep) {
  const auto records = nights(2, 96);
  auto single = model::tiny_config(model::Variant::kGated);
  single.n_gate_heads = 1;
  TrainOptions opts;
  opts.epochs = 2;
  auto state = init_train_state(single, opts, gate::single_head_gate_map(2, 3));
  TrainLog log;
  train_epochs(state, records, opts, 2, log);
  const auto expanded = expand_heads(state, 6, gate::identity_gate_map(2, 3));
  EXPECT_EQ(expanded.model.params.count(), state.model.params.count() +
                                               5 * (state.model.params.count() -
                                                    [&] {
                                                      std::size_t n = 0;
                                                      for (const auto& [name, e] : state.model.params)
                                                        if (e.trainable && !name.starts_with("heads.1.")) n += e.tensor.numel();
                                                      return n;
                                                    }()));
  for (const auto& [name, m] : expanded.adam.m)
    if (name.starts_with("heads.4.")) EXPECT_EQ(m, state.adam.m.at("heads.1." + name.substr(8)));

  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  std::vector<float> breathing(96 * 10);
  for (auto& b : breathing) b = g(rng);
  const auto x = model::make_input<float>(expanded.model.config, breathing, 1);
  const auto pred = model::forward(expanded.model, x, 1, {}, &*expanded.gate, {nn::Mode::kEval, nullptr});
  const auto& ph = pred.per_head.values();
  const std::size_t len = pred.y_hat.numel();
  for (std::size_t h = 1; h < 6; ++h)
    for (std::size_t t = 0; t < len; ++t) ASSERT_EQ(ph[h * len + t], ph[t]);
}

TEST(Pipeline, HeadCountMismatchRejected) {
  const auto records = nights(2, 96);
  auto config = model::tiny_config(model::Variant::kGated);
  config.n_gate_heads = 2;
  PipelineOptions opts;
  opts.train.epochs = 2;
  opts.gate_mode = GateMode::kIdentity;
  expect_error([&] { train_gated_pipeline(config, records, opts); }, ErrorCode::kConfig);
  EXPECT_EQ(parse_gate_mode("grad-sim"), GateMode::kGradSim);
  expect_error([] { parse_gate_mode("random"); }, ErrorCode::kConfig);
}

TEST(Train, OverfitsOneTenMinuteNightWithSteadyLoss) {
  const auto records = nights(1, 600);
  const auto config = model::small_config(model::Variant::kBackbone);
  TrainOptions opts;
  opts.epochs = 500;
  opts.seed = 1;
  const auto result = train::train(config, records, opts);

  const auto d = prepare(config, records[0], true);
  const auto pred = model::forward(result.state.model, d.x, d.v, {}, nullptr, {nn::Mode::kEval, nullptr});
  const auto terms = model::loss_main(pred.y_hat, std::span<const float>(d.y), config.lambda);
  EXPECT_LT(terms.l1, 0.05);

  // the loss is bounded below by -lambda. Train-mode activation slopes are
  // random, so the band applies to 10-epoch means measured from that floor.
  constexpr std::size_t kWindow = 10;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t start = 50; start + kWindow <= result.log.epochs.size(); start += kWindow) {
    double excess = 0.0;
    for (std::size_t e = start; e < start + kWindow; ++e) excess += result.log.epochs[e].loss + config.lambda;
    excess /= kWindow;
    EXPECT_LE(excess, 1.05 * best) << "epochs " << start + 1 << ".." << start + kWindow;
    best = std::min(best, excess);
  }
}
