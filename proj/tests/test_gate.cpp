#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "gbu/common/error.hpp"
#include "gbu/data/synth.hpp"
#include "gbu/gate/gate_map.hpp"
#include "gbu/gate/similarity.hpp"
#include "gbu/model/model.hpp"

using namespace gbu;
using namespace gbu::gate;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kContract;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

std::vector<StateGradient> states_2x2(const std::vector<std::vector<double>>& g) {
  std::vector<StateGradient> out;
  for (std::size_t i = 0; i < g.size(); ++i) out.push_back({static_cast<int>(i / 2), static_cast<int>(i % 2), g[i], 1});
  return out;
}

// Average linkage through the Lance-Williams update on a similarity table.
std::set<std::set<std::size_t>> oracle_clusters(const std::vector<std::vector<double>>& g, std::size_t n_clusters) {
  const std::size_t n = g.size();
  std::vector<std::vector<double>> s(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0, a = 0, b = 0;
      for (std::size_t k = 0; k < g[i].size(); ++k) {
        d += g[i][k] * g[j][k];
        a += g[i][k] * g[i][k];
        b += g[j][k] * g[j][k];
      }
      s[i][j] = d / std::sqrt(a * b);
    }
  std::vector<std::set<std::size_t>> members(n);
  std::vector<bool> alive(n, true);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  for (std::size_t live = n; live > n_clusters; --live) {
    std::size_t bi = 0, bj = 0;
    double best = -2;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (alive[i] && alive[j] && s[i][j] > best) {
          best = s[i][j];
          bi = i;
          bj = j;
        }
    const double ni = static_cast<double>(members[bi].size()), nj = static_cast<double>(members[bj].size());
    for (std::size_t k = 0; k < n; ++k)
      if (alive[k] && k != bi && k != bj) s[bi][k] = s[k][bi] = (ni * s[bi][k] + nj * s[bj][k]) / (ni + nj);
    members[bi].insert(members[bj].begin(), members[bj].end());
    alive[bj] = false;
  }
  std::set<std::set<std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) out.insert(members[i]);
  return out;
}

std::set<std::set<std::size_t>> map_clusters(const GateMap& map, std::size_t u_states, std::size_t n_states) {
  std::map<int, std::set<std::size_t>> by_head;
  for (std::size_t i = 0; i < n_states; ++i)
    by_head[map.lookup(static_cast<int>(i / u_states), static_cast<int>(i % u_states))].insert(i);
  std::set<std::set<std::size_t>> out;
  for (auto& [h, m] : by_head) out.insert(m);
  return out;
}

}  // namespace

TEST(Cosine, Examples) {
  const std::vector<double> g{0.3, -2.0, 5.0};
  EXPECT_NEAR(cosine_similarity(g, g), 1.0, 1e-15);
  EXPECT_EQ(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 0.0);
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 1}), 0.8, 1e-15);
}

TEST(Cosine, Errors) {
  EXPECT_EQ(code_of([] { cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}); }),
            ErrorCode::kUndefinedSimilarity);
  EXPECT_EQ(code_of([] { cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}); }),
            ErrorCode::kDimension);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + static_cast<std::size_t>(rng() % 40);
    const auto a = random_vector(rng, n), b = random_vector(rng, n);
    auto ca = a;
    const double c = scale(rng);
    for (auto& x : ca) x *= c;
    const double s = cosine_similarity(a, b);
    EXPECT_EQ(s, cosine_similarity(b, a));
    EXPECT_NEAR(s, cosine_similarity(ca, b), 1e-12);
    EXPECT_LE(std::abs(s), 1.0);
  }
}

TEST(BuildGateMap, FourStateExampleWithTwoHeads) {
  const auto map = build_gate_map(states_2x2({{1, 0}, {0.9, 0.1}, {0, 1}, {0.1, 0.9}}), 2, 2, 2);
  EXPECT_EQ(map.lookup(0, 0), 1);
  EXPECT_EQ(map.lookup(0, 1), 1);
  EXPECT_EQ(map.lookup(1, 0), 2);
  EXPECT_EQ(map.lookup(1, 1), 2);
  EXPECT_EQ(map_clusters(map, 2, 4), oracle_clusters({{1, 0}, {0.9, 0.1}, {0, 1}, {0.1, 0.9}}, 2));
}

TEST(BuildGateMap, AsManyHeadsAsStatesIsIdentity) {
  std::mt19937_64 rng(4);
  std::vector<std::vector<double>> g;
  for (int i = 0; i < 6; ++i) g.push_back(random_vector(rng, 5));
  std::vector<StateGradient> states;
  for (int i = 0; i < 6; ++i) states.push_back({i / 3, i % 3, g[static_cast<std::size_t>(i)], 1});
  const auto map = build_gate_map(states, 6, 2, 3);
  EXPECT_EQ(map.table, identity_gate_map(2, 3).table);
}

TEST(BuildGateMap, OneHeadTakesEverything) {
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> g;
  for (int i = 0; i < 4; ++i) g.push_back(random_vector(rng, 3));
  const auto map = build_gate_map(states_2x2(g), 1, 2, 2);
  for (const auto& [k, h] : map.table) EXPECT_EQ(h, 1);
}

TEST(BuildGateMap, MatchesLanceWilliamsOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t u_states = 1 + rng() % 4, v_states = 1 + rng() % 3;
    const std::size_t n = u_states * v_states;
    const std::size_t heads = 1 + rng() % n;
    std::vector<std::vector<double>> g;
    std::vector<StateGradient> states;
    for (std::size_t i = 0; i < n; ++i) {
      g.push_back(random_vector(rng, 6));
      states.push_back({static_cast<int>(i / u_states), static_cast<int>(i % u_states), g.back(), 1});
    }
    const auto map = build_gate_map(states, heads, v_states, u_states);
    EXPECT_EQ(map_clusters(map, u_states, n), oracle_clusters(g, heads));
    std::set<int> image;
    for (const auto& [k, h] : map.table) image.insert(h);
    EXPECT_EQ(image.size(), heads);
    EXPECT_EQ(*image.begin(), 1);
    EXPECT_EQ(*image.rbegin(), static_cast<int>(heads));
  }
}

TEST(BuildGateMap, ClustersNumberedBySmallestMember) {
  // states 0 and 3 pair up, as do 1 and 2; the cluster holding state 0 is head 1
  const auto map = build_gate_map(states_2x2({{1, 0}, {0, 1}, {0.1, 0.9}, {0.9, 0.1}}), 2, 2, 2);
  EXPECT_EQ(map.lookup(0, 0), 1);
  EXPECT_EQ(map.lookup(1, 1), 1);
  EXPECT_EQ(map.lookup(0, 1), 2);
  EXPECT_EQ(map.lookup(1, 0), 2);
}

TEST(BuildGateMap, DeterministicAndPermutationConsistent) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> g;
    for (int i = 0; i < 6; ++i) g.push_back(random_vector(rng, 4));
    std::vector<StateGradient> states;
    for (int i = 0; i < 6; ++i) states.push_back({i / 3, i % 3, g[static_cast<std::size_t>(i)], 1});
    const auto a = build_gate_map(states, 3, 2, 3);
    auto shuffled = states;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(build_gate_map(shuffled, 3, 2, 3).table, a.table);

    // relabel: state i now carries vector perm[i]
    std::vector<std::size_t> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<StateGradient> relabeled;
    for (int i = 0; i < 6; ++i) relabeled.push_back({i / 3, i % 3, g[perm[static_cast<std::size_t>(i)]], 1});
    const auto b = build_gate_map(relabeled, 3, 2, 3);
    // groups of vectors must agree
    std::set<std::set<std::size_t>> ga, gb;
    for (const auto& c : map_clusters(a, 3, 6)) ga.insert(c);
    for (const auto& c : map_clusters(b, 3, 6)) {
      std::set<std::size_t> vectors;
      for (auto i : c) vectors.insert(perm[i]);
      gb.insert(vectors);
    }
    EXPECT_EQ(ga, gb);
  }
}

TEST(BuildGateMap, EmptyStateMergedIntoSameVNeighbour) {
  std::vector<StateGradient> states{{0, 0, {1, 0}, 1}, {0, 1, {0, 1}, 1}, {0, 2, {1, 1}, 1},
                                    {1, 0, {-1, 0}, 1}, {1, 1, {0, -1}, 1}};
  const auto map = build_gate_map(states, 5, 2, 3);
  EXPECT_EQ(map.lookup(1, 2), map.lookup(1, 1));
  EXPECT_EQ(map.provenance.at("merged_states").at("v=1,u=2"), "v=1,u=1");
}

TEST(BuildGateMap, HeadCountOutOfRange) {
  const auto states = states_2x2({{1, 0}, {0, 1}, {1, 1}, {1, -1}});
  EXPECT_EQ(code_of([&] { build_gate_map(states, 0, 2, 2); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([&] { build_gate_map(states, 5, 2, 2); }), ErrorCode::kConfig);
}

TEST(BuildGateMap, ProvenanceSimilarityIsSymmetricWithUnitDiagonal) {
  std::mt19937_64 rng(12);
  std::vector<std::vector<double>> g;
  for (int i = 0; i < 4; ++i) g.push_back(random_vector(rng, 7));
  const auto map = build_gate_map(states_2x2(g), 2, 2, 2);
  const auto sim = map.provenance.at("similarity").get<std::vector<std::vector<double>>>();
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(sim[i][i], 1.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(sim[i][j], sim[j][i]);
  }
  const auto back = gate_map_from_json(to_json(map));
  EXPECT_EQ(back.table, map.table);
  EXPECT_EQ(back.provenance, map.provenance);
}

TEST(GateLookup, SixCategoryMapIsIdentityOnCompositeStates) {
  const auto map = six_category_gate_map();
  EXPECT_EQ(map.n_heads, 6u);
  int expected = 1;
  for (int v = 0; v < 2; ++v)
    for (int u = 0; u < 3; ++u) EXPECT_EQ(map.lookup(v, u), expected++);
  EXPECT_EQ(map.provenance.at("labels").at("v=0,u=1"), "male, REM");
}

TEST(GateLookup, ConstantAndTogglingSeries) {
  const auto map = six_category_gate_map();
  const std::vector<std::uint8_t> flat(50, 1);
  for (int s : map.lookup_series(1, flat)) EXPECT_EQ(s, 5);
  std::vector<std::uint8_t> toggle;
  for (int t = 0; t < 20; ++t) toggle.push_back(t % 2 == 0 ? 0 : 2);
  const auto s = map.lookup_series(0, toggle);
  for (std::size_t t = 0; t < s.size(); ++t) EXPECT_EQ(s[t], t % 2 == 0 ? 1 : 3);
}

TEST(GateLookup, MissingStageFallsBackToNonRem) {
  const auto map = six_category_gate_map();
  const std::vector<std::uint8_t> u{kMissingU};
  EXPECT_EQ(map.lookup_series(1, u)[0], map.lookup(1, 2));
}

TEST(GateLookup, UnmappedPairIsLookupError) {
  const auto map = identity_gate_map(2, 2);
  EXPECT_EQ(code_of([&] { (void)map.lookup(0, 2); }), ErrorCode::kLookup);
  EXPECT_EQ(code_of([&] { (void)map.lookup(2, 0); }), ErrorCode::kLookup);
}

TEST(GateLookup, OutputStaysInsideTableImage) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t heads = 1 + rng() % 3;
    Json table = Json::object();
    std::set<int> image;
    for (int v = 0; v < 2; ++v)
      for (int u = 0; u < 3; ++u) {
        const int h = 1 + static_cast<int>(rng() % heads);
        table[pair_key(v, u)] = h;
        image.insert(h);
      }
    const auto map = manual_gate_map(heads, 2, 3, table);
    std::vector<std::uint8_t> u(100);
    for (auto& x : u) x = static_cast<std::uint8_t>(rng() % 4 == 0 ? kMissingU : rng() % 3);
    for (int s : map.lookup_series(static_cast<int>(rng() % 2), u)) EXPECT_TRUE(image.count(s));
  }
}

TEST(GateLookup, ManualTableMustBeTotal) {
  Json table{{"v=0,u=0", 1}, {"v=0,u=1", 2}, {"v=1,u=0", 1}};
  EXPECT_EQ(code_of([&] { manual_gate_map(2, 2, 2, table); }), ErrorCode::kConfig);
}

namespace {

struct GradientFixture {
  model::Model<float> backbone = model::build_model<float>(model::tiny_config(model::Variant::kBackbone), 3);
  std::vector<data::Record> records;

  GradientFixture() {
    auto p = data::default_profile();
    p.subjects = 4;
    p.night_seconds = 96;
    records = data::synth_generate(p);
  }
};

}  // namespace

TEST(StateGradient, DeterministicWithBackboneLength) {
  GradientFixture f;
  const int v = f.records[0].gender;
  const int u = f.records[0].stages[0];
  const auto a = state_gradient(f.backbone, f.records, v, u);
  const auto b = state_gradient(f.backbone, f.records, v, u);
  EXPECT_EQ(a.gradient, b.gradient);
  EXPECT_EQ(a.gradient.size(), f.backbone.params.count());
  EXPECT_GE(a.samples, 1u);
}

TEST(StateGradient, TwoRecordAverageIsMeanOfSingles) {
  GradientFixture f;
  for (auto& r : f.records) r.gender = 0;
  for (std::size_t t = 0; t < 96; ++t) {
    f.records[0].stages[t] = static_cast<std::uint8_t>(t % 2);
    f.records[1].stages[t] = static_cast<std::uint8_t>((t / 7) % 2);
  }
  const std::vector<data::Record> pair{f.records[0], f.records[1]};
  const auto both = state_gradient(f.backbone, pair, 0, 1);
  const auto first = state_gradient(f.backbone, std::span<const data::Record>(pair).first(1), 0, 1);
  const auto second = state_gradient(f.backbone, std::span<const data::Record>(pair).last(1), 0, 1);
  EXPECT_EQ(both.samples, 2u);
  double scale = 0.0;
  for (double g : both.gradient) scale = std::max(scale, std::abs(g));
  ASSERT_GT(scale, 0.0);
  for (std::size_t i = 0; i < both.gradient.size(); ++i)
    EXPECT_NEAR(both.gradient[i], 0.5 * (first.gradient[i] + second.gradient[i]), 1e-12 * scale);
}

TEST(StateGradient, EmptySubsetIsError) {
  GradientFixture f;
  for (auto& r : f.records) r.gender = 0;
  EXPECT_EQ(code_of([&] { state_gradient(f.backbone, f.records, 1, 0); }), ErrorCode::kEmptySubset);
  EXPECT_EQ(code_of([&] { state_gradient(f.backbone, {}, 0, 0); }), ErrorCode::kEmptySubset);
}

TEST(StateGradient, ExcludesAuxAndExtraHeads) {
  auto config = model::tiny_config(model::Variant::kGated);
  const auto m = model::build_model<float>(config, 1);
  for (const auto& name : backbone_parameter_names(m.params)) {
    EXPECT_FALSE(name.starts_with("aux."));
    if (name.starts_with("heads.")) {
      EXPECT_TRUE(name.starts_with("heads.1."));
    }
  }
}
