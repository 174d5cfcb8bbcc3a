#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "cseg/error.hpp"
#include "cseg/potts_heur.hpp"
#include "cseg/session.hpp"
#include "cseg/synth.hpp"
#include "support/temp_dir.hpp"

using namespace cseg;

namespace {

SynthFixture small_fixture(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.width = 24;
  cfg.height = 24;
  cfg.objects = 1;
  cfg.seed = seed;
  return make_fixture(cfg);
}

SessionConfig config_for(Algorithm a) {
  SessionConfig c;
  c.algorithm = a;
  c.budget.time_limit_seconds = 30.0;
  return c;
}

ScribbleSet single(const Scribble& s) {
  ScribbleSet set;
  set.scribbles = {s};
  return set;
}

// Every scribbled pixel's node carries the scribble's ids.
void expect_hard_constraints(const RoundRecord& r, Algorithm algo) {
  const auto owner = scribble_owner_map(r.scribbles, r.superpixels.width, r.superpixels.height);
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] < 0) continue;
    const Scribble& s = r.scribbles.scribbles[owner[p]];
    const NodeLabel& lbl = r.labels[r.superpixels.ids[p]];
    ASSERT_EQ(lbl.class_id, s.class_id) << "round " << r.round << " pixel " << p;
    ASSERT_EQ(lbl.region_id, algo == Algorithm::IlpU ? s.class_id : s.region_id) << "round " << r.round;
  }
}

// Every region's nodes form one connected piece of the round's superpixel adjacency.
void expect_regions_connected(const RoundRecord& r) {
  const auto& sp = r.superpixels;
  std::vector<std::set<std::int32_t>> adj(sp.count);
  for (int y = 0; y < sp.height; ++y)
    for (int x = 0; x < sp.width; ++x) {
      const auto a = sp.at(x, y);
      if (x + 1 < sp.width && sp.at(x + 1, y) != a) adj[a].insert(sp.at(x + 1, y)), adj[sp.at(x + 1, y)].insert(a);
      if (y + 1 < sp.height && sp.at(x, y + 1) != a) adj[a].insert(sp.at(x, y + 1)), adj[sp.at(x, y + 1)].insert(a);
    }
  std::map<int, std::vector<std::int32_t>> by_region;
  for (std::int32_t i = 0; i < sp.count; ++i) by_region[r.labels[i].region_id].push_back(i);
  for (const auto& [region, nodes] : by_region) {
    std::set<std::int32_t> seen{nodes[0]};
    std::vector<std::int32_t> queue{nodes[0]};
    for (std::size_t q = 0; q < queue.size(); ++q)
      for (auto nb : adj[queue[q]])
        if (r.labels[nb].region_id == region && seen.insert(nb).second) queue.push_back(nb);
    EXPECT_EQ(seen.size(), nodes.size()) << "round " << r.round << " region " << region;
  }
}

}  // namespace

TEST(Render, SingleNodeIsUniform) {
  SuperpixelMap sp{4, 3, std::vector<std::int32_t>(12, 0), 1};
  const auto m = render({NodeLabel{2, 5, 7}}, sp, {});
  EXPECT_EQ(m.classes, std::vector<std::uint16_t>(12, 2));
  EXPECT_EQ(m.regions, std::vector<std::int32_t>(12, 5));
  EXPECT_EQ(m.instances, std::vector<std::uint32_t>(12, 7));
}

TEST(Render, ScribbledPixelWins) {
  SuperpixelMap sp{4, 3, std::vector<std::int32_t>(12, 0), 1};
  Scribble s;
  s.points = {{1, 1}};
  s.thickness = 1;
  s.class_id = 3;
  s.region_id = 9;
  const auto m = render({NodeLabel{2, 5, std::nullopt}}, sp, single(s));
  EXPECT_EQ(m.classes[5], 3);
  EXPECT_EQ(m.regions[5], 9);
  EXPECT_EQ(m.classes[4], 2);
}

TEST(Render, MajorityRoundTrip) {
  std::mt19937 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto sp = grid_superpixels(30, 20, 24);
    LabelState labels(sp.count);
    for (auto& l : labels) {
      l.class_id = static_cast<int>(rng() % 5);
      l.region_id = l.class_id;
    }
    const auto m = render(labels, sp, {});
    const auto back = majority_classes(sp, m.classes);
    for (std::int32_t i = 0; i < sp.count; ++i) EXPECT_EQ(back[i], labels[i].class_id);
  }
}

TEST(Render, MajorityTieGoesToSmallerClass) {
  SuperpixelMap sp{2, 1, {0, 0}, 1};
  const std::vector<std::uint16_t> classes{4, 1};
  EXPECT_EQ(majority_classes(sp, classes), std::vector<int>{1});
}

TEST(CheckInputs, Errors) {
  const auto f = small_fixture(1);
  auto bad_dims = f.inputs;
  bad_dims.probabilities->width = 23;
  try {
    check_inputs(bad_dims);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  auto bad_norm = f.inputs;
  bad_norm.probabilities->values[0] += 0.5f;
  try {
    check_inputs(bad_norm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotNormalized);
  }
  EXPECT_NO_THROW(check_inputs(f.inputs));
}

TEST(Session, RoundZeroHeuristicMatchesDirectRun) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto f = small_fixture(seed);
    Session s(f.inputs, config_for(Algorithm::L0H));
    const auto& r = s.run_round(f.scribbles);
    EXPECT_EQ(s.feature_source(), FeatureSource::Probability);
    const auto split = split_by_scribbles(s.base_superpixels(), f.scribbles, FeatureView::of(*f.inputs.probabilities));
    const auto direct = run(split.graph, split.superpixels, f.scribbles, {s.eta(), 1000});
    EXPECT_EQ(r.labels, direct.labels);
    EXPECT_EQ(r.superpixels.ids, split.superpixels.ids);
    EXPECT_EQ(r.round, 0);
    ASSERT_TRUE(r.metrics);
  }
}

class SessionAlgorithms : public ::testing::TestWithParam<Algorithm> {};

TEST_P(SessionAlgorithms, CorrectionsBecomeHardConstraints) {
  const Algorithm algo = GetParam();
  const auto f = small_fixture(4);
  Session s(f.inputs, config_for(algo));
  s.run_round(f.scribbles);
  for (int round = 1; round <= 2; ++round) {
    const auto& prev = s.history().back();
    Scribble corr;
    try {
      corr = simulate_correction(prev.maps.classes, *f.inputs.truth, s.scribbles());
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::NoError);
      break;
    }
    const auto& r = s.run_round(single(corr));
    EXPECT_EQ(r.round, round);
    EXPECT_EQ(r.added, std::vector<int>{static_cast<int>(r.scribbles.scribbles.size()) - 1});
    // The corrected pixels now render with the correction's class.
    for (std::size_t p : rasterize(corr, 24, 24)) EXPECT_EQ(r.maps.classes[p], corr.class_id);
  }
  ASSERT_GE(s.history().size(), 2u);
  for (const auto& r : s.history()) {
    expect_hard_constraints(r, algo);
    if (algo != Algorithm::IlpU) expect_regions_connected(r);
    EXPECT_EQ(r.metrics->panoptic.has_value(), algo != Algorithm::IlpU);
  }
}

INSTANTIATE_TEST_SUITE_P(All, SessionAlgorithms, ::testing::Values(Algorithm::L0H, Algorithm::IlpU, Algorithm::IlpP),
                         [](const auto& info) {
                           std::string n(to_string(info.param));
                           n.erase(std::remove(n.begin(), n.end(), '-'), n.end());
                           return n;
                         });

TEST(Session, ResultNeverWorseThanWarmStart) {
  for (std::uint64_t seed : {4, 11}) {
    const auto f = small_fixture(seed);
    auto cfg = config_for(Algorithm::IlpP);
    cfg.budget.node_limit = 3;  // even a budget-bound solve keeps the warm start as incumbent
    Session s(f.inputs, cfg);
    s.run_round(f.scribbles);
    try {
      s.run_round(single(simulate_correction(s.history().back().maps.classes, *f.inputs.truth, s.scribbles())));
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::NoError);
    }
    for (const auto& r : s.history()) {
      ASSERT_TRUE(r.objective);
      if (!r.warm_start_used) continue;
      ASSERT_TRUE(r.warm_start_objective);
      EXPECT_LE(*r.objective, *r.warm_start_objective + 1e-9);
    }
    EXPECT_TRUE(s.history().front().warm_start_used);
  }
}

TEST(Session, ConflictingCorrectionIsFlaggedAndWins) {
  const auto f = small_fixture(7);
  Session s(f.inputs, config_for(Algorithm::L0H));
  const auto& r0 = s.run_round(f.scribbles);
  const Scribble& old = f.scribbles.scribbles.front();
  const auto old_px = rasterize(old, 24, 24);
  const std::size_t cross = old_px[old_px.size() / 2];
  Scribble corr;
  corr.points = {{static_cast<int>(cross % 24), static_cast<int>(cross / 24)}};
  corr.thickness = 1;
  corr.class_id = old.class_id == 0 ? 1 : 0;
  corr.region_id = r0.scribbles.next_region_id();
  const auto& r1 = s.run_round(single(corr));
  ASSERT_FALSE(r1.conflicts.empty());
  EXPECT_EQ(r1.conflicts.front().older, 0);
  EXPECT_EQ(r1.conflicts.front().newer, static_cast<int>(r1.scribbles.scribbles.size()) - 1);
  EXPECT_EQ(r1.maps.classes[cross], corr.class_id);
  EXPECT_TRUE(r1.policy.has(PolicyViolationKind::Overlap));
  const auto report = s.round_report(r1);
  EXPECT_EQ(report["conflicts"].size(), r1.conflicts.size());
}

TEST(Session, EnforcedPolicyRejectsRound) {
  const auto f = small_fixture(8);
  Session s(f.inputs, config_for(Algorithm::L0H));
  s.run_round(f.scribbles);
  Scribble dup;
  dup.points = {{1, 1}};
  dup.class_id = f.scribbles.scribbles.front().class_id;
  dup.region_id = f.scribbles.scribbles.back().region_id;
  try {
    s.run_round(single(dup), true);
    FAIL();
  } catch (const PolicyError& e) {
    EXPECT_EQ(e.code(), ErrorCode::PolicyViolation);
    EXPECT_TRUE(e.report().has(PolicyViolationKind::DuplicateRegion));
  }
  EXPECT_EQ(s.history().size(), 1u);
  EXPECT_EQ(s.scribbles().scribbles.size(), f.scribbles.scribbles.size());
  // Without enforcement the round runs and records the violation.
  const auto& r = s.run_round(single(dup));
  EXPECT_FALSE(r.policy.ok());
  EXPECT_TRUE(r.policy.has(PolicyViolationKind::DuplicateRegion));
  EXPECT_TRUE(r.metrics->panoptic);
}

TEST(Session, SnapshotLayout) {
  const auto f = small_fixture(4);
  Session s(f.inputs, config_for(Algorithm::L0H));
  s.run_round(f.scribbles);
  s.run_round(single(simulate_correction(s.history().back().maps.classes, *f.inputs.truth, s.scribbles())));
  cseg::testing::TempDir dir;
  s.save_snapshot(dir.path(), false);
  for (const char* name : {"class.png", "instance.png", "region.png", "overlay.png", "report.json", "scribbles.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "round_0" / name)) << name;
    EXPECT_TRUE(std::filesystem::exists(dir / "round_1" / name)) << name;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "inputs"));
  std::ifstream in(dir / "report.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["rounds"].size(), 2u);
  EXPECT_FALSE(j["rounds"][0].contains("timings"));
  EXPECT_EQ(load_scribbles(dir / "round_1" / "scribbles.json").scribbles.size(), f.scribbles.scribbles.size() + 1);
  const auto cls = load_truth(dir / "round_1" / "class.png");
  EXPECT_EQ(cls.class_ids, s.history().back().maps.classes);
}

TEST(Session, RepeatedRunsAreIdentical) {
  const auto f = small_fixture(10);
  auto cfg = config_for(Algorithm::IlpP);
  cfg.budget.time_limit_seconds.reset();
  cfg.budget.node_limit = 50;
  Session a(f.inputs, cfg), b(f.inputs, cfg);
  const auto& ra = a.run_round(f.scribbles);
  const auto& rb = b.run_round(f.scribbles);
  EXPECT_EQ(ra.labels, rb.labels);
  EXPECT_EQ(a.round_report(ra, false).dump(), b.round_report(rb, false).dump());
}
