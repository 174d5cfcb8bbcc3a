#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <algorithm>
#include <random>
#include <set>

#include "cseg/error.hpp"
#include "cseg/grid.hpp"
#include "cseg/scribble.hpp"

using namespace cseg;

namespace {

Scribble stroke(std::vector<Point> pts, int cls, int region, int thickness = 1, std::optional<int> inst = {}) {
  Scribble s;
  s.points = std::move(pts);
  s.class_id = cls;
  s.region_id = region;
  s.thickness = thickness;
  s.instance_id = inst;
  return s;
}

ScribbleSet stuff_set(std::vector<Scribble> scribbles) {
  ScribbleSet set;
  set.scribbles = std::move(scribbles);
  for (const auto& s : set.scribbles) set.class_map[s.class_id] = ClassKind::Stuff;
  return set;
}

PanopticTruth flat_truth(int w, int h, std::uint16_t cls) {
  const auto n = static_cast<std::size_t>(w) * h;
  return {w, h, std::vector<std::uint16_t>(n, cls), std::vector<std::uint32_t>(n, 0)};
}

void fill_rect(PanopticTruth& t, int x0, int y0, int x1, int y1, std::uint16_t cls, std::uint32_t inst = 0) {
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      t.class_ids[static_cast<std::size_t>(y) * t.width + x] = cls;
      t.instance_ids[static_cast<std::size_t>(y) * t.width + x] = inst;
    }
}

}  // namespace

TEST(Rasterize, SinglePoint) {
  EXPECT_EQ(rasterize(stroke({{2, 1}}, 0, 1), 5, 5), std::vector<std::size_t>{7});
}

TEST(Rasterize, HorizontalSegment) {
  EXPECT_EQ(rasterize(stroke({{0, 2}, {4, 2}}, 0, 1), 5, 5), (std::vector<std::size_t>{10, 11, 12, 13, 14}));
}

TEST(Rasterize, DiagonalIsStaircase) {
  const auto px = rasterize(stroke({{0, 0}, {4, 4}}, 0, 1), 5, 5);
  EXPECT_TRUE(is_4connected(5, 5, px));
  EXPECT_EQ(px.size(), 9u);  // 5 diagonal pixels plus 4 gap fillers
  EXPECT_TRUE(std::binary_search(px.begin(), px.end(), std::size_t{0}));
  EXPECT_TRUE(std::binary_search(px.begin(), px.end(), std::size_t{24}));
}

TEST(Rasterize, ThickBrushIsSquare) {
  EXPECT_EQ(rasterize(stroke({{2, 2}}, 0, 1, 3), 5, 5).size(), 9u);
  EXPECT_EQ(rasterize(stroke({{0, 0}}, 0, 1, 3), 5, 5).size(), 4u);  // clipped at the corner
}

TEST(Rasterize, OutOfBounds) {
  try {
    rasterize(stroke({{0, 0}, {5, 0}}, 0, 1), 5, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
  }
}

TEST(Rasterize, FuzzConnectedAndInBounds) {
  std::mt19937 rng(31);
  for (int rep = 0; rep < 500; ++rep) {
    const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
    std::vector<Point> pts(1 + rng() % 6);
    for (auto& p : pts) p = {static_cast<int>(rng() % w), static_cast<int>(rng() % h)};
    const auto s = stroke(pts, 0, 1, 1 + static_cast<int>(rng() % 4));
    const auto px = rasterize(s, w, h);
    ASSERT_FALSE(px.empty());
    EXPECT_TRUE(std::is_sorted(px.begin(), px.end()));
    EXPECT_LT(px.back(), static_cast<std::size_t>(w) * h);
    EXPECT_TRUE(is_4connected(w, h, px)) << "rep " << rep;
    EXPECT_EQ(px, rasterize(s, w, h));
  }
}

TEST(Policy, StraightScribbleIsValid) {
  EXPECT_TRUE(validate_policy(stuff_set({stroke({{1, 1}, {8, 1}}, 0, 1, 3)}), 10, 10).ok());
}

TEST(Policy, DuplicateRegion) {
  const auto r = validate_policy(stuff_set({stroke({{1, 1}, {3, 1}}, 0, 4), stroke({{1, 8}, {3, 8}}, 0, 4)}), 10, 10);
  ASSERT_TRUE(r.has(PolicyViolationKind::DuplicateRegion));
  const auto& v = *std::find_if(r.violations.begin(), r.violations.end(),
                                [](const auto& v) { return v.kind == PolicyViolationKind::DuplicateRegion; });
  EXPECT_EQ(v.scribbles, (std::vector<int>{0, 1}));
}

TEST(Policy, StrokeSplitByLeavingTheImage) {
  // The polyline leaves through the top edge and returns, so the clipped stroke is two pieces.
  const auto r = validate_policy(stuff_set({stroke({{1, 3}, {1, -4}, {6, -4}, {6, 3}}, 0, 1)}), 8, 8);
  EXPECT_TRUE(r.has(PolicyViolationKind::Disconnected));
  EXPECT_TRUE(r.has(PolicyViolationKind::OutOfBounds));
}

TEST(Policy, OverlapOfDifferentRegions) {
  const auto r = validate_policy(stuff_set({stroke({{0, 2}, {6, 2}}, 0, 1), stroke({{3, 0}, {3, 6}}, 1, 2)}), 8, 8);
  EXPECT_TRUE(r.has(PolicyViolationKind::Overlap));
  EXPECT_FALSE(r.has(PolicyViolationKind::DuplicateRegion));
}

TEST(Policy, InstanceIdsFollowClassKind) {
  ScribbleSet set;
  set.class_map = {{1, ClassKind::Thing}, {0, ClassKind::Stuff}};
  set.scribbles = {stroke({{0, 0}}, 1, 1), stroke({{5, 5}}, 0, 2, 1, 3)};
  const auto r = validate_policy(set, 8, 8);
  EXPECT_EQ(std::count_if(r.violations.begin(), r.violations.end(),
                          [](const auto& v) { return v.kind == PolicyViolationKind::InstanceMismatch; }),
            2);
}

TEST(Policy, EmptyPolyline) {
  EXPECT_TRUE(validate_policy(stuff_set({stroke({}, 0, 1)}), 8, 8).has(PolicyViolationKind::EmptyPolyline));
}

TEST(ScribbleJson, RoundTripAndSchema) {
  ScribbleSet set;
  set.class_map = {{0, ClassKind::Stuff}, {7, ClassKind::Thing}};
  set.scribbles = {stroke({{1, 2}, {3, 4}}, 0, 1, 3), stroke({{5, 5}}, 7, 2, 5, 9)};
  const auto text = dump_scribbles(set);
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["class_map"]["7"], "thing");
  EXPECT_TRUE(j["scribbles"][0]["instance_id"].is_null());
  EXPECT_EQ(j["scribbles"][1]["points"], nlohmann::json::parse("[[5,5]]"));
  const auto back = parse_scribbles(text);
  ASSERT_EQ(back.scribbles.size(), 2u);
  EXPECT_EQ(back.scribbles[1].instance_id, 9);
  EXPECT_EQ(back.scribbles[1].thickness, 5);
  EXPECT_EQ(back.scribbles[0].points, set.scribbles[0].points);
  EXPECT_EQ(dump_scribbles(back), text);
}

TEST(ScribbleJson, DefaultThicknessAndBadInput) {
  const auto set = parse_scribbles(R"({"scribbles":[{"class_id":1,"region_id":1,"points":[[0,0]]}],"class_map":{}})");
  EXPECT_EQ(set.scribbles[0].thickness, 3);
  for (const char* bad : {"{", R"({"scribbles":[{"class_id":1}]})", R"({"scribbles":[{"class_id":1,"region_id":1,"points":[[0]]}]})"}) {
    try {
      parse_scribbles(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    }
  }
}

TEST(SimulateCorrection, PerfectPredictionIsNoError) {
  const auto t = flat_truth(10, 10, 2);
  try {
    simulate_correction(t.class_ids, t, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoError);
  }
}

TEST(SimulateCorrection, StrokeInsideTheErrorBlob) {
  auto t = flat_truth(20, 20, 0);
  fill_rect(t, 5, 5, 15, 15, 3);
  const auto pred = flat_truth(20, 20, 0).class_ids;
  const auto s = simulate_correction(pred, t, {});
  EXPECT_EQ(s.class_id, 3);
  EXPECT_FALSE(s.instance_id);
  for (std::size_t p : rasterize(s, 20, 20)) {
    const int x = static_cast<int>(p % 20), y = static_cast<int>(p / 20);
    EXPECT_TRUE(x >= 5 && x < 15 && y >= 5 && y < 15) << x << "," << y;
  }
  EXPECT_GE(rasterize(s, 20, 20).size(), 5u);
}

TEST(SimulateCorrection, LargestBlobWins) {
  auto t = flat_truth(30, 12, 0);
  fill_rect(t, 2, 2, 8, 7, 1);    // 30 pixels
  fill_rect(t, 20, 2, 24, 5, 2);  // 12 pixels
  const auto pred = flat_truth(30, 12, 0).class_ids;
  const auto s = simulate_correction(pred, t, {});
  EXPECT_EQ(s.class_id, 1);
  for (std::size_t p : rasterize(s, 30, 12)) EXPECT_LT(p % 30, 8u);
}

TEST(SimulateCorrection, ThingCarriesInstance) {
  auto t = flat_truth(20, 20, 0);
  fill_rect(t, 4, 4, 16, 16, 5, 2);
  const auto s = simulate_correction(flat_truth(20, 20, 0).class_ids, t, {});
  EXPECT_EQ(s.class_id, 5);
  EXPECT_EQ(s.instance_id, 2);
}

TEST(SimulateCorrection, StrokeFixesOnlyMislabeledPixelsAndAvoidsOldStrokes) {
  std::mt19937 rng(8);
  for (int rep = 0; rep < 150; ++rep) {
    const int w = 24, h = 24;
    auto t = flat_truth(w, h, 0);
    for (int r = 0; r < 4; ++r) {
      const int x = static_cast<int>(rng() % 18), y = static_cast<int>(rng() % 18);
      fill_rect(t, x, y, x + 3 + static_cast<int>(rng() % 6), std::min(h, y + 3 + static_cast<int>(rng() % 6)),
                static_cast<std::uint16_t>(1 + rng() % 3));
    }
    std::vector<std::uint16_t> pred(t.class_ids.size());
    for (auto& c : pred) c = static_cast<std::uint16_t>(rng() % 2 ? 0 : 1 + rng() % 3);
    ScribbleSet existing = stuff_set(
        {stroke({{static_cast<int>(rng() % w), static_cast<int>(rng() % h)}, {static_cast<int>(rng() % w), static_cast<int>(rng() % h)}},
                static_cast<int>(rng() % 4), 1, 3)});
    Scribble s;
    try {
      s = simulate_correction(pred, t, existing);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NoError);
      continue;
    }
    const auto old_px = rasterize(existing.scribbles[0], w, h);
    const std::set<std::size_t> old(old_px.begin(), old_px.end());
    for (std::size_t p : rasterize(s, w, h)) {
      EXPECT_NE(pred[p], t.class_ids[p]) << "rep " << rep;
      EXPECT_EQ(t.class_ids[p], s.class_id);
      EXPECT_FALSE(old.count(p)) << "rep " << rep;
    }
  }
}

TEST(SimulateCorrection, ReusesRegionInSameTruthPiece) {
  auto t = flat_truth(30, 10, 0);
  fill_rect(t, 0, 0, 30, 5, 1);  // class 1 band on top, one connected piece
  std::vector<std::uint16_t> pred(t.class_ids.size(), 0);
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 5; ++y) pred[y * 30 + x] = 1;  // left part of the band already right
  ScribbleSet existing = stuff_set({stroke({{2, 2}, {6, 2}}, 1, 7), stroke({{2, 8}, {20, 8}}, 0, 8)});
  const auto s = simulate_correction(pred, t, existing);
  EXPECT_EQ(s.class_id, 1);
  EXPECT_EQ(s.region_id, 7);
}

TEST(SimulateCorrection, FreshRegionForSeparatePiece) {
  auto t = flat_truth(30, 10, 0);
  fill_rect(t, 0, 0, 8, 5, 1);
  fill_rect(t, 14, 0, 30, 5, 1);  // same class, a second piece
  std::vector<std::uint16_t> pred(t.class_ids.size(), 0);
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 5; ++y) pred[y * 30 + x] = 1;
  ScribbleSet existing = stuff_set({stroke({{2, 2}, {5, 2}}, 1, 7), stroke({{2, 8}, {20, 8}}, 0, 8)});
  const auto s = simulate_correction(pred, t, existing);
  EXPECT_EQ(s.class_id, 1);
  EXPECT_EQ(s.region_id, 9);
}
