#include <gtest/gtest.h>

#include <cmath>
#include <array>
#include <map>
#include <numeric>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "cseg/error.hpp"
#include "cseg/rag.hpp"
#include "cseg/raster.hpp"
#include "cseg/scribble.hpp"

using namespace cseg;

namespace {

DenseFieldMap scalar_field(int w, int h, std::vector<float> v) { return {w, h, 1, false, std::move(v)}; }

Scribble stroke(std::vector<Point> pts, int cls, int region, int thickness = 1) {
  Scribble s;
  s.points = std::move(pts);
  s.class_id = cls;
  s.region_id = region;
  s.thickness = thickness;
  return s;
}

ScribbleSet stuff_set(std::vector<Scribble> scribbles) {
  ScribbleSet set;
  set.scribbles = std::move(scribbles);
  for (const auto& s : set.scribbles) set.class_map[s.class_id] = ClassKind::Stuff;
  return set;
}

SuperpixelMap single_superpixel(int w, int h) {
  return {w, h, std::vector<std::int32_t>(static_cast<std::size_t>(w) * h, 0), 1};
}

}  // namespace

TEST(BuildRag, MinimalPair) {
  const SuperpixelMap sp{2, 1, {0, 1}, 2};
  const auto f = scalar_field(2, 1, {0.0f, 1.0f});
  const auto g = build_rag(sp, FeatureView::of(f));
  ASSERT_EQ(g.node_count(), 2);
  EXPECT_EQ(g.node(0).size, 1);
  EXPECT_EQ(g.node(1).size, 1);
  EXPECT_EQ(g.node(0).feature, std::vector<double>{0.0});
  EXPECT_EQ(g.node(1).feature, std::vector<double>{1.0});
  ASSERT_EQ(g.edge_count(), 1);
  EXPECT_EQ(g.edge(0).boundary, 1);
}

TEST(BuildRag, FourTilesHaveNoDiagonalEdge) {
  const auto sp = grid_superpixels(4, 4, 4);
  const auto f = scalar_field(4, 4, std::vector<float>(16, 0.5f));
  const auto g = build_rag(sp, FeatureView::of(f));
  ASSERT_EQ(g.node_count(), 4);
  for (const auto& n : g.nodes()) EXPECT_EQ(n.size, 4);
  ASSERT_EQ(g.edge_count(), 4);
  for (const auto& e : g.edges()) EXPECT_EQ(e.boundary, 2);
  EXPECT_FALSE(g.find_edge(0, 3));
  EXPECT_FALSE(g.find_edge(1, 2));
}

TEST(BuildRag, SingleSuperpixel) {
  const auto sp = single_superpixel(3, 3);
  const auto f = scalar_field(3, 3, std::vector<float>(9, 1.0f));
  const auto g = build_rag(sp, FeatureView::of(f));
  EXPECT_EQ(g.node_count(), 1);
  EXPECT_EQ(g.edge_count(), 0);
}

TEST(BuildRag, FeatureSizeMismatch) {
  const auto sp = single_superpixel(3, 3);
  const auto f = scalar_field(2, 2, std::vector<float>(4, 1.0f));
  try {
    build_rag(sp, FeatureView::of(f));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(BuildRag, MeansAndPartition) {
  std::mt19937 rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    const int w = 5 + static_cast<int>(rng() % 30), h = 5 + static_cast<int>(rng() % 30);
    const auto sp = grid_superpixels(w, h, 1 + static_cast<int>(rng() % 40));
    ImagePlane img{w, h, 3, std::vector<float>(static_cast<std::size_t>(w) * h * 3)};
    for (auto& v : img.data) v = static_cast<float>((rng() % 256) / 255.0);
    const auto g = build_rag(sp, FeatureView::of(img));

    std::int64_t total = 0;
    for (const auto& n : g.nodes()) total += n.size;
    EXPECT_EQ(total, static_cast<std::int64_t>(w) * h);

    std::vector<std::array<double, 3>> sum(sp.count);
    for (std::size_t p = 0; p < sp.ids.size(); ++p)
      for (int c = 0; c < 3; ++c) sum[sp.ids[p]][c] += img.data[p * 3 + c];
    for (int i = 0; i < g.node_count(); ++i)
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(g.node(i).feature[c], sum[i][c] / g.node(i).size, 1e-12);

    // boundary counted against pixel pairs directly
    std::map<std::pair<int, int>, std::int64_t> pairs;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int a = sp.at(x, y);
        if (x + 1 < w && sp.at(x + 1, y) != a) ++pairs[std::minmax(a, sp.at(x + 1, y))];
        if (y + 1 < h && sp.at(x, y + 1) != a) ++pairs[std::minmax(a, sp.at(x, y + 1))];
      }
    ASSERT_EQ(static_cast<std::size_t>(g.edge_count()), pairs.size());
    for (const auto& e : g.edges()) EXPECT_EQ(e.boundary, (pairs[{e.a, e.b}]));
  }
}

TEST(BuildRag, RelabelingGivesIsomorphicGraph) {
  std::mt19937 rng(21);
  const int w = 17, h = 11;
  const auto sp = grid_superpixels(w, h, 20);
  ImagePlane img{w, h, 1, std::vector<float>(static_cast<std::size_t>(w) * h)};
  for (auto& v : img.data) v = static_cast<float>((rng() % 256) / 255.0);

  std::vector<std::int32_t> perm(sp.count);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  SuperpixelMap permuted = sp;
  for (auto& id : permuted.ids) id = perm[id];

  auto a = build_rag(sp, FeatureView::of(img));
  auto b = build_rag(permuted, FeatureView::of(img));
  pairwise_weights(a);
  pairwise_weights(b);
  ASSERT_EQ(a.node_count(), b.node_count());
  ASSERT_EQ(a.edge_count(), b.edge_count());
  for (int i = 0; i < a.node_count(); ++i) {
    EXPECT_EQ(a.node(i).size, b.node(perm[i]).size);
    EXPECT_EQ(a.node(i).feature, b.node(perm[i]).feature);
  }
  for (const auto& e : a.edges()) {
    const auto be = b.find_edge(perm[e.a], perm[e.b]);
    ASSERT_TRUE(be);
    EXPECT_EQ(b.edge(*be).boundary, e.boundary);
    EXPECT_EQ(b.edge(*be).weight, e.weight);
  }
}

TEST(SplitByScribbles, TwoRegionsSplitOneSuperpixel) {
  const auto sp = single_superpixel(8, 4);
  const auto f = scalar_field(8, 4, std::vector<float>(32, 0.0f));
  const auto set = stuff_set({stroke({{0, 0}, {0, 3}}, 1, 1), stroke({{7, 0}, {7, 3}}, 2, 2)});
  const auto split = split_by_scribbles(sp, set, FeatureView::of(f));
  EXPECT_GE(split.superpixels.count, 2);
  const auto regions = scribble_region_map(set, 8, 4);
  std::map<std::int32_t, std::set<std::int32_t>> regions_in;
  for (std::size_t p = 0; p < regions.size(); ++p)
    if (regions[p] >= 0) regions_in[split.superpixels.ids[p]].insert(regions[p]);
  for (const auto& [node, rs] : regions_in) EXPECT_EQ(rs.size(), 1u) << node;
  EXPECT_NE(split.superpixels.ids[0], split.superpixels.ids[7]);
}

TEST(SplitByScribbles, OneScribbleLeavesMapAlone) {
  const auto sp = grid_superpixels(8, 8, 4);
  const auto f = scalar_field(8, 8, std::vector<float>(64, 0.0f));
  const auto set = stuff_set({stroke({{1, 1}, {6, 1}}, 1, 1)});
  const auto split = split_by_scribbles(sp, set, FeatureView::of(f));
  EXPECT_EQ(split.superpixels.ids, sp.ids);
  EXPECT_EQ(split.graph.node_count(), sp.count);
}

TEST(SplitByScribbles, MiddlePixelTieGoesToLowerRegion) {
  const auto sp = single_superpixel(3, 1);
  const auto f = scalar_field(3, 1, {0, 0, 0});
  // region 4 on the left pixel, region 2 on the right pixel
  const auto set = stuff_set({stroke({{0, 0}}, 0, 4), stroke({{2, 0}}, 1, 2)});
  const auto split = split_by_scribbles(sp, set, FeatureView::of(f));
  ASSERT_EQ(split.superpixels.count, 2);
  EXPECT_EQ(split.superpixels.ids[1], split.superpixels.ids[2]);
  EXPECT_NE(split.superpixels.ids[1], split.superpixels.ids[0]);
}

TEST(FreezeScribbled, DirectCoverage) {
  const auto sp = grid_superpixels(4, 4, 4);
  const auto f = scalar_field(4, 4, std::vector<float>(16, 0.0f));
  const auto g = build_rag(sp, FeatureView::of(f));
  const auto fixed = freeze_scribbled(g, sp, stuff_set({stroke({{0, 0}}, 7, 3)}));
  ASSERT_TRUE(fixed[0]);
  EXPECT_EQ(fixed[0]->class_id, 7);
  EXPECT_EQ(fixed[0]->region_id, 3);
  EXPECT_FALSE(fixed[1]);
  EXPECT_FALSE(fixed[3]);
}

TEST(FreezeScribbled, SurroundedNodeInherits) {
  // 3x3 tiles; the centre tile is ringed by tiles under one region's stroke.
  const auto sp = grid_superpixels(9, 9, 9);
  const auto f = scalar_field(9, 9, std::vector<float>(81, 0.0f));
  const auto g = build_rag(sp, FeatureView::of(f));
  const auto set = stuff_set({stroke({{1, 1}, {7, 1}, {7, 7}, {1, 7}, {1, 2}}, 5, 3)});
  const auto fixed = freeze_scribbled(g, sp, set);
  const auto centre = sp.at(4, 4);
  ASSERT_TRUE(fixed[centre]);
  EXPECT_EQ(fixed[centre]->region_id, 3);
  EXPECT_EQ(fixed[centre]->class_id, 5);
}

TEST(FreezeScribbled, MixedNeighboursStayFree) {
  const auto sp = grid_superpixels(9, 9, 9);
  const auto f = scalar_field(9, 9, std::vector<float>(81, 0.0f));
  const auto g = build_rag(sp, FeatureView::of(f));
  const auto set = stuff_set({stroke({{1, 1}, {7, 1}, {7, 4}}, 5, 3), stroke({{1, 7}, {7, 7}}, 6, 4),
                              stroke({{1, 4}}, 5, 5)});
  const auto fixed = freeze_scribbled(g, sp, set);
  EXPECT_FALSE(fixed[sp.at(4, 4)]);
}

TEST(FreezeScribbled, NoConflictsAfterSplit) {
  std::mt19937 rng(77);
  std::uniform_int_distribution<int> coord(0, 23);
  for (int rep = 0; rep < 200; ++rep) {
    const auto sp = grid_superpixels(24, 24, 1 + static_cast<int>(rng() % 30));
    const auto f = scalar_field(24, 24, std::vector<float>(24 * 24, 0.0f));
    auto a = stroke({{coord(rng), coord(rng)}, {coord(rng), coord(rng)}}, 0, 1, 1 + static_cast<int>(rng() % 3));
    auto b = stroke({{coord(rng), coord(rng)}, {coord(rng), coord(rng)}}, 1, 2, 1 + static_cast<int>(rng() % 3));
    const auto set = stuff_set({a, b});
    const auto split = split_by_scribbles(sp, set, FeatureView::of(f));
    EXPECT_NO_THROW(freeze_scribbled(split.graph, split.superpixels, set)) << "rep " << rep;
  }
}

TEST(UnaryFromProbability, OneHotNode) {
  const SuperpixelMap sp{1, 1, {0}, 1};
  const DenseFieldMap p{1, 1, 3, true, {0, 1, 0}};
  const auto c = unary_from_probability(p, sp);
  EXPECT_EQ(c.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(c.at(0, 0), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(c.at(0, 2), std::sqrt(2.0));
}

TEST(UnaryFromProbability, EvenSplit) {
  const SuperpixelMap sp{1, 1, {0}, 1};
  const DenseFieldMap p{1, 1, 2, true, {0.5f, 0.5f}};
  const auto c = unary_from_probability(p, sp);
  EXPECT_NEAR(c.at(0, 0), 0.70711, 1e-5);
  EXPECT_DOUBLE_EQ(c.at(0, 0), c.at(0, 1));
}

TEST(UnaryFromProbability, NodeMeanOverPixels) {
  const SuperpixelMap sp{2, 1, {0, 0}, 1};
  const DenseFieldMap p{2, 1, 2, true, {1, 0, 0, 1}};
  const auto c = unary_from_probability(p, sp);
  EXPECT_DOUBLE_EQ(c.at(0, 0), std::sqrt(0.5));
}

TEST(UnaryFromProbability, BoundedBySqrtTwo) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const int w = 12, h = 9, k = 4;
  DenseFieldMap p{w, h, k, true, std::vector<float>(w * h * k)};
  for (int i = 0; i < w * h; ++i) {
    float s = 0;
    for (int c = 0; c < k; ++c) s += p.values[i * k + c] = u(rng);
    for (int c = 0; c < k; ++c) p.values[i * k + c] /= s;
  }
  const auto c = unary_from_probability(p, grid_superpixels(w, h, 10));
  for (double v : c.unary) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, std::sqrt(2.0) + 1e-12);
  }
}

TEST(UnaryFromScribbles, OwnMeanIsZero) {
  RagGraph g(1);
  g.add_node(3, {0.4});
  g.add_node(2, {0.9});
  g.add_edge(0, 1, 1);
  FixedTable covered{NodeLabel{1, 1, std::nullopt}, NodeLabel{2, 2, std::nullopt}};
  const auto c = unary_from_scribbles(g, covered);
  EXPECT_NEAR(c.at(0, c.index_of(1)), 0.0, 1e-12);
  EXPECT_NEAR(c.at(1, c.index_of(2)), 0.0, 1e-12);
}

TEST(UnaryFromScribbles, PixelWeightedClassMean) {
  RagGraph g(1);
  g.add_node(5, {0.0});
  g.add_node(5, {1.0});
  g.add_node(1, {0.25});
  g.add_edge(0, 2, 1);
  g.add_edge(1, 2, 1);
  FixedTable covered{NodeLabel{4, 1, std::nullopt}, NodeLabel{4, 2, std::nullopt}, std::nullopt};
  const auto c = unary_from_scribbles(g, covered);
  EXPECT_DOUBLE_EQ(c.at(2, c.index_of(4)), 0.25);
}

TEST(UnaryFromScribbles, ListedClassWithoutScribble) {
  RagGraph g(1);
  g.add_node(1, {0.0});
  FixedTable covered{NodeLabel{1, 1, std::nullopt}};
  try {
    unary_from_scribbles(g, covered, std::vector<int>{1, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ClassWithoutScribble);
  }
}

TEST(PairwiseWeights, Examples) {
  RagGraph g(2);
  g.add_node(1, {0.0, 0.0});
  g.add_node(1, {0.0, 0.0});
  g.add_node(1, {0.6, 0.8});
  g.add_edge(0, 1, 1);
  g.add_edge(1, 2, 1);
  g.add_edge(0, 2, 0, true);
  pairwise_weights(g);
  EXPECT_EQ(g.edge(*g.find_edge(0, 1)).weight, 1.0);
  EXPECT_NEAR(g.edge(*g.find_edge(1, 2)).weight, 0.36788, 1e-5);
  EXPECT_EQ(g.edge(*g.find_edge(0, 2)).weight, 0.0);
}

TEST(PairwiseWeights, RealEdgesInUnitInterval) {
  std::mt19937 rng(4);
  const int w = 20, h = 20;
  ImagePlane img{w, h, 3, std::vector<float>(w * h * 3)};
  for (auto& v : img.data) v = static_cast<float>((rng() % 256) / 255.0);
  auto g = build_rag(grid_superpixels(w, h, 30), FeatureView::of(img));
  pairwise_weights(g);
  for (const auto& e : g.edges()) {
    EXPECT_GT(e.weight, 0.0);
    EXPECT_LE(e.weight, 1.0);
  }
}

TEST(RagJson, DumpListsNodesAndEdges) {
  const auto sp = grid_superpixels(4, 4, 4);
  const auto f = scalar_field(4, 4, std::vector<float>(16, 0.5f));
  auto g = build_rag(sp, FeatureView::of(f));
  pairwise_weights(g);
  const auto j = nlohmann::json::parse(rag_to_json(g));
  EXPECT_EQ(j["nodes"].size(), 4u);
  EXPECT_EQ(j["edges"].size(), 4u);
}
