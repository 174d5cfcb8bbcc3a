#include "cseg/rag.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_map>

#include "cseg/error.hpp"
#include "cseg/grid.hpp"

namespace cseg {

std::int32_t RagGraph::add_node(std::int64_t size, std::vector<double> feature) {
  if (feature_dim_ == 0 && nodes_.empty()) feature_dim_ = static_cast<int>(feature.size());
  if (static_cast<int>(feature.size()) != feature_dim_)
    throw Error(ErrorCode::DimensionMismatch, "node feature dimension differs from graph");
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({id, size, std::move(feature), {}});
  adjacency_.emplace_back();
  return id;
}

std::optional<std::int32_t> RagGraph::find_edge(std::int32_t a, std::int32_t b) const {
  const auto& adj = adjacency_[a];
  auto it = std::lower_bound(adj.begin(), adj.end(), b,
                             [](const Incidence& inc, std::int32_t v) { return inc.node < v; });
  if (it != adj.end() && it->node == b) return it->edge;
  return std::nullopt;
}

std::int32_t RagGraph::add_edge(std::int32_t a, std::int32_t b, std::int64_t boundary, bool pseudo) {
  if (a == b) throw Error(ErrorCode::InvalidArgument, "self loop");
  if (a > b) std::swap(a, b);
  if (auto e = find_edge(a, b)) {
    if (!pseudo && !edges_[*e].pseudo) edges_[*e].boundary += boundary;
    return *e;
  }
  const auto id = static_cast<std::int32_t>(edges_.size());
  edges_.push_back({a, b, pseudo ? 0 : boundary, 0.0, pseudo});
  auto insert = [&](std::int32_t from, std::int32_t to) {
    auto& adj = adjacency_[from];
    auto it = std::lower_bound(adj.begin(), adj.end(), to,
                               [](const Incidence& inc, std::int32_t v) { return inc.node < v; });
    adj.insert(it, Incidence{to, id});
  };
  insert(a, b);
  insert(b, a);
  return id;
}

int CostTable::index_of(int class_id) const {
  auto it = std::find(class_ids.begin(), class_ids.end(), class_id);
  return it == class_ids.end() ? -1 : static_cast<int>(it - class_ids.begin());
}

RagGraph build_rag(const SuperpixelMap& sp, FeatureView features) {
  if (features.width != sp.width || features.height != sp.height)
    throw Error(ErrorCode::DimensionMismatch, "feature map and superpixel map sizes differ");
  const int dim = features.depth;
  std::vector<std::vector<double>> sums(sp.count, std::vector<double>(dim, 0.0));
  std::vector<std::vector<std::uint32_t>> members(sp.count);
  const std::size_t n = sp.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    const auto id = sp.ids[p];
    members[id].push_back(static_cast<std::uint32_t>(p));
    auto f = features.pixel(p);
    for (int c = 0; c < dim; ++c) sums[id][c] += f[c];
  }

  RagGraph g(dim);
  for (std::int32_t id = 0; id < sp.count; ++id) {
    const auto size = static_cast<std::int64_t>(members[id].size());
    if (size == 0) throw Error(ErrorCode::CorruptFile, "superpixel id without pixels");
    for (double& v : sums[id]) v /= static_cast<double>(size);
    g.add_node(size, std::move(sums[id]));
    g.node(id).pixels = std::move(members[id]);
  }

  std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> boundary;
  for (int y = 0; y < sp.height; ++y) {
    for (int x = 0; x < sp.width; ++x) {
      const auto a = sp.at(x, y);
      if (x + 1 < sp.width && sp.at(x + 1, y) != a) ++boundary[std::minmax(a, sp.at(x + 1, y))];
      if (y + 1 < sp.height && sp.at(x, y + 1) != a) ++boundary[std::minmax(a, sp.at(x, y + 1))];
    }
  }
  for (const auto& [pair, len] : boundary) g.add_edge(pair.first, pair.second, len);
  return g;
}

std::vector<std::int32_t> scribble_region_map(const ScribbleSet& scribbles, int width, int height) {
  std::vector<std::int32_t> owner = scribble_owner_map(scribbles, width, height);
  for (auto& o : owner)
    if (o >= 0) o = scribbles.scribbles[o].region_id;
  return owner;
}

SplitResult split_by_scribbles(const SuperpixelMap& sp, const ScribbleSet& scribbles, FeatureView features) {
  const std::vector<std::int32_t> region = scribble_region_map(scribbles, sp.width, sp.height);
  const std::size_t n = sp.pixel_count();

  std::vector<std::set<std::int32_t>> regions_in(sp.count);
  for (std::size_t p = 0; p < n; ++p)
    if (region[p] >= 0) regions_in[sp.ids[p]].insert(region[p]);

  // owner[p]: region claimed inside a split superpixel, -1 otherwise.
  std::vector<std::int32_t> owner(n, -1);
  std::vector<std::vector<std::size_t>> members(sp.count);
  for (std::size_t p = 0; p < n; ++p)
    if (regions_in[sp.ids[p]].size() > 1) members[sp.ids[p]].push_back(p);

  for (std::int32_t id = 0; id < sp.count; ++id) {
    if (members[id].empty()) continue;
    std::size_t x0 = SIZE_MAX, y0 = SIZE_MAX, x1 = 0, y1 = 0;
    for (std::size_t p : members[id]) {
      x0 = std::min(x0, p % sp.width);
      x1 = std::max(x1, p % sp.width);
      y0 = std::min(y0, p / sp.width);
      y1 = std::max(y1, p / sp.width);
    }
    const int bw = static_cast<int>(x1 - x0 + 1), bh = static_cast<int>(y1 - y0 + 1);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(bw) * bh, 0);
    std::vector<std::int32_t> seeds(mask.size(), -1);
    auto local = [&](std::size_t p) { return (p / sp.width - y0) * bw + (p % sp.width - x0); };
    for (std::size_t p : members[id]) {
      mask[local(p)] = 1;
      seeds[local(p)] = region[p];
    }
    const auto voronoi = geodesic_voronoi(bw, bh, mask, seeds);
    for (std::size_t p : members[id]) owner[p] = voronoi[local(p)];
  }

  std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> composite;
  for (std::size_t p = 0; p < n; ++p) composite.try_emplace({sp.ids[p], owner[p]}, 0);
  std::int32_t next = 0;
  for (auto& [key, value] : composite) value = next++;
  std::vector<std::int32_t> labels(n);
  for (std::size_t p = 0; p < n; ++p) labels[p] = composite.at({sp.ids[p], owner[p]});

  SplitResult out;
  out.superpixels = relabel_connected(sp.width, sp.height, labels);
  out.graph = build_rag(out.superpixels, features);
  return out;
}

namespace {

NodeLabel label_of(const Scribble& s) { return {s.class_id, s.region_id, s.instance_id}; }

}  // namespace

FixedTable scribble_coverage(const RagGraph& g, const SuperpixelMap& sp, const ScribbleSet& scribbles) {
  FixedTable fixed(g.node_count());
  const auto owner = scribble_owner_map(scribbles, sp.width, sp.height);
  for (std::size_t p = 0; p < owner.size(); ++p) {
    if (owner[p] < 0) continue;
    const NodeLabel lbl = label_of(scribbles.scribbles[owner[p]]);
    auto& slot = fixed[sp.ids[p]];
    if (!slot) {
      slot = lbl;
    } else if (slot->region_id != lbl.region_id) {
      throw Error(ErrorCode::ConflictingScribbles,
                  "node " + std::to_string(sp.ids[p]) + " covered by regions " +
                      std::to_string(slot->region_id) + " and " + std::to_string(lbl.region_id));
    }
  }
  return fixed;
}

FixedTable freeze_scribbled(const RagGraph& g, const SuperpixelMap& sp, const ScribbleSet& scribbles) {
  const FixedTable covered = scribble_coverage(g, sp, scribbles);
  FixedTable fixed = covered;
  for (std::int32_t i = 0; i < g.node_count(); ++i) {
    if (covered[i]) continue;
    std::optional<NodeLabel> shared;
    bool all_same = false;
    for (const auto& inc : g.incident(i)) {
      if (g.edge(inc.edge).pseudo) continue;
      const auto& nb = covered[inc.node];
      if (!nb || (shared && shared->region_id != nb->region_id)) {
        all_same = false;
        break;
      }
      shared = nb;
      all_same = true;
    }
    if (all_same) fixed[i] = shared;
  }
  return fixed;
}

std::vector<std::int32_t> scribble_root_nodes(const SuperpixelMap& sp, const ScribbleSet& scribbles) {
  const auto owner = scribble_owner_map(scribbles, sp.width, sp.height);
  std::vector<std::int32_t> roots;
  for (std::size_t s = 0; s < scribbles.scribbles.size(); ++s) {
    const Scribble& sc = scribbles.scribbles[s];
    std::int32_t root = -1;
    if (!sc.points.empty()) {
      const Point p0 = sc.points.front();
      std::int64_t best = INT64_MAX;
      for (std::size_t p : rasterize_clipped(sc, sp.width, sp.height)) {
        if (owner[p] != static_cast<std::int32_t>(s)) continue;
        const std::int64_t dx = static_cast<std::int64_t>(p % sp.width) - p0.x;
        const std::int64_t dy = static_cast<std::int64_t>(p / sp.width) - p0.y;
        if (dx * dx + dy * dy < best) {
          best = dx * dx + dy * dy;
          root = sp.ids[p];
        }
      }
    }
    roots.push_back(root);
  }
  return roots;
}

CostTable unary_from_probability(const DenseFieldMap& prob, const SuperpixelMap& sp) {
  if (prob.width != sp.width || prob.height != sp.height)
    throw Error(ErrorCode::DimensionMismatch, "probability map and superpixel map sizes differ");
  if (prob.depth < 1) throw Error(ErrorCode::DepthMismatch, "probability map has no channels");
  const int k = prob.depth;
  std::vector<double> mean(static_cast<std::size_t>(sp.count) * k, 0.0);
  std::vector<std::int64_t> size(sp.count, 0);
  for (std::size_t p = 0; p < sp.pixel_count(); ++p) {
    const auto id = sp.ids[p];
    ++size[id];
    auto v = prob.pixel(p);
    for (int c = 0; c < k; ++c) mean[static_cast<std::size_t>(id) * k + c] += v[c];
  }
  CostTable t;
  for (int c = 0; c < k; ++c) t.class_ids.push_back(c);
  t.unary.resize(mean.size());
  for (std::int32_t i = 0; i < sp.count; ++i) {
    for (int c = 0; c < k; ++c) mean[static_cast<std::size_t>(i) * k + c] /= static_cast<double>(size[i]);
    for (int l = 0; l < k; ++l) {
      double sq = 0.0;
      for (int m = 0; m < k; ++m) {
        const double d = (m == l ? 1.0 : 0.0) - mean[static_cast<std::size_t>(i) * k + m];
        sq += d * d;
      }
      t.at(i, l) = std::sqrt(sq);
    }
  }
  return t;
}

CostTable unary_from_scribbles(const RagGraph& g, const FixedTable& covered,
                               std::optional<std::vector<int>> class_ids) {
  std::vector<int> classes;
  if (class_ids) {
    classes = *class_ids;
  } else {
    std::set<int> present;
    for (const auto& f : covered)
      if (f) present.insert(f->class_id);
    classes.assign(present.begin(), present.end());
  }
  const int dim = g.feature_dim();
  const int k = static_cast<int>(classes.size());
  std::vector<std::vector<double>> centre(k, std::vector<double>(dim, 0.0));
  std::vector<std::int64_t> weight(k, 0);
  for (std::int32_t i = 0; i < g.node_count(); ++i) {
    if (!covered[i]) continue;
    auto it = std::find(classes.begin(), classes.end(), covered[i]->class_id);
    if (it == classes.end()) continue;
    const auto l = it - classes.begin();
    const auto& node = g.node(i);
    weight[l] += node.size;
    for (int c = 0; c < dim; ++c) centre[l][c] += node.size * node.feature[c];
  }
  for (int l = 0; l < k; ++l) {
    if (weight[l] == 0)
      throw Error(ErrorCode::ClassWithoutScribble, "class " + std::to_string(classes[l]) + " has no scribble");
    for (double& v : centre[l]) v /= static_cast<double>(weight[l]);
  }
  CostTable t;
  t.class_ids = classes;
  t.unary.resize(static_cast<std::size_t>(g.node_count()) * k);
  for (std::int32_t i = 0; i < g.node_count(); ++i) {
    const auto& f = g.node(i).feature;
    for (int l = 0; l < k; ++l) {
      double sq = 0.0;
      for (int c = 0; c < dim; ++c) sq += (f[c] - centre[l][c]) * (f[c] - centre[l][c]);
      t.at(i, l) = std::sqrt(sq);
    }
  }
  return t;
}

void pairwise_weights(RagGraph& g) {
  for (std::int32_t e = 0; e < g.edge_count(); ++e) {
    RagEdge& edge = g.edge(e);
    if (edge.pseudo) {
      edge.weight = 0.0;
      continue;
    }
    const auto& fa = g.node(edge.a).feature;
    const auto& fb = g.node(edge.b).feature;
    double sq = 0.0;
    for (std::size_t c = 0; c < fa.size(); ++c) sq += (fa[c] - fb[c]) * (fa[c] - fb[c]);
    edge.weight = std::exp(-std::sqrt(sq));
  }
}

std::string rag_to_json(const RagGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes()) nodes.push_back({{"id", n.id}, {"size", n.size}, {"feature", n.feature}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges())
    edges.push_back({{"a", e.a}, {"b", e.b}, {"boundary", e.boundary}, {"weight", e.weight}, {"pseudo", e.pseudo}});
  return nlohmann::json{{"feature_dim", g.feature_dim()}, {"nodes", nodes}, {"edges", edges}}.dump(2);
}

}  // namespace cseg
