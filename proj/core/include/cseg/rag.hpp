#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cseg/labels.hpp"
#include "cseg/raster.hpp"
#include "cseg/scribble.hpp"

namespace cseg {

struct RagNode {
  std::int32_t id = 0;
  std::int64_t size = 0;              // member pixel count
  std::vector<double> feature;        // mean over member pixels
  std::vector<std::uint32_t> pixels;  // member pixel indices, may be empty for synthetic graphs
};

struct RagEdge {
  std::int32_t a = 0;  // a < b
  std::int32_t b = 0;
  std::int64_t boundary = 0;  // 4-adjacent pixel pairs across the edge
  double weight = 0.0;        // pairwise term
  bool pseudo = false;

  std::int32_t other(std::int32_t n) const { return n == a ? b : a; }
};

/// Simple undirected graph over superpixels. Real edges carry shared boundary
/// length; pseudo edges only take part in connectivity checks.
class RagGraph {
 public:
  struct Incidence {
    std::int32_t node;
    std::int32_t edge;
  };

  RagGraph() = default;
  explicit RagGraph(int feature_dim) : feature_dim_(feature_dim) {}

  std::int32_t add_node(std::int64_t size, std::vector<double> feature);
  /// Adds an edge or, for an existing real edge, accumulates its boundary length.
  std::int32_t add_edge(std::int32_t a, std::int32_t b, std::int64_t boundary, bool pseudo = false);

  std::int32_t node_count() const { return static_cast<std::int32_t>(nodes_.size()); }
  std::int32_t edge_count() const { return static_cast<std::int32_t>(edges_.size()); }
  int feature_dim() const { return feature_dim_; }

  const RagNode& node(std::int32_t i) const { return nodes_[i]; }
  RagNode& node(std::int32_t i) { return nodes_[i]; }
  const RagEdge& edge(std::int32_t e) const { return edges_[e]; }
  RagEdge& edge(std::int32_t e) { return edges_[e]; }
  const std::vector<RagNode>& nodes() const { return nodes_; }
  const std::vector<RagEdge>& edges() const { return edges_; }

  /// Neighbours sorted by node id.
  std::span<const Incidence> incident(std::int32_t i) const { return adjacency_[i]; }
  std::optional<std::int32_t> find_edge(std::int32_t a, std::int32_t b) const;

 private:
  int feature_dim_ = 0;
  std::vector<RagNode> nodes_;
  std::vector<RagEdge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
};

/// One node per superpixel with mean feature; one edge per pair of 4-adjacent ids.
RagGraph build_rag(const SuperpixelMap& sp, FeatureView features);

struct SplitResult {
  RagGraph graph;
  SuperpixelMap superpixels;
};

/// Splits superpixels that contain strokes of more than one region: pixels go to
/// the geodesically nearest stroke pixel inside the superpixel (ties to the lower
/// region id), then pieces are made 4-connected and the graph is rebuilt.
SplitResult split_by_scribbles(const SuperpixelMap& sp, const ScribbleSet& scribbles, FeatureView features);

/// Region id per pixel from the scribble owner map (-1 where unscribbled).
std::vector<std::int32_t> scribble_region_map(const ScribbleSet& scribbles, int width, int height);

/// Nodes directly under a scribble stroke, with that scribble's ids. Throws
/// ConflictingScribbles when a node is covered by two regions.
FixedTable scribble_coverage(const RagGraph& g, const SuperpixelMap& sp, const ScribbleSet& scribbles);

/// Hard assignments: every scribble-covered node takes its scribble's ids; an
/// uncovered node whose neighbours are all fixed to one region inherits it.
/// Throws ConflictingScribbles when a node is covered by two regions.
FixedTable freeze_scribbled(const RagGraph& g, const SuperpixelMap& sp, const ScribbleSet& scribbles);

/// Node holding the first control point of each scribble, in scribble order.
std::vector<std::int32_t> scribble_root_nodes(const SuperpixelMap& sp, const ScribbleSet& scribbles);

/// Unary costs, node-major, over `class_ids` (cost of node i for class_ids[l]).
struct CostTable {
  std::vector<int> class_ids;
  std::vector<double> unary;

  int class_count() const { return static_cast<int>(class_ids.size()); }
  std::int32_t node_count() const {
    return class_ids.empty() ? 0 : static_cast<std::int32_t>(unary.size() / class_ids.size());
  }
  double at(std::int32_t node, int cls) const { return unary[static_cast<std::size_t>(node) * class_ids.size() + cls]; }
  double& at(std::int32_t node, int cls) { return unary[static_cast<std::size_t>(node) * class_ids.size() + cls]; }
  /// Index of a class id, -1 when absent.
  int index_of(int class_id) const;
};

/// c_i^l = || onehot(l) - mean probability of node i ||_2, classes 0..depth-1.
CostTable unary_from_probability(const DenseFieldMap& prob, const SuperpixelMap& sp);

/// c_i^l = || y_i - Y_l ||_2 with Y_l the pixel-weighted mean feature of nodes
/// covered by class-l scribbles. `class_ids` defaults to the classes present in
/// `covered`; a listed class without any covered node throws ClassWithoutScribble.
CostTable unary_from_scribbles(const RagGraph& g, const FixedTable& covered,
                               std::optional<std::vector<int>> class_ids = std::nullopt);

/// Real edges get exp(-||y_i - y_j||_2); pseudo edges get 0.
void pairwise_weights(RagGraph& g);

std::string rag_to_json(const RagGraph& g);

}  // namespace cseg
