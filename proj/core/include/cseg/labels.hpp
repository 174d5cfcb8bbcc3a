#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace cseg {

/// Class, region and (for thing classes) instance id carried by one graph node.
struct NodeLabel {
  int class_id = -1;
  int region_id = -1;
  std::optional<int> instance_id;

  bool labeled() const { return region_id >= 0; }
  friend bool operator==(const NodeLabel&, const NodeLabel&) = default;
};

/// Total node -> label assignment.
using LabelState = std::vector<NodeLabel>;

/// Per-node hard assignment from scribbles; nullopt for free nodes.
using FixedTable = std::vector<std::optional<NodeLabel>>;

}  // namespace cseg
