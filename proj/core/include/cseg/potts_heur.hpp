#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cseg/labels.hpp"
#include "cseg/rag.hpp"

namespace cseg {

/// beta = (iter / 50)^2.2 * eta, iter counted from 1.
double beta_schedule(int iter, double eta);

/// A set of graph nodes being grown together. `handle` is the smallest member id.
struct FusionGroup {
  std::int32_t handle = 0;
  std::vector<std::int32_t> members;
  std::int64_t size = 0;     // pixels
  std::vector<double> mean;  // pixel-weighted mean feature
  std::optional<NodeLabel> label;
  std::vector<std::pair<std::int32_t, std::int64_t>> links;  // (neighbour handle, shared boundary), sorted

  std::int64_t boundary_with(std::int32_t other_handle) const;
};

/// False when both groups carry different region ids; otherwise the size-weighted
/// fusion criterion against the shared boundary length.
bool merge_test(const FusionGroup& gi, const FusionGroup& gj, double beta);

/// Union of two adjacent groups. Links to each other disappear, shared neighbours
/// have their boundaries summed, and a label on either side is inherited.
FusionGroup merge(const FusionGroup& gi, const FusionGroup& gj);

struct HeuristicConfig {
  double eta = 0.1;
  int max_outer_loops = 1000;
};

struct HeuristicStats {
  int outer_loops = 0;
  std::int64_t merges = 0;
  bool forced_finish = false;
};

struct HeuristicResult {
  LabelState labels;
  HeuristicStats stats;
};

/// Called after every merge with the current node -> group handle map.
using MergeObserver = std::function<void(std::span<const std::int32_t> group_of)>;

/// Grows groups from the given seeds until every node carries a label. Seeded
/// nodes sharing a region id start in one group per connected piece. Throws
/// UnseededRegion when a connected part of the graph has no seed.
HeuristicResult run_seeded(const RagGraph& g, const FixedTable& seeds, const HeuristicConfig& cfg,
                           const MergeObserver& observer = {});

/// Seeds from the scribbles (see freeze_scribbled) and runs the fusion loop.
HeuristicResult run(const RagGraph& g, const SuperpixelMap& sp, const ScribbleSet& scribbles,
                    const HeuristicConfig& cfg);

}  // namespace cseg
