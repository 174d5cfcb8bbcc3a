#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "cseg/labels.hpp"
#include "cseg/milp.hpp"
#include "cseg/potts_heur.hpp"
#include "cseg/rag.hpp"
#include "cseg/scribble.hpp"

namespace cseg {

enum class IlpVariant { Unconstrained, Connected };

/// Labeling energy over a region adjacency graph. Class ids live in
/// `costs.class_ids`; labelings below use indices into that list.
struct MrfProblem {
  RagGraph graph;  // pseudo edges only matter for connectivity
  CostTable costs;
  double lambda = 100.0;
  FixedTable fixed;                 // per node, class id must appear in costs
  std::vector<std::int32_t> roots;  // per class index, -1 when the class has none
  IlpVariant variant = IlpVariant::Unconstrained;
  int cut_k = 3;
};

/// Root of each class in `class_ids`: first node of the class's first scribble.
std::vector<std::int32_t> class_roots(const ScribbleSet& scribbles, std::span<const std::int32_t> scribble_roots,
                                      std::span<const int> class_ids);

/// Chains the roots of a class's regions (scribble order) with pseudo edges.
/// Pairs that already share an edge are left alone. Returns the number added.
int add_pseudo_edges(MrfProblem& p, const ScribbleSet& scribbles, std::span<const std::int32_t> scribble_roots);

/// Sum of unaries plus lambda * d_ij * 2 for every real edge with differing
/// classes, nodes first and then edges in index order.
double energy(const MrfProblem& p, std::span<const int> labeling);

struct SeparatorCut {
  std::int32_t target;
  int class_index;
  std::vector<std::int32_t> separator;  // sorted
};

struct MrfModel {
  MilpModel milp;
  std::vector<std::vector<std::int32_t>> x_var;  // [node][class index], -1 for fixed nodes
  std::vector<int> fixed_class;                  // class index per node, -1 when free
  std::shared_ptr<std::vector<SeparatorCut>> cut_log;  // cuts emitted by the generator
};

/// Binary x per free node and class with one assignment row per free node; a
/// continuous z per class on every real edge between two free nodes. Edges with
/// a fixed end become linear terms or constants. Connected variant installs the
/// separator generator, which keeps a pointer to `p`. Throws MissingRoot when a
/// class lacks a root.
MrfModel build_model(const MrfProblem& p);

struct ConnectivityViolation {
  int class_index;
  std::vector<std::int32_t> component;  // sorted
};

/// Components (pseudo edges included) of each class that do not hold its root.
std::vector<ConnectivityViolation> check_connectivity(std::span<const int> labeling, const MrfProblem& p);

/// Neighbourhood of the component, then up to k-1 breadth-first rings towards the
/// root, each bound to the component node closest to the root.
std::vector<SeparatorCut> generate_cuts(std::span<const std::int32_t> component, int class_index,
                                        const MrfProblem& p, int k);

/// True when removing the separator disconnects target from the class root.
bool separates(const MrfProblem& p, const SeparatorCut& cut);

struct MrfSolution {
  std::vector<int> labeling;  // class index per node
  LabelState labels;          // class ids; region id mirrors the class id
  double objective = 0.0;     // energy of `labeling`
  MilpSolution milp;
  std::vector<SeparatorCut> cuts;
};

/// Solves the model; a warm start is read as class ids per node. Throws
/// Infeasible when no labeling exists and NonConvergence when the budget ran
/// out before any labeling was found.
MrfSolution solve_mrf(const MrfProblem& p, const std::optional<LabelState>& warm_start = std::nullopt,
                      const SolveBudget& budget = {});

/// Splits each class into regions and instances: region growing on the graph
/// restricted to same-class real edges, seeded by the scribble fixings.
LabelState recover_instances(const RagGraph& g, std::span<const int> class_ids_per_node, const FixedTable& seeds,
                             const HeuristicConfig& cfg);

}  // namespace cseg
