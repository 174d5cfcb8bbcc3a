#include "cseg/mrf_ilp.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <string>

#include "cseg/error.hpp"

namespace cseg {

namespace {

constexpr std::int32_t kUnreached = std::numeric_limits<std::int32_t>::max();

// Breadth-first distances over every edge (pseudo included), skipping blocked nodes.
std::vector<std::int32_t> bfs_distances(const RagGraph& g, std::span<const std::int32_t> sources,
                                        const std::vector<std::uint8_t>* blocked = nullptr) {
  std::vector<std::int32_t> dist(g.node_count(), kUnreached);
  std::vector<std::int32_t> queue;
  for (auto s : sources) {
    if (blocked && (*blocked)[s]) continue;
    if (dist[s] == kUnreached) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto v = queue[q];
    for (const auto& inc : g.incident(v)) {
      if (dist[inc.node] != kUnreached || (blocked && (*blocked)[inc.node])) continue;
      dist[inc.node] = dist[v] + 1;
      queue.push_back(inc.node);
    }
  }
  return dist;
}

std::vector<int> fixed_classes(const MrfProblem& p) {
  const auto n = p.graph.node_count();
  if (static_cast<std::int32_t>(p.fixed.size()) != n || p.costs.node_count() != n)
    throw Error(ErrorCode::DimensionMismatch, "problem tables do not match the graph");
  std::vector<int> out(n, -1);
  for (std::int32_t i = 0; i < n; ++i) {
    if (!p.fixed[i]) continue;
    out[i] = p.costs.index_of(p.fixed[i]->class_id);
    if (out[i] < 0)
      throw Error(ErrorCode::InvalidArgument,
                  "node " + std::to_string(i) + " is fixed to class " + std::to_string(p.fixed[i]->class_id) +
                      " which has no costs");
  }
  return out;
}

std::optional<LinearConstraint> cut_row(const SeparatorCut& cut, const MrfModel& mm) {
  const int l = cut.class_index;
  LinearConstraint row;
  row.relation = Relation::LessEqual;
  double target_const = 0.0;
  if (mm.fixed_class[cut.target] >= 0) {
    if (mm.fixed_class[cut.target] != l) return std::nullopt;
    target_const = 1.0;
  } else {
    row.terms.push_back({mm.x_var[cut.target][l], 1.0});
  }
  for (auto s : cut.separator) {
    if (mm.fixed_class[s] >= 0) {
      if (mm.fixed_class[s] == l) return std::nullopt;
      continue;
    }
    row.terms.push_back({mm.x_var[s][l], -1.0});
  }
  row.rhs = -target_const;
  row.name = "sep_" + std::to_string(cut.target) + "_" + std::to_string(l);
  return row;
}

std::vector<int> labeling_from(const MrfModel& mm, std::span<const double> x, int k) {
  const auto n = static_cast<std::int32_t>(mm.fixed_class.size());
  std::vector<int> lab(n, -1);
  for (std::int32_t i = 0; i < n; ++i) {
    if (mm.fixed_class[i] >= 0) {
      lab[i] = mm.fixed_class[i];
      continue;
    }
    for (int l = 0; l < k; ++l)
      if (x[mm.x_var[i][l]] > 0.5) {
        lab[i] = l;
        break;
      }
  }
  return lab;
}

}  // namespace

std::vector<std::int32_t> class_roots(const ScribbleSet& scribbles, std::span<const std::int32_t> scribble_roots,
                                      std::span<const int> class_ids) {
  std::vector<std::int32_t> roots(class_ids.size(), -1);
  for (std::size_t c = 0; c < class_ids.size(); ++c)
    for (std::size_t s = 0; s < scribbles.scribbles.size(); ++s)
      if (scribbles.scribbles[s].class_id == class_ids[c]) {
        roots[c] = scribble_roots[s];
        break;
      }
  return roots;
}

int add_pseudo_edges(MrfProblem& p, const ScribbleSet& scribbles, std::span<const std::int32_t> scribble_roots) {
  int added = 0;
  for (int cls : p.costs.class_ids) {
    std::vector<int> seen_regions;
    std::vector<std::int32_t> chain;
    for (std::size_t s = 0; s < scribbles.scribbles.size(); ++s) {
      const auto& sc = scribbles.scribbles[s];
      if (sc.class_id != cls || scribble_roots[s] < 0) continue;
      if (std::find(seen_regions.begin(), seen_regions.end(), sc.region_id) != seen_regions.end()) continue;
      seen_regions.push_back(sc.region_id);
      chain.push_back(scribble_roots[s]);
    }
    for (std::size_t r = 1; r < chain.size(); ++r) {
      if (chain[r - 1] == chain[r] || p.graph.find_edge(chain[r - 1], chain[r])) continue;
      p.graph.add_edge(chain[r - 1], chain[r], 0, true);
      ++added;
    }
  }
  return added;
}

double energy(const MrfProblem& p, std::span<const int> labeling) {
  double e = 0.0;
  for (std::int32_t i = 0; i < p.graph.node_count(); ++i) e += p.costs.at(i, labeling[i]);
  for (const auto& edge : p.graph.edges())
    if (!edge.pseudo && labeling[edge.a] != labeling[edge.b]) e += p.lambda * edge.weight * 2.0;
  return e;
}

MrfModel build_model(const MrfProblem& p) {
  if (p.lambda < 0) throw Error(ErrorCode::InvalidArgument, "lambda must be non-negative");
  const auto n = p.graph.node_count();
  const int k = p.costs.class_count();
  MrfModel mm;
  mm.fixed_class = fixed_classes(p);
  const bool any_free = std::any_of(mm.fixed_class.begin(), mm.fixed_class.end(), [](int c) { return c < 0; });

  if (p.variant == IlpVariant::Connected) {
    if (static_cast<int>(p.roots.size()) != k) throw Error(ErrorCode::MissingRoot, "root table does not match classes");
    for (int l = 0; l < k && any_free; ++l)
      if (p.roots[l] < 0)
        throw Error(ErrorCode::MissingRoot, "class " + std::to_string(p.costs.class_ids[l]) + " has no root");
  }

  // Objective coefficients of x first; edges with a fixed end fold into them.
  std::vector<std::vector<double>> coef(n);
  double offset = 0.0;
  for (std::int32_t i = 0; i < n; ++i) {
    if (mm.fixed_class[i] >= 0) {
      offset += p.costs.at(i, mm.fixed_class[i]);
      continue;
    }
    coef[i].resize(k);
    for (int l = 0; l < k; ++l) coef[i][l] = p.costs.at(i, l);
  }
  for (const auto& e : p.graph.edges()) {
    if (e.pseudo) continue;
    const double w = p.lambda * e.weight;
    const int fa = mm.fixed_class[e.a], fb = mm.fixed_class[e.b];
    if (fa >= 0 && fb >= 0) {
      if (fa != fb) offset += 2.0 * w;
    } else if (fa >= 0 || fb >= 0) {
      const std::int32_t free_node = fa >= 0 ? e.b : e.a;
      const int m = fa >= 0 ? fa : fb;
      offset += w;
      for (int l = 0; l < k; ++l) coef[free_node][l] += (l == m) ? -w : w;
    }
  }

  mm.x_var.assign(n, {});
  for (std::int32_t i = 0; i < n; ++i) {
    if (mm.fixed_class[i] >= 0) continue;
    mm.x_var[i].resize(k);
    for (int l = 0; l < k; ++l)
      mm.x_var[i][l] = mm.milp.add_var(VarType::Binary, coef[i][l], "x_" + std::to_string(i) + "_" + std::to_string(l));
  }
  mm.milp.set_objective_offset(offset);
  for (std::int32_t i = 0; i < n; ++i) {
    if (mm.fixed_class[i] >= 0) continue;
    std::vector<LinearTerm> terms;
    for (int l = 0; l < k; ++l) terms.push_back({mm.x_var[i][l], 1.0});
    mm.milp.add_constraint(std::move(terms), Relation::Equal, 1.0, "assign_" + std::to_string(i));
  }
  for (std::int32_t eid = 0; eid < p.graph.edge_count(); ++eid) {
    const auto& e = p.graph.edge(eid);
    if (e.pseudo || mm.fixed_class[e.a] >= 0 || mm.fixed_class[e.b] >= 0) continue;
    const double w = p.lambda * e.weight;
    for (int l = 0; l < k; ++l) {
      const auto z = mm.milp.add_continuous(w, 0.0, 1.0, "z_" + std::to_string(eid) + "_" + std::to_string(l));
      const auto xa = mm.x_var[e.a][l], xb = mm.x_var[e.b][l];
      mm.milp.add_constraint({{z, 1.0}, {xa, -1.0}, {xb, 1.0}}, Relation::GreaterEqual, 0.0);
      mm.milp.add_constraint({{z, 1.0}, {xa, 1.0}, {xb, -1.0}}, Relation::GreaterEqual, 0.0);
    }
  }

  if (p.variant == IlpVariant::Connected) {
    auto log = std::make_shared<std::vector<SeparatorCut>>();
    mm.cut_log = log;
    auto x_var = mm.x_var;
    auto fixed_class = mm.fixed_class;
    const MrfProblem* prob = &p;
    mm.milp.set_lazy_generator([prob, log, x_var, fixed_class, k](std::span<const double> x) {
      MrfModel view;
      view.x_var = x_var;
      view.fixed_class = fixed_class;
      const auto lab = labeling_from(view, x, k);
      std::vector<LinearConstraint> rows;
      for (const auto& v : check_connectivity(lab, *prob)) {
        for (auto& cut : generate_cuts(v.component, v.class_index, *prob, prob->cut_k)) {
          if (auto row = cut_row(cut, view)) {
            rows.push_back(std::move(*row));
            log->push_back(std::move(cut));
          }
        }
      }
      return rows;
    });
  }
  return mm;
}

std::vector<ConnectivityViolation> check_connectivity(std::span<const int> labeling, const MrfProblem& p) {
  const auto n = p.graph.node_count();
  std::vector<ConnectivityViolation> out;
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::int32_t> queue;
  auto flood = [&](std::int32_t start, int cls) {
    queue.assign(1, start);
    seen[start] = 1;
    for (std::size_t q = 0; q < queue.size(); ++q)
      for (const auto& inc : p.graph.incident(queue[q]))
        if (!seen[inc.node] && labeling[inc.node] == cls) {
          seen[inc.node] = 1;
          queue.push_back(inc.node);
        }
  };
  for (int cls = 0; cls < p.costs.class_count(); ++cls) {
    const auto root = cls < static_cast<int>(p.roots.size()) ? p.roots[cls] : -1;
    if (root < 0) continue;
    if (labeling[root] == cls) flood(root, cls);
    for (std::int32_t v = 0; v < n; ++v) {
      if (labeling[v] != cls || seen[v]) continue;
      flood(v, cls);
      ConnectivityViolation viol{cls, queue};
      std::sort(viol.component.begin(), viol.component.end());
      out.push_back(std::move(viol));
    }
  }
  return out;
}

bool separates(const MrfProblem& p, const SeparatorCut& cut) {
  const auto root = p.roots.at(cut.class_index);
  std::vector<std::uint8_t> blocked(p.graph.node_count(), 0);
  for (auto s : cut.separator) blocked[s] = 1;
  if (root < 0 || blocked[root] || blocked[cut.target] || root == cut.target) return false;
  const std::int32_t src[] = {cut.target};
  return bfs_distances(p.graph, src, &blocked)[root] == kUnreached;
}

std::vector<SeparatorCut> generate_cuts(std::span<const std::int32_t> component, int class_index,
                                        const MrfProblem& p, int k) {
  std::vector<SeparatorCut> cuts;
  const auto root = p.roots.at(class_index);
  if (root < 0 || component.empty()) return cuts;
  const auto n = p.graph.node_count();
  std::vector<std::uint8_t> in_comp(n, 0);
  for (auto v : component) in_comp[v] = 1;
  if (in_comp[root]) return cuts;

  const std::int32_t root_src[] = {root};
  const auto from_root = bfs_distances(p.graph, root_src);
  std::int32_t target = -1;
  for (auto v : component) {
    if (p.graph.find_edge(v, root) || from_root[v] == kUnreached) continue;
    if (target < 0 || from_root[v] < from_root[target] || (from_root[v] == from_root[target] && v < target))
      target = v;
  }
  if (target < 0) return cuts;

  auto emit = [&](std::vector<std::int32_t> sep) {
    std::sort(sep.begin(), sep.end());
    SeparatorCut cut{target, class_index, std::move(sep)};
    if (separates(p, cut)) cuts.push_back(std::move(cut));
  };

  std::vector<std::int32_t> border;
  std::vector<std::uint8_t> taken(n, 0);
  bool touches_root = false;
  for (auto v : component)
    for (const auto& inc : p.graph.incident(v))
      if (!in_comp[inc.node] && !taken[inc.node]) {
        taken[inc.node] = 1;
        border.push_back(inc.node);
        touches_root = touches_root || inc.node == root;
      }
  if (touches_root) {
    // The component borders the root, so only the target's own neighbours separate.
    border.clear();
    for (const auto& inc : p.graph.incident(target)) border.push_back(inc.node);
    emit(std::move(border));
    return cuts;
  }
  emit(std::move(border));

  if (k < 2) return cuts;
  const auto from_comp = bfs_distances(p.graph, component);
  const auto reach = from_comp[root];
  for (int t = 2; t <= k && t < reach; ++t) {
    // Full level t around the component, trimmed to nodes that touch the root side.
    std::vector<std::uint8_t> ring(n, 0);
    for (std::int32_t v = 0; v < n; ++v) ring[v] = from_comp[v] == t;
    const auto root_side = bfs_distances(p.graph, root_src, &ring);
    std::vector<std::int32_t> sep;
    for (std::int32_t v = 0; v < n; ++v) {
      if (!ring[v]) continue;
      for (const auto& inc : p.graph.incident(v))
        if (root_side[inc.node] != kUnreached) {
          sep.push_back(v);
          break;
        }
    }
    emit(std::move(sep));
  }
  return cuts;
}

MrfSolution solve_mrf(const MrfProblem& p, const std::optional<LabelState>& warm_start, const SolveBudget& budget) {
  const auto mm = build_model(p);
  const int k = p.costs.class_count();
  const auto n = p.graph.node_count();

  std::optional<std::vector<double>> warm;
  std::optional<std::vector<int>> warm_labeling;
  if (warm_start && static_cast<std::int32_t>(warm_start->size()) == n) {
    std::vector<int> lab(n);
    bool ok = true;
    for (std::int32_t i = 0; i < n && ok; ++i) {
      lab[i] = p.costs.index_of((*warm_start)[i].class_id);
      ok = lab[i] >= 0 && (mm.fixed_class[i] < 0 || mm.fixed_class[i] == lab[i]);
    }
    if (ok) {
      std::vector<double> x(mm.milp.var_count(), 0.0);
      for (std::int32_t i = 0; i < n; ++i)
        if (mm.fixed_class[i] < 0) x[mm.x_var[i][lab[i]]] = 1.0;
      warm = std::move(x);
      warm_labeling = std::move(lab);
    }
  }

  MrfSolution out;
  out.milp = solve(mm.milp, warm, budget);
  if (mm.cut_log) out.cuts = *mm.cut_log;
  if (!out.milp.has_solution()) {
    if (out.milp.status == SolveStatus::Infeasible)
      throw Error(ErrorCode::Infeasible, "no labeling satisfies the constraints");
    throw Error(ErrorCode::NonConvergence, "budget exhausted before a labeling was found");
  }
  out.labeling = labeling_from(mm, out.milp.values, k);
  out.objective = energy(p, out.labeling);
  if (warm_labeling && out.milp.stats.warm_start_accepted) {
    const double warm_energy = energy(p, *warm_labeling);
    if (warm_energy < out.objective) {
      out.labeling = *warm_labeling;
      out.objective = warm_energy;
    }
  }
  out.labels.resize(n);
  for (std::int32_t i = 0; i < n; ++i) {
    const int cid = p.costs.class_ids[out.labeling[i]];
    out.labels[i] = NodeLabel{cid, cid, std::nullopt};
  }
  return out;
}

LabelState recover_instances(const RagGraph& g, std::span<const int> class_ids_per_node, const FixedTable& seeds,
                             const HeuristicConfig& cfg) {
  RagGraph sub(g.feature_dim());
  for (const auto& node : g.nodes()) sub.add_node(node.size, node.feature);
  for (const auto& e : g.edges())
    if (!e.pseudo && class_ids_per_node[e.a] == class_ids_per_node[e.b]) sub.add_edge(e.a, e.b, e.boundary);
  return run_seeded(sub, seeds, cfg).labels;
}

}  // namespace cseg
