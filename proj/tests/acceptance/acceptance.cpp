// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cseg/error.hpp"
#include "cseg/grid.hpp"
#include "cseg/metrics.hpp"
#include "cseg/mrf_ilp.hpp"
#include "cseg/potts_heur.hpp"
#include "cseg/raster.hpp"
#include "cseg/scribble.hpp"
#include "cseg/session.hpp"
#include "cseg/synth.hpp"
#include "support/instances.hpp"
#include "support/metrics_oracle.hpp"

using namespace cseg;
using namespace cseg::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<int> as_indices(const MrfProblem& p, const LabelState& labels) {
  std::vector<int> lab(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) lab[i] = p.costs.index_of(labels[i].class_id);
  return lab;
}

// The connected-variant suite feeds three criteria, so it runs once.
struct ConnectedSuite {
  int instances = 0;
  int exact = 0;
  int infeasible_reference = 0;
  std::int64_t cuts = 0;
  std::int64_t bad_separators = 0;
  std::int64_t cut_off_optimum = 0;
  int warm_rejected = 0;
  int warm_worse = 0;
  double seconds = 0.0;
  std::string first_mismatch;
};

const ConnectedSuite& connected_suite() {
  static const ConnectedSuite suite = [] {
    ConnectedSuite s;
    std::mt19937 rng(2024);
    const double lambdas[] = {0.0, 1.0, 100.0};
    const auto t0 = Clock::now();
    for (int rep = 0; rep < 200; ++rep) {
      const int k = 2 + rep % 2;
      const int free_nodes = 1 + static_cast<int>(rng() % 10);
      auto inst = random_mrf_instance(rng, free_nodes, k, IlpVariant::Connected, lambdas[rep % 3]);
      const MrfProblem& p = inst.problem;
      const auto ref = enumerate_labelings(p, true);
      if (!ref.feasible) {
        ++s.infeasible_reference;
        continue;
      }
      ++s.instances;
      const auto sol = solve_mrf(p);
      if (sol.milp.status == SolveStatus::Optimal && sol.objective == ref.energy && connected_labeling(p, sol.labeling))
        ++s.exact;
      else if (s.first_mismatch.empty())
        s.first_mismatch = fmt("rep %d: solver %.17g vs brute force %.17g", rep, sol.objective, ref.energy);
      for (const auto& cut : sol.cuts) {
        ++s.cuts;
        if (!separator_holds(p, cut)) ++s.bad_separators;
        if (!labeling_satisfies_cut(cut, ref.labeling)) ++s.cut_off_optimum;
      }

      HeuristicConfig hcfg;
      hcfg.eta = 0.3;
      const auto warm = run_seeded(p.graph, p.fixed, hcfg).labels;
      const double warm_energy = energy(p, as_indices(p, warm));
      const auto warm_sol = solve_mrf(p, warm);
      if (!warm_sol.milp.stats.warm_start_accepted) ++s.warm_rejected;
      if (warm_sol.objective > warm_energy) ++s.warm_worse;
    }
    s.seconds = seconds_since(t0);
    return s;
  }();
  return suite;
}

Outcome ilp_u_exact() {
  std::mt19937 rng(1001);
  const double lambdas[] = {0.0, 1.0, 100.0};
  int exact = 0;
  std::string first;
  const auto t0 = Clock::now();
  for (int rep = 0; rep < 200; ++rep) {
    const int k = 1 + rep % 3;
    const int free_nodes = 1 + static_cast<int>(rng() % 10);
    auto inst = random_mrf_instance(rng, free_nodes, k, IlpVariant::Unconstrained, lambdas[rep % 3]);
    const auto sol = solve_mrf(inst.problem);
    const auto ref = enumerate_labelings(inst.problem, false);
    if (sol.milp.status == SolveStatus::Optimal && sol.objective == ref.energy)
      ++exact;
    else if (first.empty())
      first = fmt(" first mismatch rep %d: %.17g vs %.17g", rep, sol.objective, ref.energy);
  }
  const double secs = seconds_since(t0);
  return {exact == 200 && secs < 60.0, fmt("%d/200 exact, %.1f s (limit 60 s)%s", exact, secs, first.c_str())};
}

Outcome ilp_p_exact() {
  const auto& s = connected_suite();
  return {s.instances == 200 && s.exact == s.instances && s.seconds < 300.0,
          fmt("%d/%d exact, %d instances without a connected labeling, %.1f s (limit 300 s)%s%s", s.exact, s.instances,
              s.infeasible_reference, s.seconds, s.first_mismatch.empty() ? "" : ", ", s.first_mismatch.c_str())};
}

Outcome cut_validity() {
  const auto& s = connected_suite();
  return {s.bad_separators == 0 && s.cut_off_optimum == 0,
          fmt("%lld cuts, %lld failed separation, %lld excluded the brute-force optimum", static_cast<long long>(s.cuts),
              static_cast<long long>(s.bad_separators), static_cast<long long>(s.cut_off_optimum))};
}

Outcome warm_start_dominance() {
  const auto& s = connected_suite();
  return {s.warm_worse == 0 && s.warm_rejected == 0,
          fmt("%d/%d instances worse than the heuristic warm start, %d warm starts rejected", s.warm_worse, s.instances,
              s.warm_rejected)};
}

FixedTable random_seeds(std::mt19937& rng, const RagGraph& g, int count, int classes) {
  FixedTable seeds(g.node_count());
  std::vector<std::int32_t> order(g.node_count());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int s = 0; s < count; ++s) seeds[order[s]] = NodeLabel{s % classes, s + 1, std::nullopt};
  return seeds;
}

bool regions_connected(const RagGraph& g, const LabelState& labels) {
  const int n = g.node_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& e : g.edges())
    if (!e.pseudo && labels[e.a].region_id == labels[e.b].region_id) parent[find(e.a)] = find(e.b);
  std::map<int, int> rep;
  for (int v = 0; v < n; ++v) {
    auto [it, fresh] = rep.emplace(labels[v].region_id, find(v));
    if (!fresh && it->second != find(v)) return false;
  }
  return true;
}

Outcome heuristic_connectivity() {
  std::mt19937 rng(4242);
  int pass = 0, max_nodes = 0;
  std::string first;
  for (int rep = 0; rep < 500; ++rep) {
    const int n = 10 + static_cast<int>(rng() % 1991);
    max_nodes = std::max(max_nodes, n);
    const auto g = random_planar_graph(rng, n);
    const int scribbles = 2 + static_cast<int>(rng() % 7);
    const auto seeds = random_seeds(rng, g, scribbles, 1 + static_cast<int>(rng() % 3));
    HeuristicConfig cfg;
    cfg.eta = std::array{0.1, 0.3, 20.0, 100.0}[rng() % 4];
    const auto res = run_seeded(g, seeds, cfg);
    std::set<int> regions;
    bool all_labeled = true;
    for (const auto& l : res.labels) {
      all_labeled = all_labeled && l.labeled();
      regions.insert(l.region_id);
    }
    if (all_labeled && static_cast<int>(regions.size()) == scribbles && regions_connected(g, res.labels))
      ++pass;
    else if (first.empty())
      first = fmt(", first failure rep %d (%d nodes)", rep, n);
  }
  return {pass == 500, fmt("%d/500 instances (up to %d nodes, 2-8 scribbles)%s", pass, max_nodes, first.c_str())};
}

Outcome heuristic_scaling() {
  auto median_seconds = [](int n) {
    std::mt19937 rng(77 + n);
    std::vector<double> times;
    for (int rep = 0; rep < 9; ++rep) {
      const auto g = random_planar_graph(rng, n);
      const auto seeds = random_seeds(rng, g, 4, 2);
      HeuristicConfig cfg;
      cfg.eta = 0.3;
      double best = INFINITY;
      for (int trial = 0; trial < 3; ++trial) {
        const auto t0 = Clock::now();
        const auto res = run_seeded(g, seeds, cfg);
        best = std::min(best, seconds_since(t0));
        if (res.labels.empty()) return -1.0;
      }
      times.push_back(best);
    }
    std::nth_element(times.begin(), times.begin() + 4, times.end());
    return times[4];
  };
  const double small = median_seconds(2000), large = median_seconds(4000);
  const double ratio = large / small;
  return {ratio < 2.5, fmt("median %.2f ms at 2000 nodes, %.2f ms at 4000 nodes, ratio %.2f (limit 2.5)", small * 1e3,
                           large * 1e3, ratio)};
}

Outcome beta_at_fifty() {
  int exact = 0;
  for (double eta : {0.1, 0.3, 20.0, 100.0}) exact += beta_schedule(50, eta) == eta;
  return {exact == 4, fmt("%d/4 values of eta reproduced exactly", exact)};
}

int disconnected_regions(const RenderedMaps& m) {
  std::map<std::int32_t, int> pieces;
  const auto comps = label_components(m.width, m.height, m.regions, std::numeric_limits<std::int32_t>::min());
  std::vector<char> seen(comps.count, 0);
  for (std::size_t p = 0; p < m.regions.size(); ++p)
    if (!seen[comps.ids[p]]) {
      seen[comps.ids[p]] = 1;
      ++pieces[m.regions[p]];
    }
  int extra = 0;
  for (const auto& [region, count] : pieces) extra += count > 1;
  return extra;
}

Outcome island_fixture() {
  const fs::path dir = fs::path(CSEG_FIXTURE_DIR) / "island";
  SessionInputs in;
  in.image = load_image(dir / "image.png");
  in.superpixels = load_superpixels(dir / "superpixels.png");
  in.probabilities = load_field(dir / "probmap.cseg", true);
  in.truth = load_truth(dir / "truth.png");
  const auto scribbles = load_scribbles(dir / "scribbles.json");
  auto run_algo = [&](Algorithm a) {
    SessionConfig cfg;
    cfg.algorithm = a;
    cfg.lambda = 0.5;
    Session s(in, cfg);
    return s.run_round(scribbles);
  };
  const auto u = run_algo(Algorithm::IlpU);
  const auto p = run_algo(Algorithm::IlpP);
  const int broken = disconnected_regions(p.maps);
  const double mu = u.metrics->semantic.mean, mp = p.metrics->semantic.mean;
  return {broken == 0 && mp > mu && p.status == "Optimal",
          fmt("ILP-P: %d disconnected regions, mIoU %.4f (%s); ILP-U: mIoU %.4f, %d disconnected regions", broken, mp,
              p.status.c_str(), mu, disconnected_regions(u.maps))};
}

Outcome interactive_improvement() {
  const auto t0 = Clock::now();
  int pairs = 0, non_decreasing = 0;
  double gain = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const auto f = make_fixture(cfg);
    Session s(f.inputs, SessionConfig{});
    std::vector<double> miou{s.run_round(f.scribbles).metrics->semantic.mean};
    for (int round = 1; round <= 3; ++round) {
      try {
        ScribbleSet add;
        add.scribbles = {simulate_correction(s.history().back().maps.classes, *f.inputs.truth, s.scribbles())};
        miou.push_back(s.run_round(add).metrics->semantic.mean);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoError) throw;
        miou.push_back(miou.back());
      }
      ++pairs;
      non_decreasing += miou[round] >= miou[round - 1];
    }
    gain += miou.back() - miou.front();
  }
  const double secs = seconds_since(t0);
  const double share = static_cast<double>(non_decreasing) / pairs;
  const double mean_gain = 100.0 * gain / 50.0;
  return {share >= 0.9 && mean_gain >= 3.0 && secs < 600.0,
          fmt("%d/%d rounds non-decreasing (%.1f%%, need 90%%), mean gain %.2f mIoU points (need 3), %.1f s", non_decreasing,
              pairs, 100.0 * share, mean_gain, secs)};
}

Outcome metrics_oracle() {
  std::mt19937 rng(555);
  int exact = 0;
  double worst_identity = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto f = random_panoptic(rng);
    const auto ref = oracle_metrics(f.pred_class, f.pred_instance, f.truth);
    const auto got = evaluate(f.pred_class, std::span<const std::uint32_t>(f.pred_instance), f.truth);
    bool ok = got.semantic.mean == ref.miou && got.panoptic;
    for (const auto& [c, k] : got.semantic.per_class)
      ok = ok && ref.classes.count(c) && k.intersection == ref.classes.at(c).inter && k.union_ == ref.classes.at(c).uni;
    if (ok) {
      const auto& pan = *got.panoptic;
      ok = pan.total.tp == ref.tp && pan.total.fp == ref.fp && pan.total.fn == ref.fn && pan.total.iou_sum == ref.iou_sum;
      for (const auto& [c, k] : pan.per_class) {
        const auto it = ref.classes.find(c);
        ok = ok && it != ref.classes.end() && k.tp == it->second.tp && k.fp == it->second.fp &&
             k.fn == it->second.fn && k.iou_sum == it->second.iou_sum;
        worst_identity = std::max(worst_identity, std::abs(k.pq() - k.sq() * k.rq()));
      }
      worst_identity = std::max(worst_identity, std::abs(pan.total.pq() - pan.total.sq() * pan.total.rq()));
    }
    exact += ok;
  }
  return {exact == 100 && worst_identity <= 1e-12,
          fmt("%d/100 fixtures match the counting oracle exactly, max |PQ - SQ*RQ| = %.3g", exact, worst_identity)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"ilp-u exactness", ilp_u_exact},
      {"ilp-p exactness", ilp_p_exact},
      {"cut validity", cut_validity},
      {"l0h connectivity", heuristic_connectivity},
      {"l0h scaling", heuristic_scaling},
      {"beta schedule", beta_at_fifty},
      {"connectivity matters (island fixture)", island_fixture},
      {"interactive improvement", interactive_improvement},
      {"metrics oracle", metrics_oracle},
      {"warm-start dominance", warm_start_dominance},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
