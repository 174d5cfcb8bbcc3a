#include "cseg/potts_heur.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "cseg/error.hpp"

namespace cseg {

double beta_schedule(int iter, double eta) {
  if (iter < 1) throw Error(ErrorCode::InvalidArgument, "outer loop index starts at 1");
  return std::pow(static_cast<double>(iter) / 50.0, 2.2) * eta;
}

std::int64_t FusionGroup::boundary_with(std::int32_t other_handle) const {
  auto it = std::lower_bound(links.begin(), links.end(), std::make_pair(other_handle, std::int64_t{INT64_MIN}));
  return (it != links.end() && it->first == other_handle) ? it->second : 0;
}

bool merge_test(const FusionGroup& gi, const FusionGroup& gj, double beta) {
  if (gi.label && gj.label && gi.label->region_id != gj.label->region_id) return false;
  double sq = 0.0;
  for (std::size_t c = 0; c < gi.mean.size(); ++c) {
    const double d = gi.mean[c] - gj.mean[c];
    sq += d * d;
  }
  const double si = static_cast<double>(gi.size), sj = static_cast<double>(gj.size);
  const double gamma = static_cast<double>(gi.boundary_with(gj.handle));
  return si * sj * std::sqrt(sq) <= beta * gamma * (si + sj);
}

namespace {

using Links = std::vector<std::pair<std::int32_t, std::int64_t>>;

Links merge_links(const Links& a, const Links& b, std::int32_t skip_a, std::int32_t skip_b) {
  Links out;
  out.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    std::pair<std::int32_t, std::int64_t> next;
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      next = a[i++];
    } else if (i == a.size() || b[j].first < a[i].first) {
      next = b[j++];
    } else {
      next = {a[i].first, a[i].second + b[j].second};
      ++i;
      ++j;
    }
    if (next.first == skip_a || next.first == skip_b) continue;
    out.push_back(next);
  }
  return out;
}

void combine_into(FusionGroup& dst, FusionGroup& src) {
  const double sd = static_cast<double>(dst.size), ss = static_cast<double>(src.size);
  const double total = sd + ss;
  for (std::size_t c = 0; c < dst.mean.size(); ++c)
    dst.mean[c] = total > 0 ? (sd * dst.mean[c] + ss * src.mean[c]) / total : 0.0;
  dst.size += src.size;
  if (!dst.label) dst.label = src.label;
}

class FusionState {
 public:
  FusionState(const RagGraph& g, const FixedTable& seeds) : n_(g.node_count()) {
    groups_.resize(n_);
    alive_.assign(n_, 0);
    std::vector<std::int32_t> group_of(n_, -1);

    for (std::int32_t i = 0; i < n_; ++i) {
      if (group_of[i] >= 0) continue;
      std::vector<std::int32_t> members{i};
      group_of[i] = i;
      if (seeds[i]) {
        const int region = seeds[i]->region_id;
        for (std::size_t q = 0; q < members.size(); ++q) {
          for (const auto& inc : g.incident(members[q])) {
            if (g.edge(inc.edge).pseudo || group_of[inc.node] >= 0) continue;
            if (!seeds[inc.node] || seeds[inc.node]->region_id != region) continue;
            group_of[inc.node] = i;
            members.push_back(inc.node);
          }
        }
      }
      std::sort(members.begin(), members.end());
      FusionGroup& grp = groups_[i];
      grp.handle = i;
      grp.mean.assign(g.feature_dim(), 0.0);
      for (std::int32_t m : members) {
        const auto& node = g.node(m);
        grp.size += node.size;
        for (int c = 0; c < g.feature_dim(); ++c) grp.mean[c] += static_cast<double>(node.size) * node.feature[c];
      }
      for (double& v : grp.mean) v = grp.size > 0 ? v / static_cast<double>(grp.size) : 0.0;
      if (seeds[i]) grp.label = seeds[i];
      grp.members = std::move(members);
      alive_[i] = 1;
      if (!grp.label) ++unlabeled_;
    }

    for (std::int32_t h = 0; h < n_; ++h) {
      if (!alive_[h]) continue;
      std::vector<std::pair<std::int32_t, std::int64_t>> raw;
      for (std::int32_t m : groups_[h].members)
        for (const auto& inc : g.incident(m)) {
          const auto& e = g.edge(inc.edge);
          if (e.pseudo || group_of[inc.node] == h) continue;
          raw.emplace_back(group_of[inc.node], e.boundary);
        }
      std::sort(raw.begin(), raw.end());
      Links& links = groups_[h].links;
      for (const auto& [k, len] : raw) {
        if (!links.empty() && links.back().first == k)
          links.back().second += len;
        else
          links.emplace_back(k, len);
      }
    }
  }

  std::int32_t size() const { return n_; }
  bool alive(std::int32_t h) const { return alive_[h] != 0; }
  const FusionGroup& group(std::int32_t h) const { return groups_[h]; }
  std::int64_t unlabeled() const { return unlabeled_; }

  std::int32_t absorb(std::int32_t ha, std::int32_t hb) {
    const std::int32_t hn = std::min(ha, hb), ho = std::max(ha, hb);
    FusionGroup& a = groups_[ha];
    FusionGroup& b = groups_[hb];
    if (!a.label || !b.label) --unlabeled_;

    Links links = merge_links(a.links, b.links, ha, hb);
    FusionGroup& keep = groups_[hn];
    FusionGroup& gone = groups_[ho];
    if (!keep.label && gone.label) keep.label = gone.label;
    gone.label = keep.label;
    combine_into(keep, gone);
    if (keep.members.size() < gone.members.size()) std::swap(keep.members, gone.members);
    keep.members.insert(keep.members.end(), gone.members.begin(), gone.members.end());
    keep.links = std::move(links);
    gone = FusionGroup{};
    alive_[ho] = 0;

    for (const auto& [k, len] : keep.links) {
      Links& kl = groups_[k].links;
      kl.erase(std::remove_if(kl.begin(), kl.end(),
                              [&](const auto& p) { return p.first == ha || p.first == hb; }),
               kl.end());
      auto it = std::lower_bound(kl.begin(), kl.end(), std::make_pair(hn, std::int64_t{INT64_MIN}));
      kl.insert(it, {hn, len});
    }
    return hn;
  }

  std::vector<std::int32_t> group_of() const {
    std::vector<std::int32_t> out(n_, -1);
    for (std::int32_t h = 0; h < n_; ++h)
      if (alive_[h])
        for (std::int32_t m : groups_[h].members) out[m] = h;
    return out;
  }

  LabelState labels() const {
    LabelState out(n_);
    for (std::int32_t h = 0; h < n_; ++h)
      if (alive_[h] && groups_[h].label)
        for (std::int32_t m : groups_[h].members) out[m] = *groups_[h].label;
    return out;
  }

 private:
  std::int32_t n_;
  std::vector<FusionGroup> groups_;
  std::vector<std::uint8_t> alive_;
  std::int64_t unlabeled_ = 0;
};

void require_seeded_components(const RagGraph& g, const FixedTable& seeds) {
  const std::int32_t n = g.node_count();
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::int32_t> queue;
  for (std::int32_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    queue.assign(1, s);
    seen[s] = 1;
    bool seeded = false;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const std::int32_t v = queue[q];
      seeded = seeded || seeds[v].has_value();
      for (const auto& inc : g.incident(v)) {
        if (g.edge(inc.edge).pseudo || seen[inc.node]) continue;
        seen[inc.node] = 1;
        queue.push_back(inc.node);
      }
    }
    if (!seeded)
      throw Error(ErrorCode::UnseededRegion,
                  "graph part containing node " + std::to_string(s) + " has no scribble");
  }
}

}  // namespace

FusionGroup merge(const FusionGroup& gi, const FusionGroup& gj) {
  FusionGroup out = gi;
  FusionGroup other = gj;
  out.handle = std::min(gi.handle, gj.handle);
  out.links = merge_links(gi.links, gj.links, gi.handle, gj.handle);
  combine_into(out, other);
  out.members.insert(out.members.end(), gj.members.begin(), gj.members.end());
  std::sort(out.members.begin(), out.members.end());
  return out;
}

HeuristicResult run_seeded(const RagGraph& g, const FixedTable& seeds, const HeuristicConfig& cfg,
                           const MergeObserver& observer) {
  if (!(cfg.eta > 0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  if (static_cast<std::int32_t>(seeds.size()) != g.node_count())
    throw Error(ErrorCode::DimensionMismatch, "seed table does not match graph");
  require_seeded_components(g, seeds);

  FusionState st(g, seeds);
  HeuristicResult res;
  auto notify = [&] {
    ++res.stats.merges;
    if (observer) {
      const auto map = st.group_of();
      observer(map);
    }
  };

  std::vector<std::int32_t> snapshot;
  int iter = 1;
  while (st.unlabeled() > 0 && iter <= cfg.max_outer_loops) {
    const double beta = beta_schedule(iter, cfg.eta);
    for (std::int32_t h = 0; h < st.size() && st.unlabeled() > 0; ++h) {
      if (!st.alive(h)) continue;
      std::int32_t cur = h;
      snapshot.clear();
      for (const auto& link : st.group(cur).links) snapshot.push_back(link.first);
      for (std::int32_t k : snapshot) {
        if (k == cur || !st.alive(k)) continue;
        if (merge_test(st.group(cur), st.group(k), beta)) {
          cur = st.absorb(cur, k);
          notify();
        }
      }
    }
    res.stats.outer_loops = iter;
    ++iter;
  }

  if (st.unlabeled() > 0) {
    res.stats.forced_finish = true;
    while (st.unlabeled() > 0) {
      bool progress = false;
      for (std::int32_t h = 0; h < st.size(); ++h) {
        if (!st.alive(h) || st.group(h).label) continue;
        std::int32_t best = -1;
        std::int64_t best_len = -1;
        for (const auto& [k, len] : st.group(h).links)
          if (st.group(k).label && len > best_len) {
            best = k;
            best_len = len;
          }
        if (best < 0) continue;
        st.absorb(h, best);
        notify();
        progress = true;
      }
      if (!progress) throw Error(ErrorCode::NonConvergence, "unlabeled groups have no labeled neighbour");
    }
  }

  res.labels = st.labels();
  return res;
}

HeuristicResult run(const RagGraph& g, const SuperpixelMap& sp, const ScribbleSet& scribbles,
                    const HeuristicConfig& cfg) {
  return run_seeded(g, freeze_scribbled(g, sp, scribbles), cfg);
}

}  // namespace cseg
