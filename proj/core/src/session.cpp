#include "cseg/session.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <tuple>

#include "cseg/mrf_ilp.hpp"
#include "cseg/potts_heur.hpp"

namespace cseg {

namespace fs = std::filesystem;

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::L0H: return "l0h";
    case Algorithm::IlpU: return "ilp-u";
    case Algorithm::IlpP: return "ilp-p";
  }
  return "l0h";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "l0h") return Algorithm::L0H;
  if (name == "ilp-u") return Algorithm::IlpU;
  if (name == "ilp-p") return Algorithm::IlpP;
  throw Error(ErrorCode::InvalidArgument, "unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(FeatureSource s) {
  switch (s) {
    case FeatureSource::Rgb: return "rgb";
    case FeatureSource::Layer1: return "layer1";
    case FeatureSource::Layer3: return "layer3";
    case FeatureSource::Probability: return "prob";
  }
  return "rgb";
}

double default_eta(FeatureSource s) {
  switch (s) {
    case FeatureSource::Rgb: return 0.1;
    case FeatureSource::Layer1: return 20.0;
    case FeatureSource::Layer3: return 100.0;
    case FeatureSource::Probability: return 0.3;
  }
  return 0.1;
}

void to_json(nlohmann::json& j, const SessionConfig& c) {
  j = nlohmann::json{{"algo", to_string(c.algorithm)},
                     {"lambda", c.lambda},
                     {"cut_k", c.cut_k},
                     {"superpixel_target", c.superpixel_target},
                     {"max_outer_loops", c.max_outer_loops}};
  j["eta"] = c.eta ? nlohmann::json(*c.eta) : nlohmann::json(nullptr);
  j["time_limit"] = c.budget.time_limit_seconds ? nlohmann::json(*c.budget.time_limit_seconds) : nlohmann::json(nullptr);
  j["node_limit"] = c.budget.node_limit ? nlohmann::json(*c.budget.node_limit) : nlohmann::json(nullptr);
}

PolicyError::PolicyError(PolicyReport report)
    : Error(ErrorCode::PolicyViolation, std::to_string(report.violations.size()) + " scribble policy violation(s)"),
      report_(std::move(report)) {}

void check_inputs(const SessionInputs& in) {
  const int w = in.image.width, h = in.image.height;
  if (w <= 0 || h <= 0) throw Error(ErrorCode::DimensionMismatch, "empty image");
  auto same = [&](int ow, int oh, const char* what) {
    if (ow != w || oh != h)
      throw Error(ErrorCode::DimensionMismatch, std::string(what) + " is " + std::to_string(ow) + "x" +
                                                    std::to_string(oh) + ", image is " + std::to_string(w) + "x" +
                                                    std::to_string(h));
  };
  if (in.superpixels) same(in.superpixels->width, in.superpixels->height, "superpixel map");
  if (in.features) same(in.features->width, in.features->height, "feature map");
  if (in.probabilities) {
    same(in.probabilities->width, in.probabilities->height, "probability map");
    check_probability(*in.probabilities);
  }
  if (in.truth) same(in.truth->width, in.truth->height, "ground truth");
}

RenderedMaps render(const LabelState& labels, const SuperpixelMap& sp, const ScribbleSet& scribbles) {
  RenderedMaps m{sp.width, sp.height, {}, {}, {}};
  const auto n = sp.pixel_count();
  m.classes.resize(n);
  m.instances.resize(n);
  m.regions.resize(n);
  const auto owner = scribble_owner_map(scribbles, sp.width, sp.height);
  for (std::size_t p = 0; p < n; ++p) {
    NodeLabel lbl = labels[sp.ids[p]];
    if (owner[p] >= 0) {
      const Scribble& s = scribbles.scribbles[owner[p]];
      lbl = NodeLabel{s.class_id, s.region_id, s.instance_id};
    }
    m.classes[p] = static_cast<std::uint16_t>(std::max(lbl.class_id, 0));
    m.instances[p] = static_cast<std::uint32_t>(std::max(lbl.instance_id.value_or(0), 0));
    m.regions[p] = lbl.region_id;
  }
  return m;
}

namespace {

std::array<std::uint8_t, 3> class_colour(int c) {
  if (c == kIgnoreClass) return {255, 255, 255};
  // Pascal-style bit interleaving gives distinct colours for small ids.
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  int id = c + 1;
  for (int shift = 7; shift >= 0 && id; --shift, id >>= 3) {
    rgb[0] |= static_cast<std::uint8_t>(((id >> 0) & 1) << shift);
    rgb[1] |= static_cast<std::uint8_t>(((id >> 1) & 1) << shift);
    rgb[2] |= static_cast<std::uint8_t>(((id >> 2) & 1) << shift);
  }
  return rgb;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CostTable restrict_costs(const CostTable& full, const std::vector<int>& class_ids) {
  CostTable out;
  out.class_ids = class_ids;
  const auto n = full.node_count();
  out.unary.resize(static_cast<std::size_t>(n) * class_ids.size());
  for (std::int32_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < class_ids.size(); ++l) out.at(i, static_cast<int>(l)) = full.at(i, full.index_of(class_ids[l]));
  return out;
}

std::optional<std::vector<int>> as_indices(const MrfProblem& p, const std::vector<int>& class_per_node) {
  std::vector<int> lab(class_per_node.size());
  for (std::size_t i = 0; i < lab.size(); ++i) {
    const int cid = p.fixed[i] ? p.fixed[i]->class_id : class_per_node[i];
    lab[i] = p.costs.index_of(cid);
    if (lab[i] < 0) return std::nullopt;
  }
  return lab;
}

LabelState labels_from_classes(const MrfProblem& p, std::span<const int> labeling) {
  LabelState out(labeling.size());
  for (std::size_t i = 0; i < labeling.size(); ++i) {
    const int cid = p.costs.class_ids[labeling[i]];
    out[i] = NodeLabel{cid, cid, std::nullopt};
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> render_overlay(const ImagePlane& image, const RenderedMaps& maps, double alpha) {
  const int w = maps.width, h = maps.height;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      const auto r = maps.regions[p];
      const bool edge = (x + 1 < w && maps.regions[p + 1] != r) || (y + 1 < h && maps.regions[p + w] != r);
      const auto col = class_colour(maps.classes[p]);
      for (int c = 0; c < 3; ++c) {
        double base = 0.0;
        if (image.channels >= 3)
          base = image.at(x, y, c);
        else if (image.channels >= 1)
          base = image.at(x, y, 0);
        double v = edge ? 0.1 * base : (1.0 - alpha) * base + alpha * (col[c] / 255.0);
        rgb[p * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return rgb;
}

std::vector<int> majority_classes(const SuperpixelMap& sp, std::span<const std::uint16_t> classes) {
  std::vector<std::map<int, std::int64_t>> votes(sp.count);
  for (std::size_t p = 0; p < sp.pixel_count(); ++p) ++votes[sp.ids[p]][classes[p]];
  std::vector<int> out(sp.count, 0);
  for (std::int32_t i = 0; i < sp.count; ++i) {
    std::int64_t best = -1;
    for (const auto& [c, n] : votes[i])
      if (n > best) {
        best = n;
        out[i] = c;
      }
  }
  return out;
}

Session::Session(SessionInputs inputs, SessionConfig config) : inputs_(std::move(inputs)), config_(config) {
  check_inputs(inputs_);
  const int w = inputs_.image.width, h = inputs_.image.height;
  if (inputs_.superpixels)
    base_sp_ = relabel_connected(w, h, inputs_.superpixels->ids);
  else
    base_sp_ = grid_superpixels(w, h, config_.superpixel_target);
  if (inputs_.features)
    source_ = inputs_.features->depth <= 64 ? FeatureSource::Layer1 : FeatureSource::Layer3;
  else if (inputs_.probabilities)
    source_ = FeatureSource::Probability;
  else
    source_ = FeatureSource::Rgb;
  eta_ = config_.eta.value_or(default_eta(source_));
}

const RoundRecord& Session::run_round(const ScribbleSet& additions, bool enforce_policy) {
  const auto t0 = std::chrono::steady_clock::now();
  const int w = inputs_.image.width, h = inputs_.image.height;

  ScribbleSet merged = scribbles_;
  for (const auto& [c, kind] : additions.class_map) merged.class_map[c] = kind;
  RoundRecord rec;
  rec.round = history_.empty() ? 0 : history_.back().round + 1;
  for (const auto& s : additions.scribbles) {
    rec.added.push_back(static_cast<int>(merged.scribbles.size()));
    merged.scribbles.push_back(s);
  }
  rec.policy = validate_policy(merged, w, h);
  if (enforce_policy && !rec.policy.ok()) throw PolicyError(rec.policy);

  if (!history_.empty()) {
    // Older fixings overridden at node level by a newer scribble of another class.
    const RoundRecord& prev = history_.back();
    const auto owner = scribble_owner_map(prev.scribbles, w, h);
    std::map<std::int32_t, int> older_at;
    for (std::size_t p = 0; p < owner.size(); ++p)
      if (owner[p] >= 0) older_at.emplace(prev.superpixels.ids[p], owner[p]);
    std::set<std::tuple<int, int, std::int32_t>> seen;
    for (int idx : rec.added) {
      const Scribble& s = merged.scribbles[idx];
      for (std::size_t p : rasterize_clipped(s, w, h)) {
        const auto node = prev.superpixels.ids[p];
        auto it = older_at.find(node);
        if (it == older_at.end() || prev.scribbles.scribbles[it->second].class_id == s.class_id) continue;
        if (seen.emplace(idx, it->second, node).second) rec.conflicts.push_back({idx, it->second, node});
      }
    }
  }

  const FeatureView view = inputs_.features        ? FeatureView::of(*inputs_.features)
                           : inputs_.probabilities ? FeatureView::of(*inputs_.probabilities)
                                                   : FeatureView::of(inputs_.image);
  SplitResult split = split_by_scribbles(base_sp_, merged, view);
  pairwise_weights(split.graph);
  const FixedTable covered = scribble_coverage(split.graph, split.superpixels, merged);
  const FixedTable fixed = freeze_scribbled(split.graph, split.superpixels, merged);
  HeuristicConfig hcfg{eta_, config_.max_outer_loops};

  std::optional<CostTable> costs;
  if (config_.algorithm != Algorithm::L0H) {
    if (inputs_.probabilities) {
      costs = unary_from_probability(*inputs_.probabilities, split.superpixels);
      for (const auto& s : merged.scribbles)
        if (costs->index_of(s.class_id) < 0)
          throw Error(ErrorCode::DepthMismatch, "scribble class " + std::to_string(s.class_id) +
                                                    " is outside the probability map's classes");
    } else {
      costs = unary_from_scribbles(split.graph, covered);
    }
  }
  rec.timings.build_seconds = seconds_since(t0);
  const auto t1 = std::chrono::steady_clock::now();

  switch (config_.algorithm) {
    case Algorithm::L0H: {
      auto res = run_seeded(split.graph, fixed, hcfg);
      rec.labels = std::move(res.labels);
      rec.status = res.stats.forced_finish ? "ForcedFinish" : "Completed";
      break;
    }
    case Algorithm::IlpU: {
      MrfProblem p;
      p.graph = split.graph;
      p.costs = *costs;
      p.lambda = config_.lambda;
      p.fixed = fixed;
      p.variant = IlpVariant::Unconstrained;
      std::optional<LabelState> warm;
      if (!history_.empty()) {
        const auto prev = majority_classes(split.superpixels, history_.back().maps.classes);
        if (auto lab = as_indices(p, prev)) warm = labels_from_classes(p, *lab);
      }
      auto sol = solve_mrf(p, warm, config_.budget);
      rec.labels = std::move(sol.labels);
      rec.status = std::string(to_string(sol.milp.status));
      rec.objective = sol.objective;
      rec.search_nodes = sol.milp.stats.nodes;
      rec.warm_start_used = sol.milp.stats.warm_start_accepted;
      rec.warm_start_objective = sol.milp.stats.warm_start_objective;
      break;
    }
    case Algorithm::IlpP: {
      const auto roots = scribble_root_nodes(split.superpixels, merged);
      std::set<int> rooted;
      for (std::size_t s = 0; s < merged.scribbles.size(); ++s)
        if (roots[s] >= 0) rooted.insert(merged.scribbles[s].class_id);
      const std::vector<int> class_ids(rooted.begin(), rooted.end());

      MrfProblem p;
      p.graph = split.graph;
      p.costs = restrict_costs(*costs, class_ids);
      p.lambda = config_.lambda;
      p.fixed = fixed;
      p.variant = IlpVariant::Connected;
      p.cut_k = config_.cut_k;
      p.roots = class_roots(merged, roots, class_ids);
      add_pseudo_edges(p, merged, roots);

      // Warm start: the better connected candidate of the heuristic and the
      // previous round's labeling carried over to the new graph.
      std::vector<std::vector<int>> candidates;
      const auto heur = run_seeded(split.graph, fixed, hcfg);
      std::vector<int> heur_classes(heur.labels.size());
      for (std::size_t i = 0; i < heur_classes.size(); ++i) heur_classes[i] = heur.labels[i].class_id;
      candidates.push_back(heur_classes);
      if (!history_.empty()) candidates.push_back(majority_classes(split.superpixels, history_.back().maps.classes));
      std::optional<std::vector<int>> best;
      double best_energy = 0.0;
      for (const auto& cand : candidates) {
        auto lab = as_indices(p, cand);
        if (!lab || !check_connectivity(*lab, p).empty()) continue;
        const double e = energy(p, *lab);
        if (!best || e < best_energy) {
          best = std::move(lab);
          best_energy = e;
        }
      }
      std::optional<LabelState> warm;
      if (best) warm = labels_from_classes(p, *best);

      auto sol = solve_mrf(p, warm, config_.budget);
      std::vector<int> class_per_node(sol.labeling.size());
      for (std::size_t i = 0; i < class_per_node.size(); ++i) class_per_node[i] = p.costs.class_ids[sol.labeling[i]];
      rec.labels = recover_instances(split.graph, class_per_node, fixed, hcfg);
      rec.status = std::string(to_string(sol.milp.status));
      rec.objective = sol.objective;
      rec.cuts = static_cast<std::int64_t>(sol.milp.cuts.size());
      rec.search_nodes = sol.milp.stats.nodes;
      rec.warm_start_used = sol.milp.stats.warm_start_accepted;
      rec.warm_start_objective = sol.milp.stats.warm_start_objective;
      break;
    }
  }
  rec.timings.solve_seconds = seconds_since(t1);

  rec.maps = render(rec.labels, split.superpixels, merged);
  if (inputs_.truth) {
    const bool panoptic = config_.algorithm != Algorithm::IlpU;
    std::optional<std::span<const std::uint32_t>> inst;
    if (panoptic) inst = std::span<const std::uint32_t>(rec.maps.instances);
    rec.metrics = evaluate(rec.maps.classes, inst, *inputs_.truth);
  }
  rec.node_count = split.graph.node_count();
  rec.superpixels = std::move(split.superpixels);
  rec.scribbles = merged;
  scribbles_ = std::move(merged);
  rec.timings.total_seconds = seconds_since(t0);
  history_.push_back(std::move(rec));
  return history_.back();
}

nlohmann::json Session::round_report(const RoundRecord& r, bool include_timings) const {
  nlohmann::json params = config_;
  params["eta"] = eta_;
  params["feature_source"] = to_string(source_);
  params["superpixels"] = base_sp_.count;
  nlohmann::json j{{"algo", to_string(config_.algorithm)}, {"params", params}, {"status", r.status}};
  j["round"] = r.round;
  if (r.objective) j["objective"] = *r.objective;
  if (include_timings)
    j["timings"] = {{"build_seconds", r.timings.build_seconds},
                    {"solve_seconds", r.timings.solve_seconds},
                    {"total_seconds", r.timings.total_seconds}};
  j["metrics"] = r.metrics ? nlohmann::json::parse(r.metrics->to_json()) : nlohmann::json(nullptr);
  j["graph"] = {{"nodes", r.node_count}, {"cuts", r.cuts}, {"search_nodes", r.search_nodes},
                {"warm_start_used", r.warm_start_used}};
  if (r.warm_start_objective) j["graph"]["warm_start_objective"] = *r.warm_start_objective;
  j["policy"] = r.policy;
  nlohmann::json conflicts = nlohmann::json::array();
  for (const auto& c : r.conflicts) conflicts.push_back({{"newer", c.newer}, {"older", c.older}, {"node", c.node}});
  j["conflicts"] = conflicts;
  j["added"] = r.added;
  return j;
}

EncodedMaps encode_maps(const ImagePlane& image, const RenderedMaps& maps) {
  EncodedMaps out;
  int max_class = 0;
  for (auto c : maps.classes) max_class = std::max<int>(max_class, c);
  GrayPng cls{maps.width, maps.height, max_class > 255 ? 16 : 8, {maps.classes.begin(), maps.classes.end()}};
  out.class_png = encode_gray_png(cls);
  GrayPng inst{maps.width, maps.height, 16, std::vector<std::uint16_t>(maps.instances.size())};
  for (std::size_t i = 0; i < maps.instances.size(); ++i)
    inst.values[i] = static_cast<std::uint16_t>(std::min<std::uint32_t>(maps.instances[i], 65535));
  out.instance_png = encode_gray_png(inst);
  GrayPng reg{maps.width, maps.height, 16, std::vector<std::uint16_t>(maps.regions.size())};
  for (std::size_t i = 0; i < maps.regions.size(); ++i)
    reg.values[i] = static_cast<std::uint16_t>(std::clamp<std::int32_t>(maps.regions[i], 0, 65535));
  out.region_png = encode_gray_png(reg);
  out.overlay_png = encode_rgb_png(maps.width, maps.height, render_overlay(image, maps));
  return out;
}

void write_maps(const fs::path& dir, const ImagePlane& image, const RenderedMaps& maps) {
  fs::create_directories(dir);
  const auto enc = encode_maps(image, maps);
  write_bytes(dir / "class.png", enc.class_png);
  write_bytes(dir / "instance.png", enc.instance_png);
  write_bytes(dir / "region.png", enc.region_png);
  write_bytes(dir / "overlay.png", enc.overlay_png);
}

void Session::save_snapshot(const fs::path& dir, bool include_timings) const {
  const fs::path in = dir / "inputs";
  fs::create_directories(in);
  save_png(in / "image.png", inputs_.image);
  save_superpixels(in / "superpixels.png", base_sp_);
  if (inputs_.features) save_field(in / "features.cseg", *inputs_.features);
  if (inputs_.probabilities) save_field(in / "probmap.cseg", *inputs_.probabilities);
  if (inputs_.truth) save_truth(in / "truth.cseg", *inputs_.truth);

  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : history_) {
    const fs::path rd = dir / ("round_" + std::to_string(r.round));
    write_maps(rd, inputs_.image, r.maps);
    save_scribbles(rd / "scribbles.json", r.scribbles);
    const auto rep = round_report(r, include_timings);
    std::ofstream(rd / "report.json") << rep.dump(2) << "\n";
    rounds.push_back(rep);
  }
  nlohmann::json top{{"config", config_}, {"rounds", rounds}};
  std::ofstream(dir / "report.json") << top.dump(2) << "\n";
}

}  // namespace cseg
