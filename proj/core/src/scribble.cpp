#include "cseg/scribble.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "cseg/error.hpp"
#include "cseg/grid.hpp"

namespace cseg {

using nlohmann::json;

int ScribbleSet::next_region_id() const {
  int next = 0;
  for (const auto& s : scribbles) next = std::max(next, s.region_id + 1);
  return next;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const ScribbleSet& s) {
  json list = json::array();
  for (const auto& sc : s.scribbles) {
    json pts = json::array();
    for (const auto& p : sc.points) pts.push_back({p.x, p.y});
    list.push_back({{"class_id", sc.class_id},
                    {"region_id", sc.region_id},
                    {"instance_id", sc.instance_id ? json(*sc.instance_id) : json(nullptr)},
                    {"thickness", sc.thickness},
                    {"points", std::move(pts)}});
  }
  json cmap = json::object();
  for (const auto& [id, kind] : s.class_map)
    cmap[std::to_string(id)] = kind == ClassKind::Thing ? "thing" : "stuff";
  j = json{{"scribbles", std::move(list)}, {"class_map", std::move(cmap)}};
}

void from_json(const json& j, ScribbleSet& s) {
  s = {};
  for (const auto& item : j.at("scribbles")) {
    Scribble sc;
    sc.class_id = item.at("class_id").get<int>();
    sc.region_id = item.at("region_id").get<int>();
    if (item.contains("instance_id") && !item.at("instance_id").is_null())
      sc.instance_id = item.at("instance_id").get<int>();
    sc.thickness = item.value("thickness", 3);
    for (const auto& p : item.at("points")) {
      if (!p.is_array() || p.size() != 2)
        throw Error(ErrorCode::InvalidArgument, "scribble point must be [x, y]");
      sc.points.push_back({p[0].get<int>(), p[1].get<int>()});
    }
    if (sc.thickness < 1) throw Error(ErrorCode::InvalidArgument, "scribble thickness must be >= 1");
    s.scribbles.push_back(std::move(sc));
  }
  if (j.contains("class_map")) {
    for (const auto& [key, value] : j.at("class_map").items()) {
      const auto kind = value.get<std::string>();
      if (kind != "thing" && kind != "stuff")
        throw Error(ErrorCode::InvalidArgument, "class_map values must be thing or stuff");
      s.class_map[std::stoi(key)] = kind == "thing" ? ClassKind::Thing : ClassKind::Stuff;
    }
  }
}

ScribbleSet parse_scribbles(std::string_view text) {
  try {
    return json::parse(text).get<ScribbleSet>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("scribble JSON: ") + e.what());
  }
}

std::string dump_scribbles(const ScribbleSet& s) { return json(s).dump(); }

ScribbleSet load_scribbles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scribbles(buf.str());
}

void save_scribbles(const std::filesystem::path& path, const ScribbleSet& s) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << json(s).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// rasterization

namespace {

// 4-connected Bresenham: a diagonal step is split into an x step then a y step.
void centre_line(Point a, Point b, std::vector<Point>& out) {
  int x = a.x, y = a.y;
  const int dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
  const int sx = a.x < b.x ? 1 : -1, sy = a.y < b.y ? 1 : -1;
  int err = dx + dy;
  out.push_back({x, y});
  while (x != b.x || y != b.y) {
    const int e2 = 2 * err;
    const bool step_x = e2 >= dy && x != b.x;
    const bool step_y = e2 <= dx && y != b.y;
    if (step_x) {
      err += dy;
      x += sx;
      out.push_back({x, y});
    }
    if (step_y) {
      err += dx;
      y += sy;
      out.push_back({x, y});
    }
    if (!step_x && !step_y) {
      // Unreachable for integer endpoints; guards against an infinite loop.
      if (x != b.x) x += sx; else y += sy;
      out.push_back({x, y});
    }
  }
}

std::vector<Point> stroke_centres(const Scribble& s) {
  std::vector<Point> centres;
  if (s.points.empty()) return centres;
  if (s.points.size() == 1) return {s.points.front()};
  for (std::size_t i = 0; i + 1 < s.points.size(); ++i) centre_line(s.points[i], s.points[i + 1], centres);
  return centres;
}

std::vector<std::size_t> stamp(const std::vector<Point>& centres, int thickness, int width, int height) {
  const int lo = -(thickness - 1) / 2;
  const int hi = thickness / 2;
  std::vector<std::size_t> pixels;
  pixels.reserve(centres.size() * thickness * thickness);
  for (const Point& c : centres) {
    for (int oy = lo; oy <= hi; ++oy) {
      for (int ox = lo; ox <= hi; ++ox) {
        const int x = c.x + ox, y = c.y + oy;
        if (x < 0 || y < 0 || x >= width || y >= height) continue;
        pixels.push_back(static_cast<std::size_t>(y) * width + x);
      }
    }
  }
  std::sort(pixels.begin(), pixels.end());
  pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
  return pixels;
}

bool in_bounds(Point p, int width, int height) {
  return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height;
}

}  // namespace

std::vector<std::size_t> rasterize(const Scribble& s, int width, int height) {
  if (s.points.empty()) throw Error(ErrorCode::InvalidArgument, "scribble has no points");
  for (const Point& p : s.points) {
    if (!in_bounds(p, width, height))
      throw Error(ErrorCode::OutOfBounds, "scribble point (" + std::to_string(p.x) + "," +
                                              std::to_string(p.y) + ") outside image");
  }
  return stamp(stroke_centres(s), std::max(1, s.thickness), width, height);
}

std::vector<std::size_t> rasterize_clipped(const Scribble& s, int width, int height) {
  return stamp(stroke_centres(s), std::max(1, s.thickness), width, height);
}

std::vector<std::int32_t> scribble_owner_map(const ScribbleSet& set, int width, int height) {
  std::vector<std::int32_t> owner(static_cast<std::size_t>(width) * height, -1);
  for (std::size_t i = 0; i < set.scribbles.size(); ++i) {
    for (std::size_t p : rasterize_clipped(set.scribbles[i], width, height))
      owner[p] = static_cast<std::int32_t>(i);
  }
  return owner;
}

// ---------------------------------------------------------------------------
// policy

std::string_view to_string(PolicyViolationKind kind) {
  switch (kind) {
    case PolicyViolationKind::Disconnected: return "disconnected";
    case PolicyViolationKind::DuplicateRegion: return "duplicate_region";
    case PolicyViolationKind::Overlap: return "overlap";
    case PolicyViolationKind::OutOfBounds: return "out_of_bounds";
    case PolicyViolationKind::EmptyPolyline: return "empty_polyline";
    case PolicyViolationKind::InstanceMismatch: return "instance_mismatch";
  }
  return "unknown";
}

bool PolicyReport::has(PolicyViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const PolicyViolation& v) { return v.kind == kind; });
}

void to_json(json& j, const PolicyReport& r) {
  json list = json::array();
  for (const auto& v : r.violations)
    list.push_back({{"kind", to_string(v.kind)}, {"scribbles", v.scribbles}, {"message", v.message}});
  j = json{{"ok", r.ok()}, {"violations", std::move(list)}};
}

PolicyReport validate_policy(const ScribbleSet& set, int width, int height) {
  PolicyReport report;
  const auto& list = set.scribbles;
  std::vector<std::vector<std::size_t>> strokes(list.size());

  for (std::size_t i = 0; i < list.size(); ++i) {
    const Scribble& s = list[i];
    const int idx = static_cast<int>(i);
    if (s.points.empty()) {
      report.violations.push_back({PolicyViolationKind::EmptyPolyline, {idx}, "scribble has no points"});
      continue;
    }
    if (!std::all_of(s.points.begin(), s.points.end(),
                     [&](Point p) { return in_bounds(p, width, height); })) {
      report.violations.push_back(
          {PolicyViolationKind::OutOfBounds, {idx}, "control point outside the image"});
    }
    strokes[i] = rasterize_clipped(s, width, height);
    if (strokes[i].empty() || !is_4connected(width, height, strokes[i])) {
      report.violations.push_back(
          {PolicyViolationKind::Disconnected, {idx}, "rasterized stroke is not 4-connected"});
    }
    const bool thing = set.is_thing(s.class_id);
    const bool known = set.class_map.contains(s.class_id);
    if (known && thing != s.instance_id.has_value()) {
      report.violations.push_back({PolicyViolationKind::InstanceMismatch, {idx},
                                   thing ? "thing scribble without instance_id"
                                         : "stuff scribble with instance_id"});
    }
  }

  std::map<int, std::vector<int>> by_region;
  for (std::size_t i = 0; i < list.size(); ++i) by_region[list[i].region_id].push_back(static_cast<int>(i));
  for (const auto& [region, members] : by_region) {
    if (members.size() > 1)
      report.violations.push_back({PolicyViolationKind::DuplicateRegion, members,
                                   "region_id " + std::to_string(region) + " used more than once"});
  }

  std::vector<std::int32_t> owner(static_cast<std::size_t>(width) * height, -1);
  std::set<std::pair<int, int>> overlaps;
  for (std::size_t i = 0; i < list.size(); ++i) {
    for (std::size_t p : strokes[i]) {
      const std::int32_t prev = owner[p];
      if (prev >= 0 && list[prev].region_id != list[i].region_id) {
        overlaps.insert({prev, static_cast<int>(i)});
      } else if (prev < 0) {
        owner[p] = static_cast<std::int32_t>(i);
      }
    }
  }
  for (const auto& [a, b] : overlaps) {
    report.violations.push_back({PolicyViolationKind::Overlap, {a, b},
                                 "scribbles of different regions share pixels"});
  }
  return report;
}

// ---------------------------------------------------------------------------
// skeleton strokes

namespace {

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;
  bool get(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height && on[static_cast<std::size_t>(y) * width + x];
  }
};

Mask erode3(const Mask& m) {
  Mask out{m.width, m.height, std::vector<std::uint8_t>(m.on.size(), 0)};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy)
        for (int dx = -1; dx <= 1 && all; ++dx) all = m.get(x + dx, y + dy);
      out.on[static_cast<std::size_t>(y) * m.width + x] = all;
    }
  return out;
}

// Zhang-Suen thinning.
Mask skeletonize(Mask m) {
  auto neighbours = [&](int x, int y, int p[9]) {
    // p[1]..p[8]: N, NE, E, SE, S, SW, W, NW
    p[1] = m.get(x, y - 1);
    p[2] = m.get(x + 1, y - 1);
    p[3] = m.get(x + 1, y);
    p[4] = m.get(x + 1, y + 1);
    p[5] = m.get(x, y + 1);
    p[6] = m.get(x - 1, y + 1);
    p[7] = m.get(x - 1, y);
    p[8] = m.get(x - 1, y - 1);
  };
  bool changed = true;
  std::vector<std::size_t> remove;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      remove.clear();
      for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
          if (!m.get(x, y)) continue;
          int p[9];
          neighbours(x, y, p);
          int b = 0;
          for (int k = 1; k <= 8; ++k) b += p[k];
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int k = 1; k <= 8; ++k) a += (!p[k] && p[k % 8 + 1]);
          if (a != 1) continue;
          if (pass == 0) {
            if (p[1] && p[3] && p[5]) continue;
            if (p[3] && p[5] && p[7]) continue;
          } else {
            if (p[1] && p[3] && p[7]) continue;
            if (p[1] && p[5] && p[7]) continue;
          }
          remove.push_back(static_cast<std::size_t>(y) * m.width + x);
        }
      }
      for (std::size_t idx : remove) m.on[idx] = 0;
      changed = changed || !remove.empty();
    }
  }
  return m;
}

// Longest BFS path (double sweep per component) over `m` with 8- or 4-connectivity.
std::vector<Point> longest_path(const Mask& m, bool eight) {
  const std::size_t n = m.on.size();
  std::vector<std::int32_t> comp(n, -1);
  std::vector<Point> best;
  auto bfs = [&](Point src, std::vector<std::int32_t>& parent) {
    std::vector<std::int32_t> dist(n, -1);
    parent.assign(n, -1);
    std::deque<Point> q{src};
    dist[static_cast<std::size_t>(src.y) * m.width + src.x] = 0;
    Point far = src;
    while (!q.empty()) {
      Point p = q.front();
      q.pop_front();
      const std::size_t pi = static_cast<std::size_t>(p.y) * m.width + p.x;
      if (dist[pi] > dist[static_cast<std::size_t>(far.y) * m.width + far.x]) far = p;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (!eight && dx != 0 && dy != 0) continue;
          const int nx = p.x + dx, ny = p.y + dy;
          if (!m.get(nx, ny)) continue;
          const std::size_t qi = static_cast<std::size_t>(ny) * m.width + nx;
          if (dist[qi] != -1) continue;
          dist[qi] = dist[pi] + 1;
          parent[qi] = static_cast<std::int32_t>(pi);
          q.push_back({nx, ny});
        }
    }
    return std::make_pair(far, dist);
  };
  std::int32_t comp_count = 0;
  std::vector<std::int32_t> parent;
  for (std::size_t start = 0; start < n; ++start) {
    if (!m.on[start] || comp[start] != -1) continue;
    const Point s{static_cast<int>(start % m.width), static_cast<int>(start / m.width)};
    auto [a, dist_a] = bfs(s, parent);
    for (std::size_t i = 0; i < n; ++i)
      if (dist_a[i] != -1) comp[i] = comp_count;
    ++comp_count;
    auto [b, dist_b] = bfs(a, parent);
    std::vector<Point> path;
    for (std::int32_t cur = static_cast<std::int32_t>(static_cast<std::size_t>(b.y) * m.width + b.x);
         cur != -1; cur = parent[cur]) {
      path.push_back({static_cast<int>(cur % m.width), static_cast<int>(cur / m.width)});
    }
    if (path.size() > best.size()) best = std::move(path);
  }
  return best;
}

// Turn an 8-connected path into a 4-connected one using corner pixels inside
// `allowed`; keeps the longest run when no corner is available.
std::vector<Point> to_4connected(const std::vector<Point>& path, const Mask& allowed) {
  std::vector<Point> best, run;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (run.empty()) {
      run.push_back(path[i]);
      continue;
    }
    const Point p = run.back(), q = path[i];
    if (p.x != q.x && p.y != q.y) {
      if (allowed.get(q.x, p.y)) {
        run.push_back({q.x, p.y});
      } else if (allowed.get(p.x, q.y)) {
        run.push_back({p.x, q.y});
      } else {
        if (run.size() > best.size()) best = run;
        run.clear();
      }
    }
    run.push_back(q);
  }
  if (run.size() > best.size()) best = std::move(run);
  return best;
}

// Drop interior points of axis-aligned straight runs (Bresenham reproduces them).
std::vector<Point> compress(const std::vector<Point>& path) {
  if (path.size() <= 2) return path;
  std::vector<Point> out{path.front()};
  for (std::size_t i = 1; i + 1 < path.size(); ++i) {
    const Point a = out.back(), b = path[i], c = path[i + 1];
    const bool straight = (a.x == b.x && b.x == c.x) || (a.y == b.y && b.y == c.y);
    if (!straight) out.push_back(b);
  }
  out.push_back(path.back());
  return out;
}

std::vector<Point> centre_path(const Mask& centres) {
  std::vector<Point> path = longest_path(skeletonize(centres), true);
  if (path.empty()) path = longest_path(centres, false);
  return to_4connected(path, centres);
}

}  // namespace

Scribble stroke_for_region(int width, int height, std::span<const std::size_t> region_pixels) {
  Scribble s;
  if (region_pixels.empty()) return s;
  // Work on the bounding box with a one pixel margin.
  std::size_t x0 = SIZE_MAX, y0 = SIZE_MAX, x1 = 0, y1 = 0;
  for (std::size_t p : region_pixels) {
    x0 = std::min(x0, p % width);
    x1 = std::max(x1, p % width);
    y0 = std::min(y0, p / width);
    y1 = std::max(y1, p / width);
  }
  const int ox = static_cast<int>(x0) - 1, oy = static_cast<int>(y0) - 1;
  Mask region{static_cast<int>(x1 - x0) + 3, static_cast<int>(y1 - y0) + 3, {}};
  region.on.assign(static_cast<std::size_t>(region.width) * region.height, 0);
  for (std::size_t p : region_pixels) {
    const int x = static_cast<int>(p % width) - ox, y = static_cast<int>(p / width) - oy;
    region.on[static_cast<std::size_t>(y) * region.width + x] = 1;
  }
  (void)height;

  constexpr std::size_t kMinLength = 5;
  std::vector<Point> path;
  int thickness = 3;
  const Mask eroded = erode3(region);
  if (std::any_of(eroded.on.begin(), eroded.on.end(), [](auto v) { return v != 0; }))
    path = centre_path(eroded);
  if (path.size() < kMinLength) {
    std::vector<Point> thin = centre_path(region);
    if (thin.size() > path.size() || path.empty()) {
      path = std::move(thin);
      thickness = 1;
    }
  }
  for (Point& p : path) {
    p.x += ox;
    p.y += oy;
  }
  s.points = compress(path);
  s.thickness = thickness;
  return s;
}

Scribble simulate_correction(std::span<const std::uint16_t> predicted_classes,
                             const PanopticTruth& truth, const ScribbleSet& existing) {
  const std::size_t n = truth.pixel_count();
  if (predicted_classes.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "prediction and truth sizes differ");
  const std::vector<std::int32_t> owner = scribble_owner_map(existing, truth.width, truth.height);

  // Error pixels keyed by their truth segment, so components never span two segments.
  std::map<std::pair<std::uint16_t, std::uint32_t>, std::int32_t> segment_key;
  std::vector<std::int32_t> keyed(n, -1);
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint16_t c = truth.class_ids[p];
    if (c == kIgnoreClass || predicted_classes[p] == c || owner[p] >= 0) continue;
    auto [it, inserted] = segment_key.try_emplace({c, truth.instance_ids[p]},
                                                  static_cast<std::int32_t>(segment_key.size()));
    keyed[p] = it->second;
  }
  if (segment_key.empty()) throw Error(ErrorCode::NoError, "prediction matches the ground truth");

  const ComponentLabels comps = label_components(truth.width, truth.height, keyed, -1);
  std::vector<std::size_t> sizes(comps.count, 0);
  for (std::size_t p = 0; p < n; ++p)
    if (comps.ids[p] >= 0) ++sizes[comps.ids[p]];
  const auto largest = static_cast<std::int32_t>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());  // first max: raster order

  std::vector<std::size_t> region;
  region.reserve(sizes[largest]);
  for (std::size_t p = 0; p < n; ++p)
    if (comps.ids[p] == largest) region.push_back(p);

  Scribble s = stroke_for_region(truth.width, truth.height, region);
  s.class_id = truth.class_ids[region.front()];
  const std::uint32_t inst = truth.instance_ids[region.front()];
  if (inst != 0) s.instance_id = static_cast<int>(inst);
  s.region_id = existing.next_region_id();

  // Continue an existing region when one of its strokes lies in the same
  // connected piece of the same truth segment.
  std::vector<std::int32_t> segment(n);
  for (std::size_t p = 0; p < n; ++p)
    segment[p] = static_cast<std::int32_t>(truth.class_ids[p]) * 65536 + static_cast<std::int32_t>(truth.instance_ids[p] & 0xffff);
  const ComponentLabels pieces = label_components(truth.width, truth.height, segment, -1);
  const std::int32_t target_piece = pieces.ids[region.front()];
  for (const Scribble& e : existing.scribbles) {
    if (e.class_id != s.class_id || e.instance_id != s.instance_id) continue;
    const auto px = rasterize_clipped(e, truth.width, truth.height);
    if (std::any_of(px.begin(), px.end(), [&](std::size_t p) { return pieces.ids[p] == target_piece; })) {
      s.region_id = e.region_id;
      break;
    }
  }
  return s;
}

}  // namespace cseg
