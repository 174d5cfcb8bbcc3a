#include "cseg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <tuple>

#include "cseg/grid.hpp"

namespace cseg {

namespace {

constexpr int kClasses = 4;

const std::array<std::array<float, 3>, kClasses> kBaseColour{{
    {0.55f, 0.70f, 0.90f},
    {0.45f, 0.40f, 0.30f},
    {0.85f, 0.20f, 0.20f},
    {0.20f, 0.75f, 0.30f},
}};

DenseFieldMap softmax_field(int w, int h, const std::vector<std::array<double, kClasses>>& logits) {
  DenseFieldMap f{w, h, kClasses, true, std::vector<float>(logits.size() * kClasses)};
  for (std::size_t p = 0; p < logits.size(); ++p) {
    const double top = *std::max_element(logits[p].begin(), logits[p].end());
    std::array<double, kClasses> e{};
    double sum = 0.0;
    for (int c = 0; c < kClasses; ++c) sum += e[c] = std::exp(logits[p][c] - top);
    for (int c = 0; c < kClasses; ++c) f.values[p * kClasses + c] = static_cast<float>(e[c] / sum);
  }
  return f;
}

/// One stroke per 4-connected piece of every truth segment, pieces smaller than
/// `min_pixels` left unscribbled.
ScribbleSet scribbles_from_truth(const PanopticTruth& t, std::size_t min_pixels) {
  std::map<std::pair<std::uint16_t, std::uint32_t>, std::int32_t> keys;
  std::vector<std::int32_t> keyed(t.pixel_count());
  for (std::size_t p = 0; p < keyed.size(); ++p)
    keyed[p] = keys.try_emplace({t.class_ids[p], t.instance_ids[p]}, static_cast<std::int32_t>(keys.size()))
                   .first->second;
  const auto comps = label_components(t.width, t.height, keyed, -1);
  std::vector<std::vector<std::size_t>> pieces(comps.count);
  for (std::size_t p = 0; p < keyed.size(); ++p) pieces[comps.ids[p]].push_back(p);

  ScribbleSet set;
  for (const auto& piece : pieces) {
    if (piece.size() < min_pixels) continue;
    Scribble s = stroke_for_region(t.width, t.height, piece);
    if (s.points.empty()) continue;
    s.class_id = t.class_ids[piece.front()];
    const auto inst = t.instance_ids[piece.front()];
    if (inst != 0) s.instance_id = static_cast<int>(inst);
    s.region_id = static_cast<int>(set.scribbles.size()) + 1;
    set.scribbles.push_back(std::move(s));
  }
  set.class_map = {{0, ClassKind::Stuff}, {1, ClassKind::Stuff}, {2, ClassKind::Thing}, {3, ClassKind::Thing}};
  return set;
}

/// Reassigns 4-connected truth pieces smaller than `min_pixels` to the segment
/// they share the longest border with, so every piece is large enough to scribble.
void absorb_slivers(PanopticTruth& t, std::size_t min_pixels) {
  const int w = t.width, h = t.height;
  for (int pass = 0; pass < 8; ++pass) {
    std::map<std::pair<std::uint16_t, std::uint32_t>, std::int32_t> keys;
    std::vector<std::int32_t> keyed(t.pixel_count());
    for (std::size_t p = 0; p < keyed.size(); ++p)
      keyed[p] = keys.try_emplace({t.class_ids[p], t.instance_ids[p]}, static_cast<std::int32_t>(keys.size()))
                     .first->second;
    const auto comps = label_components(w, h, keyed, -1);
    std::vector<std::size_t> sizes(comps.count, 0);
    for (auto id : comps.ids) ++sizes[id];
    bool changed = false;
    for (std::int32_t c = 0; c < comps.count; ++c) {
      if (sizes[c] >= min_pixels) continue;
      std::map<std::pair<std::uint16_t, std::uint32_t>, int> border;
      for (std::size_t p = 0; p < comps.ids.size(); ++p) {
        if (comps.ids[p] != c) continue;
        const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
        const int nx[4] = {x - 1, x + 1, x, x}, ny[4] = {y, y, y - 1, y + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
          const auto q = static_cast<std::size_t>(ny[k]) * w + nx[k];
          if (comps.ids[q] != c) ++border[{t.class_ids[q], t.instance_ids[q]}];
        }
      }
      if (border.empty()) continue;
      const auto best = std::max_element(border.begin(), border.end(),
                                         [](const auto& a, const auto& b) { return a.second < b.second; });
      for (std::size_t p = 0; p < comps.ids.size(); ++p)
        if (comps.ids[p] == c) {
          t.class_ids[p] = best->first.first;
          t.instance_ids[p] = best->first.second;
        }
      changed = true;
    }
    if (!changed) return;
  }
}

/// Merges cells smaller than `min_pixels` into the same-segment neighbour they
/// share the longest border with, the way oversegmenters enforce a minimum size.
SuperpixelMap absorb_small_cells(const SuperpixelMap& sp, const PanopticTruth& t, std::size_t min_pixels) {
  const int w = sp.width, h = sp.height;
  std::vector<std::int32_t> ids = sp.ids;
  std::vector<std::size_t> sizes(sp.count, 0);
  for (auto id : ids) ++sizes[id];
  for (std::int32_t c = 0; c < sp.count; ++c) {
    if (sizes[c] == 0 || sizes[c] >= min_pixels) continue;
    std::map<std::int32_t, int> border;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (ids[p] != c) continue;
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      const int nx[4] = {x - 1, x + 1, x, x}, ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
        const auto q = static_cast<std::size_t>(ny[k]) * w + nx[k];
        if (ids[q] != c && t.class_ids[q] == t.class_ids[p] && t.instance_ids[q] == t.instance_ids[p])
          ++border[ids[q]];
      }
    }
    if (border.empty()) continue;
    const auto into = std::max_element(border.begin(), border.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; })->first;
    for (auto& id : ids)
      if (id == c) id = into;
    sizes[into] += sizes[c];
    sizes[c] = 0;
  }
  return relabel_connected(w, h, ids);
}

}  // namespace

SynthFixture make_fixture(const SynthConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int w = cfg.width, h = cfg.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;

  PanopticTruth t{w, h, std::vector<std::uint16_t>(n, 0), std::vector<std::uint32_t>(n, 0)};
  const double band = h * (0.6 + 0.15 * unit(rng));
  const double amp = h * 0.06 * unit(rng), freq = 0.05 + 0.15 * unit(rng), phase = 6.28 * unit(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (y > band + amp * std::sin(freq * x + phase)) t.class_ids[static_cast<std::size_t>(y) * w + x] = 1;

  std::map<int, std::uint32_t> next_instance;
  for (int o = 0; o < cfg.objects; ++o) {
    const int cls = 2 + static_cast<int>(unit(rng) * 2.0);
    const double cx = w * (0.15 + 0.7 * unit(rng)), cy = h * (0.15 + 0.7 * unit(rng));
    const double rx = std::max(4.0, w * (0.08 + 0.12 * unit(rng)));
    const double ry = std::max(4.0, h * (0.08 + 0.12 * unit(rng)));
    const std::uint32_t inst = ++next_instance[cls];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        if (dx * dx + dy * dy > 1.0) continue;
        const auto p = static_cast<std::size_t>(y) * w + x;
        t.class_ids[p] = static_cast<std::uint16_t>(cls);
        t.instance_ids[p] = inst;
      }
  }

  constexpr std::size_t kMinPiece = 12;
  absorb_slivers(t, kMinPiece);

  ImagePlane img{w, h, 3, std::vector<float>(n * 3)};
  for (std::size_t p = 0; p < n; ++p) {
    const auto& base = kBaseColour[t.class_ids[p]];
    const double shade = 0.08 * static_cast<double>(t.instance_ids[p] % 3);
    for (int c = 0; c < 3; ++c)
      img.data[p * 3 + c] =
          static_cast<float>(std::clamp(base[c] - shade + cfg.image_noise * gauss(rng), 0.0, 1.0));
  }

  struct Blob {
    double x, y, r;
    int cls;
  };
  std::vector<Blob> blobs;
  for (int b = 0; b < cfg.blobs; ++b)
    blobs.push_back({w * unit(rng), h * unit(rng), std::max(3.0, w * (0.06 + 0.1 * unit(rng))),
                     static_cast<int>(unit(rng) * kClasses)});
  std::vector<std::array<double, kClasses>> logits(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto p = static_cast<std::size_t>(y) * w + x;
      auto& l = logits[p];
      for (int c = 0; c < kClasses; ++c) l[c] = 0.3 * gauss(rng);
      l[t.class_ids[p]] += cfg.truth_logit;
      for (const auto& bl : blobs) {
        const double d2 = ((x - bl.x) * (x - bl.x) + (y - bl.y) * (y - bl.y)) / (bl.r * bl.r);
        l[bl.cls] += cfg.blob_strength * std::exp(-d2);
      }
    }

  SynthFixture f;
  f.inputs.image = std::move(img);
  f.inputs.probabilities = softmax_field(w, h, logits);
  const int cell = std::max(cfg.superpixel_cell, 1);
  SuperpixelMap grid = grid_superpixels(w, h, std::max(1, (w / cell) * (h / cell)));
  if (cfg.edge_adherent) {
    // Stand-in for an edge-following oversegmentation: cells never straddle a segment boundary.
    std::map<std::tuple<std::int32_t, std::uint16_t, std::uint32_t>, std::int32_t> keys;
    std::vector<std::int32_t> ids(n);
    for (std::size_t p = 0; p < n; ++p)
      ids[p] = keys.try_emplace({grid.ids[p], t.class_ids[p], t.instance_ids[p]}, static_cast<std::int32_t>(keys.size()))
                   .first->second;
    grid = relabel_connected(w, h, ids);
    grid = absorb_small_cells(grid, t, static_cast<std::size_t>(cell * cell) / 3);
  }
  f.inputs.superpixels = std::move(grid);
  f.scribbles = scribbles_from_truth(t, kMinPiece);
  f.inputs.truth = std::move(t);
  return f;
}

SynthFixture make_island_fixture() {
  constexpr int w = 32, h = 32;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  PanopticTruth t{w, h, std::vector<std::uint16_t>(n, 0), std::vector<std::uint32_t>(n, 0)};
  std::vector<std::array<double, kClasses>> logits(n);
  ImagePlane img{w, h, 3, std::vector<float>(n * 3)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto p = static_cast<std::size_t>(y) * w + x;
      const int cls = x < 20 ? 0 : 1;
      t.class_ids[p] = static_cast<std::uint16_t>(cls);
      const bool island = x >= 4 && x < 12 && y >= 12 && y < 20;
      const int believed = island ? 1 : cls;
      logits[p] = {-20.0, -20.0, -20.0, -20.0};
      // p(believed) = 0.8 outside the island, 0.95 on it
      logits[p][believed] = 0.0;
      logits[p][1 - believed] = island ? std::log(0.05 / 0.95) : std::log(0.2 / 0.8);
      for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = kBaseColour[cls][c];
    }

  SynthFixture f;
  f.inputs.image = std::move(img);
  // Two-class probability map: drop the unused channels.
  const auto four = softmax_field(w, h, logits);
  DenseFieldMap two{w, h, 2, true, std::vector<float>(n * 2)};
  for (std::size_t p = 0; p < n; ++p) {
    const double a = four.values[p * kClasses], b = four.values[p * kClasses + 1];
    two.values[p * 2] = static_cast<float>(a / (a + b));
    two.values[p * 2 + 1] = static_cast<float>(b / (a + b));
  }
  f.inputs.probabilities = std::move(two);
  f.inputs.superpixels = grid_superpixels(w, h, 64);
  f.inputs.truth = std::move(t);

  Scribble left{{{2, 2}, {2, 29}}, 0, 1, std::nullopt, 3};
  Scribble right{{{28, 2}, {28, 29}}, 1, 2, std::nullopt, 3};
  f.scribbles.scribbles = {left, right};
  f.scribbles.class_map = {{0, ClassKind::Stuff}, {1, ClassKind::Stuff}};
  return f;
}

void save_fixture(const std::filesystem::path& dir, const SynthFixture& f) {
  std::filesystem::create_directories(dir);
  save_png(dir / "image.png", f.inputs.image);
  if (f.inputs.superpixels) save_superpixels(dir / "superpixels.png", *f.inputs.superpixels);
  if (f.inputs.probabilities) save_field(dir / "probmap.cseg", *f.inputs.probabilities);
  if (f.inputs.truth) save_truth(dir / "truth.png", *f.inputs.truth);
  save_scribbles(dir / "scribbles.json", f.scribbles);
}

}  // namespace cseg
