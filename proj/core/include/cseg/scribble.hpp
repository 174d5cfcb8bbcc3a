#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cseg/raster.hpp"

namespace cseg {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct Scribble {
  std::vector<Point> points;
  int class_id = 0;
  int region_id = 0;
  std::optional<int> instance_id;
  int thickness = 3;
};

enum class ClassKind { Thing, Stuff };

struct ScribbleSet {
  std::vector<Scribble> scribbles;
  std::map<int, ClassKind> class_map;

  bool is_thing(int class_id) const {
    auto it = class_map.find(class_id);
    return it != class_map.end() && it->second == ClassKind::Thing;
  }
  int next_region_id() const;
};

// --- JSON wire format ---
void to_json(nlohmann::json& j, const ScribbleSet& s);
void from_json(const nlohmann::json& j, ScribbleSet& s);
ScribbleSet parse_scribbles(std::string_view text);
std::string dump_scribbles(const ScribbleSet& s);
ScribbleSet load_scribbles(const std::filesystem::path& path);
void save_scribbles(const std::filesystem::path& path, const ScribbleSet& s);

/// Thick stroke along the polyline: 4-connected Bresenham centre line stamped
/// with a thickness x thickness square brush, clipped to the image. Sorted pixel
/// indices. Throws OutOfBounds when a control point lies outside the image.
std::vector<std::size_t> rasterize(const Scribble& s, int width, int height);

/// Same stroke without the bounds check; off-image pixels are dropped.
std::vector<std::size_t> rasterize_clipped(const Scribble& s, int width, int height);

/// Per-pixel index of the owning scribble (-1 when unscribbled). Where strokes
/// overlap, the later scribble in the set owns the pixel.
std::vector<std::int32_t> scribble_owner_map(const ScribbleSet& set, int width, int height);

enum class PolicyViolationKind {
  Disconnected,      // rasterized stroke is not one 4-connected piece
  DuplicateRegion,   // region id used by more than one scribble
  Overlap,           // strokes of different regions share a pixel
  OutOfBounds,       // control point outside the image
  EmptyPolyline,
  InstanceMismatch,  // thing without instance id, or stuff with one
};
std::string_view to_string(PolicyViolationKind kind);

struct PolicyViolation {
  PolicyViolationKind kind;
  std::vector<int> scribbles;  // indices into the set
  std::string message;
};

struct PolicyReport {
  std::vector<PolicyViolation> violations;
  bool ok() const { return violations.empty(); }
  bool has(PolicyViolationKind kind) const;
};
void to_json(nlohmann::json& j, const PolicyReport& r);

PolicyReport validate_policy(const ScribbleSet& set, int width, int height);
inline PolicyReport validate_policy(const ScribbleSet& set, const SuperpixelMap& sp) {
  return validate_policy(set, sp.width, sp.height);
}

/// Correction scribble for the largest mislabeled 4-connected area that lies in a
/// single ground-truth segment. The stroke follows the longest path of that
/// area's skeleton, stays inside the area, and carries the segment's class and
/// instance with a fresh region id. Throws NoError when nothing is mislabeled.
Scribble simulate_correction(std::span<const std::uint16_t> predicted_classes,
                             const PanopticTruth& truth, const ScribbleSet& existing);

/// Stroke for an arbitrary pixel region: erosion + skeleton + longest path. Used
/// by the correction simulator and to synthesize initial scribbles from truth.
/// Returns an empty polyline when the region is empty.
Scribble stroke_for_region(int width, int height, std::span<const std::size_t> region_pixels);

}  // namespace cseg
