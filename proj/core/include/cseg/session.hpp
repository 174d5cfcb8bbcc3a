#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cseg/error.hpp"
#include "cseg/labels.hpp"
#include "cseg/metrics.hpp"
#include "cseg/milp.hpp"
#include "cseg/rag.hpp"
#include "cseg/raster.hpp"
#include "cseg/scribble.hpp"

namespace cseg {

enum class Algorithm { L0H, IlpU, IlpP };
std::string_view to_string(Algorithm a);
/// Accepts "l0h", "ilp-u", "ilp-p". Throws InvalidArgument otherwise.
Algorithm parse_algorithm(std::string_view name);

/// Where node features come from, in order of preference: a feature map, a
/// probability map, the image itself.
enum class FeatureSource { Rgb, Layer1, Layer3, Probability };
std::string_view to_string(FeatureSource s);
double default_eta(FeatureSource s);

struct SessionConfig {
  Algorithm algorithm = Algorithm::L0H;
  double lambda = 100.0;
  std::optional<double> eta;  // per feature source when unset
  SolveBudget budget;
  int cut_k = 3;
  int superpixel_target = 700;  // grid fallback when no superpixel map is given
  int max_outer_loops = 1000;
};
void to_json(nlohmann::json& j, const SessionConfig& c);

struct SessionInputs {
  ImagePlane image;
  std::optional<SuperpixelMap> superpixels;
  std::optional<DenseFieldMap> features;
  std::optional<DenseFieldMap> probabilities;
  std::optional<PanopticTruth> truth;
};

/// Throws DimensionMismatch when any map disagrees with the image size and
/// NotNormalized when the probability map is not a distribution per pixel.
void check_inputs(const SessionInputs& in);

struct RenderedMaps {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> classes;
  std::vector<std::uint32_t> instances;  // 0 for stuff
  std::vector<std::int32_t> regions;
};

/// Per-pixel maps: each pixel takes its superpixel's ids, scribbled pixels take
/// their scribble's ids.
RenderedMaps render(const LabelState& labels, const SuperpixelMap& sp, const ScribbleSet& scribbles);

/// Class colours blended over the image at the given opacity, with region
/// boundaries drawn dark. RGB bytes, row-major.
std::vector<std::uint8_t> render_overlay(const ImagePlane& image, const RenderedMaps& maps, double alpha = 0.5);

/// Most frequent class per superpixel (ties to the smaller class id).
std::vector<int> majority_classes(const SuperpixelMap& sp, std::span<const std::uint16_t> classes);

struct ScribbleConflict {
  int newer;  // scribble index
  int older;
  std::int32_t node;  // node of the previous round's graph
};

struct Timings {
  double build_seconds = 0.0;
  double solve_seconds = 0.0;
  double total_seconds = 0.0;
};

struct RoundRecord {
  int round = 0;
  ScribbleSet scribbles;          // full set used this round
  std::vector<int> added;         // indices of scribbles new in this round
  SuperpixelMap superpixels;      // after splitting by scribbles
  LabelState labels;              // per node of this round's graph
  RenderedMaps maps;
  PolicyReport policy;
  std::vector<ScribbleConflict> conflicts;
  std::string status;
  std::optional<double> objective;
  std::optional<double> warm_start_objective;
  std::optional<EvalReport> metrics;
  Timings timings;
  std::int64_t node_count = 0;
  std::int64_t cuts = 0;
  std::int64_t search_nodes = 0;
  bool warm_start_used = false;
};

class Session {
 public:
  Session(SessionInputs inputs, SessionConfig config);

  /// Merges the given scribbles into the current set and runs one round. Class
  /// kinds in `additions` extend the class map. With `enforce_policy` the merged
  /// set must pass validation (PolicyError otherwise); without it violations are
  /// recorded in the round and the round still runs.
  const RoundRecord& run_round(const ScribbleSet& additions, bool enforce_policy = false);

  const std::vector<RoundRecord>& history() const { return history_; }
  const SessionInputs& inputs() const { return inputs_; }
  const SessionConfig& config() const { return config_; }
  const SuperpixelMap& base_superpixels() const { return base_sp_; }
  FeatureSource feature_source() const { return source_; }
  double eta() const { return eta_; }
  const ScribbleSet& scribbles() const { return scribbles_; }

  /// JSON report of one round; `include_timings` false drops wall-clock fields.
  nlohmann::json round_report(const RoundRecord& r, bool include_timings = true) const;

  /// Writes inputs/, round_<r>/ (scribbles.json, class/instance/region/overlay
  /// PNGs, report.json) and a top level report.json listing every round.
  void save_snapshot(const std::filesystem::path& dir, bool include_timings = true) const;

 private:
  SessionInputs inputs_;
  SessionConfig config_;
  SuperpixelMap base_sp_;
  FeatureSource source_ = FeatureSource::Rgb;
  double eta_ = 0.1;
  ScribbleSet scribbles_;
  std::vector<RoundRecord> history_;
};

class PolicyError : public Error {
 public:
  explicit PolicyError(PolicyReport report);
  const PolicyReport& report() const { return report_; }

 private:
  PolicyReport report_;
};

struct EncodedMaps {
  std::vector<std::uint8_t> class_png;  // 8-bit, 16-bit when a class id exceeds 255
  std::vector<std::uint8_t> instance_png;  // 16-bit
  std::vector<std::uint8_t> region_png;    // 16-bit
  std::vector<std::uint8_t> overlay_png;   // RGB
};
EncodedMaps encode_maps(const ImagePlane& image, const RenderedMaps& maps);

/// Writes class.png, instance.png, region.png and overlay.png.
void write_maps(const std::filesystem::path& dir, const ImagePlane& image, const RenderedMaps& maps);

}  // namespace cseg
