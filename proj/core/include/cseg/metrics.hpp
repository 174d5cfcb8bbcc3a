#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "cseg/raster.hpp"

namespace cseg {

struct ClassIou {
  std::int64_t intersection = 0;
  std::int64_t union_ = 0;
  double iou() const { return union_ > 0 ? static_cast<double>(intersection) / static_cast<double>(union_) : 0.0; }
};

struct IouResult {
  std::map<int, ClassIou> per_class;  // classes with a nonzero union only
  double mean = 0.0;
};

/// Per-class IoU over pixels whose truth is not the ignore class.
IouResult miou(std::span<const std::uint16_t> pred_classes, const PanopticTruth& truth);

struct PanopticCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double iou_sum = 0.0;  // over matched pairs

  double sq() const { return tp > 0 ? iou_sum / static_cast<double>(tp) : 0.0; }
  double rq() const {
    const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp) + 0.5 * static_cast<double>(fn);
    return denom > 0 ? static_cast<double>(tp) / denom : 0.0;
  }
  double pq() const { return sq() * rq(); }
};

struct PanopticResult {
  std::map<int, PanopticCounts> per_class;
  PanopticCounts total;  // counts pooled over classes
};

/// Segments are (class, instance) pixel sets; same-class pairs match when IoU
/// exceeds `match_threshold`. Truth ignore pixels are left out of the union, and
/// unmatched predictions lying mostly on ignore pixels are not false positives.
PanopticResult panoptic_quality(std::span<const std::uint16_t> pred_classes,
                                std::span<const std::uint32_t> pred_instances, const PanopticTruth& truth,
                                double match_threshold = 0.5);

struct EvalReport {
  IouResult semantic;
  std::optional<PanopticResult> panoptic;

  std::string to_json() const;
  /// Columns: class, iou, pq, sq, rq, tp, fp, fn; a final "all" row holds the means/totals.
  std::string to_csv() const;
};

EvalReport evaluate(std::span<const std::uint16_t> pred_classes,
                    std::optional<std::span<const std::uint32_t>> pred_instances, const PanopticTruth& truth);

}  // namespace cseg
