#include "cseg/metrics.hpp"

#include <charconv>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "cseg/error.hpp"

namespace cseg {

namespace {

void check_dims(std::size_t pred, const PanopticTruth& truth) {
  if (pred != truth.pixel_count() || truth.class_ids.size() != truth.pixel_count())
    throw Error(ErrorCode::DimensionMismatch, "prediction and truth sizes differ");
}

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

using SegKey = std::pair<int, std::uint32_t>;

}  // namespace

IouResult miou(std::span<const std::uint16_t> pred, const PanopticTruth& truth) {
  check_dims(pred.size(), truth);
  IouResult out;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    const int t = truth.class_ids[p];
    if (t == kIgnoreClass) continue;
    const int c = pred[p];
    if (c == t) {
      auto& s = out.per_class[c];
      ++s.intersection;
      ++s.union_;
    } else {
      ++out.per_class[t].union_;
      if (c != kIgnoreClass) ++out.per_class[c].union_;
    }
  }
  double sum = 0.0;
  for (const auto& [c, s] : out.per_class) sum += s.iou();
  out.mean = out.per_class.empty() ? 0.0 : sum / static_cast<double>(out.per_class.size());
  return out;
}

PanopticResult panoptic_quality(std::span<const std::uint16_t> pred_classes,
                                std::span<const std::uint32_t> pred_instances, const PanopticTruth& truth,
                                double match_threshold) {
  check_dims(pred_classes.size(), truth);
  if (pred_instances.size() != pred_classes.size() || truth.instance_ids.size() != truth.pixel_count())
    throw Error(ErrorCode::DimensionMismatch, "instance maps do not match");

  std::map<SegKey, std::int64_t> pred_area, pred_void, truth_area;
  std::map<std::pair<SegKey, SegKey>, std::int64_t> overlap;
  for (std::size_t p = 0; p < pred_classes.size(); ++p) {
    const int pc = pred_classes[p];
    const int tc = truth.class_ids[p];
    const SegKey tk{tc, truth.instance_ids[p]};
    if (tc != kIgnoreClass) ++truth_area[tk];
    if (pc == kIgnoreClass) continue;
    const SegKey pk{pc, pred_instances[p]};
    ++pred_area[pk];
    if (tc == kIgnoreClass)
      ++pred_void[pk];
    else if (tc == pc)
      ++overlap[{pk, tk}];
  }

  PanopticResult out;
  std::set<SegKey> matched_pred, matched_truth;
  for (const auto& [pair, inter] : overlap) {
    const auto& [pk, tk] = pair;
    const auto void_px = pred_void.count(pk) ? pred_void.at(pk) : 0;
    const auto uni = pred_area.at(pk) + truth_area.at(tk) - inter - void_px;
    const double iou = static_cast<double>(inter) / static_cast<double>(uni);
    if (iou > match_threshold) {
      matched_pred.insert(pk);
      matched_truth.insert(tk);
      auto& c = out.per_class[pk.first];
      ++c.tp;
      c.iou_sum += iou;
    }
  }
  for (const auto& [tk, area] : truth_area)
    if (!matched_truth.count(tk)) ++out.per_class[tk.first].fn;
  for (const auto& [pk, area] : pred_area) {
    if (matched_pred.count(pk)) continue;
    const auto void_px = pred_void.count(pk) ? pred_void.at(pk) : 0;
    if (2 * void_px > area) continue;
    ++out.per_class[pk.first].fp;
  }
  for (const auto& [c, counts] : out.per_class) {
    out.total.tp += counts.tp;
    out.total.fp += counts.fp;
    out.total.fn += counts.fn;
    out.total.iou_sum += counts.iou_sum;
  }
  return out;
}

EvalReport evaluate(std::span<const std::uint16_t> pred_classes,
                    std::optional<std::span<const std::uint32_t>> pred_instances, const PanopticTruth& truth) {
  EvalReport r;
  r.semantic = miou(pred_classes, truth);
  if (pred_instances) r.panoptic = panoptic_quality(pred_classes, *pred_instances, truth);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  std::set<int> ids;
  for (const auto& [c, s] : semantic.per_class) ids.insert(c);
  if (panoptic)
    for (const auto& [c, s] : panoptic->per_class) ids.insert(c);
  for (int c : ids) {
    nlohmann::json row{{"class", c}};
    if (auto it = semantic.per_class.find(c); it != semantic.per_class.end()) row["iou"] = it->second.iou();
    if (panoptic) {
      if (auto it = panoptic->per_class.find(c); it != panoptic->per_class.end()) {
        const auto& k = it->second;
        row["pq"] = k.pq();
        row["sq"] = k.sq();
        row["rq"] = k.rq();
        row["tp"] = k.tp;
        row["fp"] = k.fp;
        row["fn"] = k.fn;
      }
    }
    classes.push_back(row);
  }
  nlohmann::json j{{"miou", semantic.mean}, {"per_class", classes}};
  if (panoptic) {
    const auto& t = panoptic->total;
    j["pq"] = t.pq();
    j["sq"] = t.sq();
    j["rq"] = t.rq();
    j["tp"] = t.tp;
    j["fp"] = t.fp;
    j["fn"] = t.fn;
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "class,iou,pq,sq,rq,tp,fp,fn\n";
  std::set<int> ids;
  for (const auto& [c, s] : semantic.per_class) ids.insert(c);
  if (panoptic)
    for (const auto& [c, s] : panoptic->per_class) ids.insert(c);
  auto panoptic_cols = [&](const PanopticCounts& k) {
    os << ',' << num(k.pq()) << ',' << num(k.sq()) << ',' << num(k.rq()) << ',' << k.tp << ',' << k.fp << ',' << k.fn;
  };
  for (int c : ids) {
    os << c << ',';
    if (auto it = semantic.per_class.find(c); it != semantic.per_class.end()) os << num(it->second.iou());
    const PanopticCounts* k = nullptr;
    if (panoptic)
      if (auto it = panoptic->per_class.find(c); it != panoptic->per_class.end()) k = &it->second;
    if (k)
      panoptic_cols(*k);
    else
      os << ",,,,,,";
    os << '\n';
  }
  os << "all," << num(semantic.mean);
  if (panoptic)
    panoptic_cols(panoptic->total);
  else
    os << ",,,,,,";
  os << '\n';
  return os.str();
}

}  // namespace cseg
