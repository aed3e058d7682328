#pragma once

// COCO-style keypoint AP and PCK.
//
// map_oks follows the reference COCO evaluator: per (image, category) the
// top max_dets detections by score are greedily matched, highest score first,
// to the unmatched ground truth of highest OKS at or above the threshold.
// Precision is made monotone and sampled at 101 recall points. Thresholds
// and recall points reproduce numpy.linspace bit for bit.

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "apcap/dataset/coco.hpp"
#include "apcap/error.hpp"
#include "apcap/sample.hpp"
#include "apcap/screening.hpp"

namespace apcap {

struct Detection {
  std::string image_ref;
  std::string category;
  Pose pose;
  double score = 0.0;
};

enum class Metric { MAP, PCK05 };

inline std::string_view to_string(Metric m) { return m == Metric::MAP ? "mAP" : "PCK05"; }

inline Metric parse_metric(std::string_view text) {
  if (text == "map" || text == "mAP") return Metric::MAP;
  if (text == "pck05" || text == "PCK05") return Metric::PCK05;
  throw Error(ErrorKind::InvalidArgument, "unknown metric '" + std::string(text) + "' (map|pck05)");
}

struct EvalReport {
  Metric metric = Metric::MAP;
  double overall = 0.0;
  std::map<std::string, double> per_threshold;  // "0.50" -> AP (mAP only)
  std::map<std::string, double> per_category;
  std::size_t n_instances = 0;
  std::size_t n_keypoints = 0;  // labeled keypoints scored (PCK only)
};

inline constexpr std::size_t kNumOksThresholds = 10;
inline constexpr std::size_t kNumRecallPoints = 101;

/// 0.50, 0.55, ..., 0.95
inline std::array<double, kNumOksThresholds> oks_thresholds() {
  std::array<double, kNumOksThresholds> t{};
  const double step = (0.95 - 0.5) / 9.0;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 + static_cast<double>(i) * step;
  t.back() = 0.95;
  return t;
}

/// 0.00, 0.01, ..., 1.00
inline std::array<double, kNumRecallPoints> recall_points() {
  std::array<double, kNumRecallPoints> r{};
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<double>(i) * 0.01;
  r.back() = 1.0;
  return r;
}

inline std::string threshold_key(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

/// Interpolated AP from detections already sorted by descending score.
/// `tp[i]` says whether detection i matched; `n_gt` is the positive count.
inline double interpolated_ap(const std::vector<bool>& tp, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  const std::size_t n = tp.size();
  std::vector<double> precision(n), recall(n);
  double tps = 0, fps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (tp[i] ? tps : fps) += 1.0;
    recall[i] = tps / static_cast<double>(n_gt);
    precision[i] = tps / (tps + fps);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (const double r : recall_points()) {
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / static_cast<double>(kNumRecallPoints);
}

struct MapOptions {
  std::size_t max_dets = 20;
};

namespace eval_detail {

struct Ranked {
  const Detection* det;
  std::size_t image;  // index into the sorted image list
};

/// Score descending; ties broken on content so input order never matters.
inline bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_ref != b.image_ref) return a.image_ref < b.image_ref;
  for (std::size_t k = 0; k < a.pose.points.size() && k < b.pose.points.size(); ++k) {
    const auto& p = a.pose.points[k];
    const auto& q = b.pose.points[k];
    if (p.x != q.x) return p.x < q.x;
    if (p.y != q.y) return p.y < q.y;
    if (p.v != q.v) return p.v < q.v;
  }
  return false;
}

}  // namespace eval_detail

/// Ground truths without labeled keypoints are dropped before evaluation;
/// categories without any remaining ground truth do not contribute.
inline EvalReport map_oks(std::span<const Detection> dets, std::span<const AnnotatedSample> gts, const MapOptions& opt = {}) {
  using Key = std::pair<std::string, std::string>;  // (category, image_ref)
  std::map<Key, std::vector<const Pose*>> gt_by;
  std::map<std::string, std::size_t> n_gt;
  for (const auto& g : gts) {
    if (g.pose.labeled_count() == 0) continue;
    gt_by[{g.category, g.image_ref}].push_back(&g.pose);
    ++n_gt[g.category];
  }
  if (n_gt.empty()) throw Error(ErrorKind::EmptyGroundTruth, "no ground truth instance has labeled keypoints");

  std::map<Key, std::vector<const Detection*>> det_by;
  for (const auto& d : dets) {
    if (!n_gt.count(d.category)) continue;
    det_by[{d.category, d.image_ref}].push_back(&d);
  }
  for (auto& [key, list] : det_by) {
    std::sort(list.begin(), list.end(), [](const Detection* a, const Detection* b) { return eval_detail::ranks_before(*a, *b); });
    if (list.size() > opt.max_dets) list.resize(opt.max_dets);
  }

  const auto thresholds = oks_thresholds();
  EvalReport report;
  report.metric = Metric::MAP;
  std::array<double, kNumOksThresholds> threshold_sum{};

  for (const auto& [category, count] : n_gt) {
    report.n_instances += count;
    // OKS tables per image, computed once for all thresholds.
    std::vector<const Detection*> ranked;
    std::map<const Detection*, std::vector<double>> oks_table;
    std::map<const Detection*, Key> det_key;
    for (auto it = det_by.lower_bound({category, ""}); it != det_by.end() && it->first.first == category; ++it) {
      const auto gt_it = gt_by.find(it->first);
      for (const Detection* d : it->second) {
        ranked.push_back(d);
        det_key[d] = it->first;
        auto& row = oks_table[d];
        if (gt_it != gt_by.end()) {
          for (const Pose* g : gt_it->second) row.push_back(oks(d->pose, *g));
        }
      }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Detection* a, const Detection* b) { return eval_detail::ranks_before(*a, *b); });

    double category_sum = 0.0;
    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      const double thr = thresholds[ti];
      std::map<Key, std::vector<bool>> taken;
      std::vector<bool> tp(ranked.size(), false);
      // Matching is per image and in score order within it; the global order
      // restricted to one image is that image's score order.
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        const auto& row = oks_table[ranked[i]];
        auto& used = taken[det_key[ranked[i]]];
        used.resize(row.size(), false);
        double best = thr;
        int match = -1;
        for (std::size_t g = 0; g < row.size(); ++g) {
          if (used[g] || row[g] < best) continue;
          best = row[g];
          match = static_cast<int>(g);
        }
        if (match >= 0) {
          used[static_cast<std::size_t>(match)] = true;
          tp[i] = true;
        }
      }
      const double ap = interpolated_ap(tp, count);
      threshold_sum[ti] += ap;
      category_sum += ap;
    }
    report.per_category[category] = category_sum / static_cast<double>(thresholds.size());
  }

  double overall = 0.0;
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    const double ap = threshold_sum[ti] / static_cast<double>(n_gt.size());
    report.per_threshold[threshold_key(thresholds[ti])] = ap;
    overall += ap;
  }
  report.overall = overall / static_cast<double>(thresholds.size());
  return report;
}

enum class PckNormalizer { BboxMax, BboxDiagonal };

inline PckNormalizer parse_pck_normalizer(std::string_view text) {
  if (text == "bbox_max") return PckNormalizer::BboxMax;
  if (text == "bbox_diagonal") return PckNormalizer::BboxDiagonal;
  throw Error(ErrorKind::InvalidArgument, "unknown PCK normaliser '" + std::string(text) + "' (bbox_max|bbox_diagonal)");
}

struct PckOptions {
  double fraction = 0.05;
  PckNormalizer normalizer = PckNormalizer::BboxMax;
};

/// Keypoint k of instance i is correct iff its error is <= fraction times the
/// reference length of gt i. preds[i] pairs with gts[i].
inline EvalReport pck(std::span<const Pose> preds, std::span<const AnnotatedSample> gts, const PckOptions& opt = {}) {
  if (preds.size() != gts.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(preds.size()) + " predictions for " + std::to_string(gts.size()) +
                                               " ground-truth instances");
  }
  EvalReport report;
  report.metric = Metric::PCK05;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_cat;  // correct, labeled
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const Pose& gt = gts[i].pose;
    const Pose& pred = preds[i];
    if (!same_schema(pred, gt)) throw Error(ErrorKind::SchemaMismatch, "prediction " + std::to_string(i) + " uses another schema");
    const double ref = opt.normalizer == PckNormalizer::BboxMax ? std::max(gt.bbox.w, gt.bbox.h) : gt.bbox.diagonal();
    const double limit = opt.fraction * ref;
    auto& [cat_correct, cat_labeled] = per_cat[gts[i].category];
    bool any = false;
    for (std::size_t k = 0; k < gt.points.size(); ++k) {
      if (!gt.points[k].labeled()) continue;
      any = true;
      ++cat_labeled;
      ++report.n_keypoints;
      if (distance(pred.points[k], gt.points[k]) <= limit) {
        ++cat_correct;
        ++correct;
      }
    }
    if (any) ++report.n_instances;
  }
  for (const auto& [cat, c] : per_cat) {
    if (c.second) report.per_category[cat] = static_cast<double>(c.first) / static_cast<double>(c.second);
  }
  report.overall = report.n_keypoints ? static_cast<double>(correct) / static_cast<double>(report.n_keypoints) : 0.0;
  return report;
}

inline EvalReport pck05(std::span<const Pose> preds, std::span<const AnnotatedSample> gts) { return pck(preds, gts, {}); }

inline Json report_json(const EvalReport& r) {
  Json j;
  j["metric"] = std::string(to_string(r.metric));
  j["overall"] = r.overall;
  if (r.metric == Metric::MAP) j["per_threshold"] = Json(r.per_threshold);
  j["per_category"] = Json(r.per_category);
  j["n_instances"] = r.n_instances;
  if (r.metric == Metric::PCK05) j["n_keypoints"] = r.n_keypoints;
  return j;
}

/// COCO results: [{image_id, category_id, keypoints, score, bbox?}], ids
/// resolved against the ground-truth document.
inline std::vector<Detection> parse_coco_results(const std::string& text, const SchemaPtr& schema, const CocoDocument& gt,
                                                 const std::string& origin = "<results>") {
  using namespace coco_detail;
  const Json root = parse_json_text(text, origin);
  if (!root.is_array()) fail(origin, "results must be a JSON array");
  std::vector<Detection> out;
  out.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = origin + ": /" + std::to_string(i);
    const auto image_id = id_member(root[i], "image_id", where);
    const auto cat_id = id_member(root[i], "category_id", where);
    const auto img = gt.image_refs.find(image_id);
    if (img == gt.image_refs.end()) fail(where, "unknown image_id " + std::to_string(image_id));
    const auto cat = gt.categories.find(cat_id);
    if (cat == gt.categories.end()) fail(where, "unknown category_id " + std::to_string(cat_id));
    auto pts = parse_keypoint_triples(member(root[i], "keypoints", where), *schema, where + "/keypoints");
    const double score = number(member(root[i], "score", where), where + "/score");
    BBox box = keypoint_extent(pts);
    if (const auto b = root[i].find("bbox"); b != root[i].end() && b->is_array() && b->size() == 4) {
      box = {number((*b)[0], where), number((*b)[1], where), number((*b)[2], where), number((*b)[3], where)};
    }
    out.push_back({img->second, cat->second, Pose::make(schema, std::move(pts), box), score});
  }
  return out;
}

inline std::vector<Detection> read_coco_results(const std::filesystem::path& path, const SchemaPtr& schema, const CocoDocument& gt) {
  return parse_coco_results(read_text_file(path), schema, gt, path.string());
}

inline Json coco_results_json(std::span<const Detection> dets, const CocoDocument& gt) {
  Json arr = Json::array();
  for (const auto& d : dets) {
    const auto image_id = gt.image_id(d.image_ref);
    const auto cat_id = gt.category_id(d.category);
    if (!image_id || !cat_id) throw Error(ErrorKind::InvalidArgument, "detection on '" + d.image_ref + "' has no ground-truth id");
    const auto& b = d.pose.bbox;
    arr.push_back(Json{{"image_id", *image_id},
                       {"category_id", *cat_id},
                       {"keypoints", keypoint_triples(d.pose.points)},
                       {"score", d.score},
                       {"bbox", Json::array({b.x, b.y, b.w, b.h})}});
  }
  return arr;
}

}  // namespace apcap
