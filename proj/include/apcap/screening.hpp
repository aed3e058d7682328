#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/pose.hpp"
#include "apcap/sample.hpp"

namespace apcap {

struct FilterConfig {
  double epsilon = 0.1;
  double oks_accept = 0.7;

  void validate() const {
    if (!(epsilon >= 0.0)) throw Error(ErrorKind::InvalidConfig, "filter.epsilon must be >= 0");
    if (!(oks_accept >= 0.0 && oks_accept <= 1.0)) throw Error(ErrorKind::InvalidConfig, "filter.oks_accept must lie in [0, 1]");
  }
};

/// Per-keypoint loss l(pred_k, gt_k). Only called on keypoints labeled in gt.
using KeypointLoss = std::function<double(const Keypoint& pred, const Keypoint& gt)>;

/// Squared pixel distance divided by the squared diagonal of `gt_box`.
inline KeypointLoss normalized_squared_loss(const BBox& gt_box) {
  const double diag2 = gt_box.w * gt_box.w + gt_box.h * gt_box.h;
  if (!(diag2 > 0.0)) throw Error(ErrorKind::InvalidArgument, "loss normaliser needs a non-degenerate box");
  return [diag2](const Keypoint& p, const Keypoint& g) {
    const double dx = p.x - g.x;
    const double dy = p.y - g.y;
    return (dx * dx + dy * dy) / diag2;
  };
}

struct FilterResult {
  double total = 0.0;
  std::vector<bool> mask;  // mask[k]: keypoint k contributed to total
};

/// Thresholded keypoint loss: sum of l_k over keypoints with l_k <= epsilon.
/// Keypoints unlabeled in gt never contribute.
inline FilterResult filter_loss(const Pose& pred, const Pose& gt, const KeypointLoss& loss, double epsilon) {
  if (!same_schema(pred, gt)) throw Error(ErrorKind::SchemaMismatch, "prediction and ground truth use different schemas");
  FilterResult r;
  r.mask.assign(gt.points.size(), false);
  for (std::size_t k = 0; k < gt.points.size(); ++k) {
    if (!gt.points[k].labeled()) continue;
    const double l = loss(pred.points[k], gt.points[k]);
    if (l <= epsilon) {
      r.total += l;
      r.mask[k] = true;
    }
  }
  return r;
}

inline FilterResult filter_loss(const Pose& pred, const Pose& gt, double epsilon) {
  return filter_loss(pred, gt, normalized_squared_loss(gt.bbox), epsilon);
}

/// Same rule over precomputed per-keypoint losses (all treated as labeled).
inline FilterResult filter_loss(std::span<const double> losses, double epsilon) {
  FilterResult r;
  r.mask.assign(losses.size(), false);
  for (std::size_t k = 0; k < losses.size(); ++k) {
    if (losses[k] <= epsilon) {
      r.total += losses[k];
      r.mask[k] = true;
    }
  }
  return r;
}

/// Object keypoint similarity with s^2 = gt box area and per-keypoint sigma
/// from the schema.
inline double oks(const Pose& pred, const Pose& gt) {
  if (!same_schema(pred, gt)) throw Error(ErrorKind::SchemaMismatch, "prediction and ground truth use different schemas");
  const double area = gt.bbox.area();
  if (!(area > 0.0)) throw Error(ErrorKind::InvalidArgument, "ground-truth box has zero area");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < gt.points.size(); ++k) {
    if (!gt.points[k].labeled()) continue;
    const double dx = pred.points[k].x - gt.points[k].x;
    const double dy = pred.points[k].y - gt.points[k].y;
    const double sigma = gt.schema->sigma(k);
    sum += std::exp(-(dx * dx + dy * dy) / (2.0 * area * sigma * sigma));
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::NoLabeledKeypoints, "ground truth has no labeled keypoints");
  return sum / static_cast<double>(n);
}

struct ScreenDecision {
  bool accepted = false;
  double oks = 0.0;
  std::string reason;  // empty when accepted
};

/// Accept iff oks(redetected, sample.pose) >= cfg.oks_accept. A redetection
/// that shares no labeled keypoint with the sample is rejected, not an error.
inline ScreenDecision screen_sample(const AnnotatedSample& sample, const Pose& redetected, const FilterConfig& cfg) {
  if (!same_schema(redetected, sample.pose)) {
    throw Error(ErrorKind::SchemaMismatch, "redetected pose of '" + sample.image_ref + "' uses another schema");
  }
  if (sample.pose.labeled_count() == 0) return {false, 0.0, "no labeled keypoints"};
  const double value = oks(redetected, sample.pose);
  if (value >= cfg.oks_accept) return {true, value, {}};
  return {false, value, "oks " + std::to_string(value) + " below " + std::to_string(cfg.oks_accept)};
}

}  // namespace apcap
