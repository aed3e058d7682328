#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/schema.hpp"

namespace apcap {

/// COCO visibility convention.
enum Visibility : int { kUnlabeled = 0, kOccluded = 1, kVisible = 2 };

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  int v = kUnlabeled;

  bool labeled() const noexcept { return v > 0; }
  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const noexcept { return w * h; }
  double diagonal() const noexcept { return std::hypot(w, h); }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ImageSize {
  int width = 0;
  int height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

inline double distance(const Keypoint& a, const Keypoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Keypoints plus enclosing box, bound to a schema.
struct Pose {
  SchemaPtr schema;
  std::vector<Keypoint> points;
  BBox bbox;

  static Pose make(SchemaPtr schema, std::vector<Keypoint> points, BBox bbox) {
    if (!schema) throw Error(ErrorKind::InvalidArgument, "pose has no schema");
    if (points.size() != schema->size()) {
      throw Error(ErrorKind::SchemaMismatch, "expected " + std::to_string(schema->size()) + " keypoints, got " +
                                                 std::to_string(points.size()));
    }
    for (const auto& p : points) {
      if (p.v < 0 || p.v > 2) throw Error(ErrorKind::InvalidArgument, "visibility flag outside {0,1,2}");
    }
    return Pose{std::move(schema), std::move(points), bbox};
  }

  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const Keypoint& k) { return k.labeled(); }));
  }

  friend bool operator==(const Pose& a, const Pose& b) {
    const bool same_schema = a.schema == b.schema || (a.schema && b.schema && *a.schema == *b.schema);
    return same_schema && a.points == b.points && a.bbox == b.bbox;
  }
};

inline bool same_schema(const Pose& a, const Pose& b) {
  return a.schema == b.schema || (a.schema && b.schema && *a.schema == *b.schema);
}

struct Violation {
  enum class Rule { OutOfBounds, NonFinite, DegenerateBox };
  Rule rule;
  int keypoint = -1;  // -1 for box-level rules
  friend bool operator==(const Violation&, const Violation&) = default;
};

inline std::string to_string(const Violation& v) {
  switch (v.rule) {
    case Violation::Rule::OutOfBounds: return "OutOfBounds(" + std::to_string(v.keypoint) + ")";
    case Violation::Rule::NonFinite: return "NonFinite(" + std::to_string(v.keypoint) + ")";
    case Violation::Rule::DegenerateBox: return "DegenerateBox";
  }
  return "?";
}

/// Labeled keypoints must satisfy 0 <= x < width and 0 <= y < height; the box
/// must have positive area. Unlabeled keypoints are not checked.
inline std::vector<Violation> validate_pose(const Pose& pose, ImageSize image) {
  std::vector<Violation> out;
  for (std::size_t k = 0; k < pose.points.size(); ++k) {
    const auto& p = pose.points[k];
    if (!p.labeled()) continue;
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      out.push_back({Violation::Rule::NonFinite, static_cast<int>(k)});
    } else if (p.x < 0.0 || p.y < 0.0 || p.x >= image.width || p.y >= image.height) {
      out.push_back({Violation::Rule::OutOfBounds, static_cast<int>(k)});
    }
  }
  if (!(pose.bbox.w > 0.0 && pose.bbox.h > 0.0)) out.push_back({Violation::Rule::DegenerateBox, -1});
  return out;
}

struct BoneLength {
  Limb limb;
  double length = 0.0;
};

/// Euclidean length of every limb whose endpoints are both labeled, in schema
/// limb order.
inline std::vector<BoneLength> bone_lengths(const Pose& pose) {
  std::vector<BoneLength> out;
  for (const auto& limb : pose.schema->limbs()) {
    const auto& a = pose.points[static_cast<std::size_t>(limb.parent)];
    const auto& b = pose.points[static_cast<std::size_t>(limb.child)];
    if (a.labeled() && b.labeled()) out.push_back({limb, distance(a, b)});
  }
  return out;
}

/// Distance from keypoint k to its nearest other labeled keypoint, or nullopt
/// when k is unlabeled or has no labeled neighbour.
inline std::optional<double> nearest_neighbor_distance(const Pose& pose, std::size_t k) {
  if (!pose.points[k].labeled()) return std::nullopt;
  std::optional<double> best;
  for (std::size_t j = 0; j < pose.points.size(); ++j) {
    if (j == k || !pose.points[j].labeled()) continue;
    const double d = distance(pose.points[k], pose.points[j]);
    if (!best || d < *best) best = d;
  }
  return best;
}

/// Similarity transform from source-image pixels to a square-pixel generation
/// frame: p' = scale * (p - origin) + offset.
struct FrameTransform {
  double scale = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  Keypoint apply(const Keypoint& p) const {
    return {scale * (p.x - origin_x) + offset_x, scale * (p.y - origin_y) + offset_y, p.v};
  }
};

/// Crop-and-resize normalisation: the region spanned by the box and all
/// labeled keypoints is expanded by `padding` (relative), centred, and scaled
/// to fit `frame` with preserved aspect ratio. Every labeled keypoint of the
/// result lies inside the frame.
inline std::pair<Pose, FrameTransform> normalize_to_frame(const Pose& pose, ImageSize frame, double padding = 1.25) {
  double x0 = pose.bbox.x, y0 = pose.bbox.y;
  double x1 = pose.bbox.x + pose.bbox.w, y1 = pose.bbox.y + pose.bbox.h;
  for (const auto& p : pose.points) {
    if (!p.labeled()) continue;
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  const double cx = 0.5 * (x0 + x1);
  const double cy = 0.5 * (y0 + y1);
  const double w = std::max(x1 - x0, 1.0) * padding;
  const double h = std::max(y1 - y0, 1.0) * padding;
  const double scale = std::min(frame.width / w, frame.height / h);

  FrameTransform t{scale, cx, cy, 0.5 * frame.width, 0.5 * frame.height};
  Pose out = pose;
  for (auto& p : out.points) {
    if (p.labeled()) p = t.apply(p);
  }
  const Keypoint corner = t.apply({pose.bbox.x, pose.bbox.y, kVisible});
  out.bbox = {corner.x, corner.y, pose.bbox.w * scale, pose.bbox.h * scale};
  return {std::move(out), t};
}

}  // namespace apcap
