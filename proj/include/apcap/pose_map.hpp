#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/image.hpp"
#include "apcap/palette.hpp"
#include "apcap/pose.hpp"

namespace apcap {

enum class PoseMapStyle { SkeletonLines, Heatmap };

inline std::string_view to_string(PoseMapStyle s) {
  return s == PoseMapStyle::SkeletonLines ? "skeleton" : "heatmap";
}

inline PoseMapStyle parse_pose_map_style(std::string_view text) {
  if (text == "skeleton" || text == "SkeletonLines") return PoseMapStyle::SkeletonLines;
  if (text == "heatmap" || text == "Heatmap") return PoseMapStyle::Heatmap;
  throw Error(ErrorKind::InvalidConfig, "unknown pose map style '" + std::string(text) + "'");
}

/// Geometry of the rendered map, expressed at the 256x256 reference size and
/// scaled linearly with min(width, height).
struct PoseMapOptions {
  double line_width = 4.0;
  double disc_radius = 4.0;
  double heatmap_sigma = 2.0;
};

struct PoseMap {
  PoseMapStyle style = PoseMapStyle::SkeletonLines;
  Image image;

  int width() const { return image.width; }
  int height() const { return image.height; }
};

/// Rasterise a pose already expressed in map coordinates. SkeletonLines: black
/// background, each fully-labeled limb as a line in limb_color(j), then each
/// labeled keypoint as a disc in keypoint_color(k). Heatmap: a Gaussian per
/// labeled keypoint, summed into R (face), G (spine) or B (limbs).
inline PoseMap render_pose_map(const Pose& pose, ImageSize size, PoseMapStyle style, const PoseMapOptions& opt = {}) {
  if (pose.labeled_count() == 0) throw Error(ErrorKind::EmptyPose, "pose has no labeled keypoints");
  for (const auto& v : validate_pose(pose, size)) {
    if (v.rule != Violation::Rule::DegenerateBox) {
      throw Error(ErrorKind::InvalidArgument, "pose does not fit the map: " + to_string(v));
    }
  }
  const double scale = std::min(size.width, size.height) / 256.0;
  const auto& schema = *pose.schema;
  PoseMap map{style, Image(size.width, size.height)};

  if (style == PoseMapStyle::SkeletonLines) {
    const auto& limbs = schema.limbs();
    for (std::size_t j = 0; j < limbs.size(); ++j) {
      const auto& a = pose.points[static_cast<std::size_t>(limbs[j].parent)];
      const auto& b = pose.points[static_cast<std::size_t>(limbs[j].child)];
      if (!a.labeled() || !b.labeled()) continue;
      fill_capsule(map.image, a.x, a.y, b.x, b.y, 0.5 * opt.line_width * scale, limb_color(j));
    }
    for (std::size_t k = 0; k < pose.points.size(); ++k) {
      const auto& p = pose.points[k];
      if (p.labeled()) fill_disc(map.image, p.x, p.y, opt.disc_radius * scale, keypoint_color(k));
    }
    return map;
  }

  const double sigma = opt.heatmap_sigma * scale;
  const double reach = 4.0 * sigma;
  std::vector<double> acc(static_cast<std::size_t>(size.width) * size.height * 3, 0.0);
  for (std::size_t k = 0; k < pose.points.size(); ++k) {
    const auto& p = pose.points[k];
    if (!p.labeled()) continue;
    const std::size_t channel = schema.in_face(k) ? 0 : schema.in_spine(k) ? 1 : 2;
    const int x0 = std::max(0, static_cast<int>(std::floor(p.x - reach)));
    const int x1 = std::min(size.width - 1, static_cast<int>(std::ceil(p.x + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.y - reach)));
    const int y1 = std::min(size.height - 1, static_cast<int>(std::ceil(p.y + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - p.x;
        const double dy = y + 0.5 - p.y;
        acc[(static_cast<std::size_t>(y) * size.width + x) * 3 + channel] +=
            std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      }
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    map.image.pixels[i] = static_cast<std::uint8_t>(std::lround(std::min(1.0, acc[i]) * 255.0));
  }
  return map;
}

/// Recover keypoint positions from keypoint-coloured pixels (skeleton maps,
/// mock images, overlays). Absent colours yield nullopt.
inline std::vector<std::optional<Centroid>> locate_keypoint_discs(const Image& img, std::size_t count) {
  std::vector<Centroid> sums(count);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Rgb c = img.at(x, y);
      if (!is_keypoint_color(c)) continue;
      const std::size_t k = c.b >> 1;
      if (k >= count || keypoint_color(k) != c) continue;
      sums[k].x += x + 0.5;
      sums[k].y += y + 0.5;
      ++sums[k].count;
    }
  }
  std::vector<std::optional<Centroid>> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    if (!sums[k].count) continue;
    const double n = static_cast<double>(sums[k].count);
    out[k] = Centroid{sums[k].x / n, sums[k].y / n, sums[k].count};
  }
  return out;
}

}  // namespace apcap
