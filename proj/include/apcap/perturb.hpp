#pragma once

// Pose-adjustment perturbations: face move, limb shift, joint flex and back
// rotate. Every op is a pure function of (pose, config, rng stream); keypoints
// outside an op's target group and unlabeled keypoints are copied bit-for-bit.

#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/pose.hpp"
#include "apcap/random.hpp"

namespace apcap {

struct PerturbConfig {
  /// Face offset radius in px. Unset means 0.05 * bbox diagonal of the input pose.
  std::optional<double> face_move_max;
  double joint_flex_max_deg = 15.0;
  double back_rotate_max_deg = 10.0;
  /// Chains closer than this fraction of the bbox diagonal move as a unit.
  double close_limb_threshold = 0.05;
  std::uint64_t rng_seed = 0;

  static constexpr double kDefaultFaceMoveFraction = 0.05;

  void validate() const {
    if ((face_move_max && *face_move_max < 0.0) || joint_flex_max_deg < 0.0 || back_rotate_max_deg < 0.0) {
      throw Error(ErrorKind::InvalidConfig, "perturbation magnitudes must be non-negative");
    }
    if (!(close_limb_threshold > 0.0 && close_limb_threshold < 1.0)) {
      throw Error(ErrorKind::InvalidConfig, "close_limb_threshold must lie in (0, 1)");
    }
  }

  double face_move_limit(const Pose& pose) const {
    return face_move_max ? *face_move_max : kDefaultFaceMoveFraction * pose.bbox.diagonal();
  }
};

/// Declaration order is the fixed composition order.
enum class PerturbOp { FaceMove, LimbShift, JointFlex, BackRotate };

inline std::string_view to_string(PerturbOp op) {
  switch (op) {
    case PerturbOp::FaceMove: return "F_m";
    case PerturbOp::LimbShift: return "L_s";
    case PerturbOp::JointFlex: return "J_f";
    case PerturbOp::BackRotate: return "B_r";
  }
  return "?";
}

inline PerturbOp parse_perturb_op(std::string_view text) {
  if (text == "F_m" || text == "face_move") return PerturbOp::FaceMove;
  if (text == "L_s" || text == "limb_shift") return PerturbOp::LimbShift;
  if (text == "J_f" || text == "joint_flex") return PerturbOp::JointFlex;
  if (text == "B_r" || text == "back_rotate") return PerturbOp::BackRotate;
  throw Error(ErrorKind::InvalidConfig, "unknown perturbation '" + std::string(text) + "'");
}

using PerturbOpSet = std::set<PerturbOp>;

inline const PerturbOpSet& all_perturb_ops() {
  static const PerturbOpSet kAll{PerturbOp::FaceMove, PerturbOp::LimbShift, PerturbOp::JointFlex,
                                 PerturbOp::BackRotate};
  return kAll;
}

namespace detail {

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

inline void rotate_about(Keypoint& p, const Keypoint& center, double c, double s) {
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  p.x = center.x + c * dx - s * dy;
  p.y = center.y + s * dx + c * dy;
}

/// Half the nearest-labeled-neighbour distance per keypoint; 0 where undefined.
inline std::vector<double> half_neighbor_caps(const Pose& pose) {
  std::vector<double> caps(pose.points.size(), 0.0);
  for (std::size_t k = 0; k < caps.size(); ++k) {
    if (auto d = nearest_neighbor_distance(pose, k)) caps[k] = 0.5 * *d;
  }
  return caps;
}

inline void collect_subtree(const KeypointSchema& schema, int root, std::vector<int>& out) {
  out.push_back(root);
  for (int c : schema.children(static_cast<std::size_t>(root))) collect_subtree(schema, c, out);
}

}  // namespace detail

/// Translate every labeled face keypoint by `offset`.
inline Pose apply_face_offset(const Pose& pose, Offset offset) {
  Pose out = pose;
  for (int k : pose.schema->face_group()) {
    auto& p = out.points[static_cast<std::size_t>(k)];
    if (!p.labeled()) continue;
    p.x += offset.dx;
    p.y += offset.dy;
  }
  return out;
}

inline Pose face_move(const Pose& pose, const PerturbConfig& cfg, Rng& rng) {
  if (pose.schema->face_group().empty()) {
    throw Error(ErrorKind::NoFaceGroup, "schema '" + pose.schema->family_id() + "' has no face group");
  }
  return apply_face_offset(pose, uniform_in_disc(rng, cfg.face_move_limit(pose)));
}

/// Close chains shift as a unit with radius 0.5 * min cap over the chain;
/// widely spaced chains get an independent offset per keypoint bounded by
/// half its nearest-neighbour distance.
inline Pose limb_shift(const Pose& pose, const PerturbConfig& cfg, Rng& rng) {
  const auto& schema = *pose.schema;
  const auto& chains = schema.limb_chains();
  const auto caps = detail::half_neighbor_caps(pose);
  const double close = cfg.close_limb_threshold * pose.bbox.diagonal();

  Pose out = pose;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    std::vector<int> members;
    for (int k : chains[c]) {
      if (pose.points[static_cast<std::size_t>(k)].labeled()) members.push_back(k);
    }
    if (members.empty()) continue;

    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < chains.size(); ++o) {
      if (o == c) continue;
      for (int j : chains[o]) {
        const auto& q = pose.points[static_cast<std::size_t>(j)];
        if (!q.labeled()) continue;
        for (int k : members) gap = std::min(gap, distance(pose.points[static_cast<std::size_t>(k)], q));
      }
    }

    if (gap < close) {
      double radius = std::numeric_limits<double>::infinity();
      for (int k : members) radius = std::min(radius, caps[static_cast<std::size_t>(k)]);
      const Offset shared = uniform_in_disc(rng, radius);
      for (int k : members) {
        out.points[static_cast<std::size_t>(k)].x += shared.dx;
        out.points[static_cast<std::size_t>(k)].y += shared.dy;
      }
    } else {
      for (int k : members) {
        const Offset o = uniform_in_disc(rng, caps[static_cast<std::size_t>(k)]);
        out.points[static_cast<std::size_t>(k)].x += o.dx;
        out.points[static_cast<std::size_t>(k)].y += o.dy;
      }
    }
  }
  return out;
}

/// Rigidly rotate the labeled keypoints of `child`'s subtree about its parent.
inline Pose rotate_subtree(const Pose& pose, int child, double angle_rad) {
  const auto& schema = *pose.schema;
  const int parent = schema.parent(static_cast<std::size_t>(child));
  if (parent < 0) throw Error(ErrorKind::InvalidArgument, "keypoint has no parent limb");
  Pose out = pose;
  const Keypoint center = pose.points[static_cast<std::size_t>(parent)];
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  std::vector<int> subtree;
  detail::collect_subtree(schema, child, subtree);
  for (int k : subtree) {
    auto& p = out.points[static_cast<std::size_t>(k)];
    if (p.labeled()) detail::rotate_about(p, center, c, s);
  }
  return out;
}

/// Rotate each limb-chain joint about its parent, root-first, so descendants
/// follow their ancestors. An angle that would move any keypoint further
/// than half its nearest-neighbour distance (measured on the input) is halved
/// until it fits, keeping every bone length exact.
inline Pose joint_flex(const Pose& pose, const PerturbConfig& cfg, Rng& rng) {
  const auto& schema = *pose.schema;
  const auto caps = detail::half_neighbor_caps(pose);
  const double max_rad = detail::deg_to_rad(cfg.joint_flex_max_deg);

  Pose out = pose;
  for (const auto& limb : schema.limbs_root_first()) {
    const auto child = static_cast<std::size_t>(limb.child);
    if (schema.in_face(child) || schema.in_spine(child)) continue;
    if (!pose.points[static_cast<std::size_t>(limb.parent)].labeled() || !pose.points[child].labeled()) continue;

    double angle = uniform(rng, -max_rad, max_rad);
    std::vector<int> subtree;
    detail::collect_subtree(schema, limb.child, subtree);
    for (int attempt = 0; attempt < 64 && angle != 0.0; ++attempt) {
      Pose candidate = rotate_subtree(out, limb.child, angle);
      bool within = true;
      for (int k : subtree) {
        const auto ku = static_cast<std::size_t>(k);
        if (!pose.points[ku].labeled()) continue;
        if (distance(candidate.points[ku], pose.points[ku]) > caps[ku]) {
          within = false;
          break;
        }
      }
      if (within) {
        out = std::move(candidate);
        break;
      }
      angle *= 0.5;
    }
  }
  return out;
}

/// Rotate the labeled spine keypoints after the root about the root.
inline Pose rotate_spine(const Pose& pose, double angle_rad) {
  const auto& spine = pose.schema->spine_group();
  if (spine.size() < 2) throw Error(ErrorKind::NoSpineGroup, "schema '" + pose.schema->family_id() + "' has no spine chain");
  const Keypoint root = pose.points[static_cast<std::size_t>(spine.front())];
  if (!root.labeled()) return pose;
  Pose out = pose;
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  for (std::size_t i = 1; i < spine.size(); ++i) {
    auto& p = out.points[static_cast<std::size_t>(spine[i])];
    if (p.labeled()) detail::rotate_about(p, root, c, s);
  }
  return out;
}

inline Pose back_rotate(const Pose& pose, const PerturbConfig& cfg, Rng& rng) {
  if (pose.schema->spine_group().size() < 2) {
    throw Error(ErrorKind::NoSpineGroup, "schema '" + pose.schema->family_id() + "' has no spine chain");
  }
  const double max_rad = detail::deg_to_rad(cfg.back_rotate_max_deg);
  return rotate_spine(pose, uniform(rng, -max_rad, max_rad));
}

inline Pose apply_perturb_op(PerturbOp op, const Pose& pose, const PerturbConfig& cfg, Rng& rng) {
  switch (op) {
    case PerturbOp::FaceMove: return face_move(pose, cfg, rng);
    case PerturbOp::LimbShift: return limb_shift(pose, cfg, rng);
    case PerturbOp::JointFlex: return joint_flex(pose, cfg, rng);
    case PerturbOp::BackRotate: return back_rotate(pose, cfg, rng);
  }
  return pose;
}

/// Per-sample record of what `perturb` did.
struct PerturbAudit {
  struct Step {
    PerturbOp op;
    bool applied = false;
    int attempts = 0;
  };
  std::vector<Step> steps;  // composition order

  std::vector<PerturbOp> applied() const { return select(true); }
  std::vector<PerturbOp> skipped() const { return select(false); }

 private:
  std::vector<PerturbOp> select(bool applied_flag) const {
    std::vector<PerturbOp> out;
    for (const auto& s : steps) {
      if (s.applied == applied_flag) out.push_back(s.op);
    }
    return out;
  }
};

struct PerturbResult {
  Pose pose;
  PerturbAudit audit;
};

inline constexpr int kPerturbAttempts = 8;

/// Apply the requested ops in the fixed order F_m -> L_s -> J_f -> B_r. A draw
/// whose result fails validate_pose is re-drawn; after kPerturbAttempts
/// failures the op is skipped for this sample.
inline PerturbResult perturb(const Pose& pose, const PerturbConfig& cfg, const PerturbOpSet& ops, Rng& rng,
                             ImageSize image) {
  cfg.validate();
  PerturbResult result{pose, {}};
  for (PerturbOp op : ops) {
    bool done = false;
    int attempt = 0;
    while (!done && attempt < kPerturbAttempts) {
      ++attempt;
      Pose candidate = apply_perturb_op(op, result.pose, cfg, rng);
      if (validate_pose(candidate, image).empty()) {
        result.pose = std::move(candidate);
        done = true;
      }
    }
    result.audit.steps.push_back({op, done, attempt});
  }
  return result;
}

}  // namespace apcap
