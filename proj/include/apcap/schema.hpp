#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apcap/error.hpp"

namespace apcap {

struct Limb {
  int parent = 0;
  int child = 0;
  friend bool operator==(const Limb&, const Limb&) = default;
};

struct SymmetryPair {
  int left = 0;
  int right = 0;
  friend bool operator==(const SymmetryPair&, const SymmetryPair&) = default;
};

/// Uniform OKS falloff used when a schema does not list per-keypoint values.
inline constexpr double kDefaultKeypointSigma = 0.08;

/// The declared fields of a skeleton definition. Plain aggregate; use
/// KeypointSchema::make to obtain a validated, immutable schema.
struct SchemaSpec {
  std::string family_id;
  std::vector<std::string> keypoint_names;
  std::vector<Limb> limbs;
  std::vector<SymmetryPair> symmetry_pairs;
  std::vector<int> face_group;
  std::vector<int> spine_group;  // ordered root -> neck
  std::vector<double> per_keypoint_sigma;  // empty => kDefaultKeypointSigma for all

  friend bool operator==(const SchemaSpec&, const SchemaSpec&) = default;
};

/// Validated skeleton schema with derived topology (parents, tree order, limb
/// chains). Immutable after construction and shared by reference between poses.
class KeypointSchema {
 public:
  static std::shared_ptr<const KeypointSchema> make(SchemaSpec spec) {
    if (spec.per_keypoint_sigma.empty()) {
      spec.per_keypoint_sigma.assign(spec.keypoint_names.size(), kDefaultKeypointSigma);
    }
    check(spec);
    return std::shared_ptr<const KeypointSchema>(new KeypointSchema(std::move(spec)));
  }

  const SchemaSpec& spec() const noexcept { return spec_; }
  const std::string& family_id() const noexcept { return spec_.family_id; }
  std::size_t size() const noexcept { return spec_.keypoint_names.size(); }
  const std::vector<std::string>& keypoint_names() const noexcept { return spec_.keypoint_names; }
  const std::vector<Limb>& limbs() const noexcept { return spec_.limbs; }
  const std::vector<SymmetryPair>& symmetry_pairs() const noexcept { return spec_.symmetry_pairs; }
  const std::vector<int>& face_group() const noexcept { return spec_.face_group; }
  const std::vector<int>& spine_group() const noexcept { return spec_.spine_group; }
  double sigma(std::size_t k) const { return spec_.per_keypoint_sigma.at(k); }

  /// Parent keypoint index, or -1 for roots of the limb forest.
  int parent(std::size_t k) const { return parent_.at(k); }
  const std::vector<int>& children(std::size_t k) const { return children_.at(k); }

  /// Limbs ordered so every parent is positioned before its descendants.
  const std::vector<Limb>& limbs_root_first() const noexcept { return ordered_limbs_; }

  /// Connected components of the limb graph restricted to keypoints outside
  /// the face and spine groups, each listed parents-first.
  const std::vector<std::vector<int>>& limb_chains() const noexcept { return chains_; }

  bool in_face(std::size_t k) const { return role_.at(k) == Role::Face; }
  bool in_spine(std::size_t k) const { return role_.at(k) == Role::Spine; }

  /// Image of k under the left/right symmetry involution.
  int mirror(std::size_t k) const { return mirror_.at(k); }

  std::optional<int> index_of(std::string_view name) const {
    const auto& names = spec_.keypoint_names;
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<int>(it - names.begin());
  }

  friend bool operator==(const KeypointSchema& a, const KeypointSchema& b) { return a.spec_ == b.spec_; }

 private:
  enum class Role { Limb, Face, Spine };

  explicit KeypointSchema(SchemaSpec spec) : spec_(std::move(spec)) {
    const std::size_t n = spec_.keypoint_names.size();
    parent_.assign(n, -1);
    children_.assign(n, {});
    role_.assign(n, Role::Limb);
    mirror_.resize(n);
    std::iota(mirror_.begin(), mirror_.end(), 0);
    for (const auto& limb : spec_.limbs) {
      parent_[static_cast<std::size_t>(limb.child)] = limb.parent;
      children_[static_cast<std::size_t>(limb.parent)].push_back(limb.child);
    }
    for (int k : spec_.face_group) role_[static_cast<std::size_t>(k)] = Role::Face;
    for (int k : spec_.spine_group) role_[static_cast<std::size_t>(k)] = Role::Spine;
    for (const auto& p : spec_.symmetry_pairs) {
      mirror_[static_cast<std::size_t>(p.left)] = p.right;
      mirror_[static_cast<std::size_t>(p.right)] = p.left;
    }

    // Depth-first from each root keeps descendants after their ancestors.
    std::vector<int> order;
    for (std::size_t k = 0; k < n; ++k) {
      if (parent_[k] >= 0) continue;
      std::vector<int> stack{static_cast<int>(k)};
      while (!stack.empty()) {
        const int node = stack.back();
        stack.pop_back();
        order.push_back(node);
        const auto& kids = children_[static_cast<std::size_t>(node)];
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
      }
    }
    for (int node : order) {
      if (parent_[static_cast<std::size_t>(node)] >= 0) {
        ordered_limbs_.push_back({parent_[static_cast<std::size_t>(node)], node});
      }
    }

    std::vector<bool> seen(n, false);
    for (int start : order) {
      const auto s = static_cast<std::size_t>(start);
      if (seen[s] || role_[s] != Role::Limb) continue;
      std::vector<int> chain;
      std::vector<int> frontier{start};
      seen[s] = true;
      while (!frontier.empty()) {
        const int node = frontier.front();
        frontier.erase(frontier.begin());
        chain.push_back(node);
        std::vector<int> nbrs = children_[static_cast<std::size_t>(node)];
        if (parent_[static_cast<std::size_t>(node)] >= 0) nbrs.push_back(parent_[static_cast<std::size_t>(node)]);
        for (int m : nbrs) {
          const auto mu = static_cast<std::size_t>(m);
          if (!seen[mu] && role_[mu] == Role::Limb) {
            seen[mu] = true;
            frontier.push_back(m);
          }
        }
      }
      // Re-sort into global tree order so parents precede children.
      std::vector<int> sorted;
      for (int node : order) {
        if (std::find(chain.begin(), chain.end(), node) != chain.end()) sorted.push_back(node);
      }
      chains_.push_back(std::move(sorted));
    }
  }

  static void fail(const std::string& what) { throw Error(ErrorKind::InvalidSchema, what); }

  static void check(const SchemaSpec& s) {
    const int n = static_cast<int>(s.keypoint_names.size());
    if (s.family_id.empty()) fail("family_id is empty");
    if (n == 0) fail("schema has no keypoints");
    for (int i = 0; i < n; ++i) {
      if (s.keypoint_names[static_cast<std::size_t>(i)].empty()) fail("keypoint " + std::to_string(i) + " has an empty name");
      for (int j = 0; j < i; ++j) {
        if (s.keypoint_names[static_cast<std::size_t>(i)] == s.keypoint_names[static_cast<std::size_t>(j)]) {
          fail("duplicate keypoint name '" + s.keypoint_names[static_cast<std::size_t>(i)] + "'");
        }
      }
    }
    auto in_range = [n](int k) { return k >= 0 && k < n; };

    // Limb forest: union-find rejects any undirected cycle; each child has one parent.
    std::vector<int> root(static_cast<std::size_t>(n));
    std::iota(root.begin(), root.end(), 0);
    auto find = [&root](int k) {
      while (root[static_cast<std::size_t>(k)] != k) k = root[static_cast<std::size_t>(k)] = root[static_cast<std::size_t>(root[static_cast<std::size_t>(k)])];
      return k;
    };
    std::vector<bool> has_parent(static_cast<std::size_t>(n), false);
    for (const auto& limb : s.limbs) {
      if (!in_range(limb.parent) || !in_range(limb.child)) fail("limb index out of range");
      if (limb.parent == limb.child) fail("limb connects a keypoint to itself");
      if (has_parent[static_cast<std::size_t>(limb.child)]) {
        fail("keypoint '" + s.keypoint_names[static_cast<std::size_t>(limb.child)] + "' has two parents");
      }
      has_parent[static_cast<std::size_t>(limb.child)] = true;
      const int a = find(limb.parent);
      const int b = find(limb.child);
      if (a == b) fail("limb graph contains a cycle");
      root[static_cast<std::size_t>(a)] = b;
    }

    std::vector<int> used(static_cast<std::size_t>(n), 0);
    for (const auto& p : s.symmetry_pairs) {
      if (!in_range(p.left) || !in_range(p.right)) fail("symmetry index out of range");
      if (p.left == p.right) fail("symmetry pair maps a keypoint to itself");
      if (used[static_cast<std::size_t>(p.left)]++ || used[static_cast<std::size_t>(p.right)]++) {
        fail("symmetry pairs are not disjoint");
      }
    }

    std::vector<int> group(static_cast<std::size_t>(n), 0);
    for (int k : s.face_group) {
      if (!in_range(k)) fail("face_group index out of range");
      if (group[static_cast<std::size_t>(k)]) fail("face_group lists a keypoint twice");
      group[static_cast<std::size_t>(k)] = 1;
    }
    for (int k : s.spine_group) {
      if (!in_range(k)) fail("spine_group index out of range");
      if (group[static_cast<std::size_t>(k)] == 1) fail("face_group and spine_group overlap");
      if (group[static_cast<std::size_t>(k)] == 2) fail("spine_group lists a keypoint twice");
      group[static_cast<std::size_t>(k)] = 2;
    }
    for (std::size_t i = 1; i < s.spine_group.size(); ++i) {
      const int a = s.spine_group[i - 1];
      const int b = s.spine_group[i];
      const bool linked = std::any_of(s.limbs.begin(), s.limbs.end(), [&](const Limb& l) {
        return (l.parent == a && l.child == b) || (l.parent == b && l.child == a);
      });
      if (!linked) fail("spine_group is not a connected chain of limbs");
    }

    if (static_cast<int>(s.per_keypoint_sigma.size()) != n) fail("per_keypoint_sigma length differs from keypoint count");
    for (double sigma : s.per_keypoint_sigma) {
      if (!(sigma > 0.0)) fail("per_keypoint_sigma entries must be positive");
    }
  }

  SchemaSpec spec_;
  std::vector<int> parent_;
  std::vector<std::vector<int>> children_;
  std::vector<Role> role_;
  std::vector<int> mirror_;
  std::vector<Limb> ordered_limbs_;
  std::vector<std::vector<int>> chains_;
};

using SchemaPtr = std::shared_ptr<const KeypointSchema>;

enum class SchemaFamily { AP10K17, AnimalPose17, Birds23 };

namespace detail {

inline SchemaSpec spec_from_names(std::string family, std::vector<std::string> names,
                                  const std::vector<std::pair<std::string, std::string>>& limbs,
                                  const std::vector<std::pair<std::string, std::string>>& symmetry,
                                  const std::vector<std::string>& face,
                                  const std::vector<std::string>& spine) {
  auto idx = [&names](const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    return static_cast<int>(it - names.begin());
  };
  SchemaSpec spec;
  spec.family_id = std::move(family);
  for (const auto& [p, c] : limbs) spec.limbs.push_back({idx(p), idx(c)});
  for (const auto& [l, r] : symmetry) spec.symmetry_pairs.push_back({idx(l), idx(r)});
  for (const auto& f : face) spec.face_group.push_back(idx(f));
  for (const auto& s : spine) spec.spine_group.push_back(idx(s));
  spec.keypoint_names = std::move(names);
  return spec;
}

}  // namespace detail

/// Built-in skeletons. Keypoint order follows the public annotation files
/// (AP-10K, Animal Kingdom); limb forests are rooted at the tail base. See
/// docs/schemas.md for the grouping rationale.
inline SchemaPtr builtin_schema(SchemaFamily family) {
  switch (family) {
    case SchemaFamily::AP10K17:
      return KeypointSchema::make(detail::spec_from_names(
          "AP10K17",
          {"left_eye", "right_eye", "nose", "neck", "root_of_tail", "left_shoulder", "left_elbow",
           "left_front_paw", "right_shoulder", "right_elbow", "right_front_paw", "left_hip", "left_knee",
           "left_back_paw", "right_hip", "right_knee", "right_back_paw"},
          {{"root_of_tail", "neck"}, {"neck", "nose"}, {"nose", "left_eye"}, {"nose", "right_eye"},
           {"neck", "left_shoulder"}, {"left_shoulder", "left_elbow"}, {"left_elbow", "left_front_paw"},
           {"neck", "right_shoulder"}, {"right_shoulder", "right_elbow"}, {"right_elbow", "right_front_paw"},
           {"root_of_tail", "left_hip"}, {"left_hip", "left_knee"}, {"left_knee", "left_back_paw"},
           {"root_of_tail", "right_hip"}, {"right_hip", "right_knee"}, {"right_knee", "right_back_paw"}},
          {{"left_eye", "right_eye"}, {"left_shoulder", "right_shoulder"}, {"left_elbow", "right_elbow"},
           {"left_front_paw", "right_front_paw"}, {"left_hip", "right_hip"}, {"left_knee", "right_knee"},
           {"left_back_paw", "right_back_paw"}},
          {"left_eye", "right_eye", "nose"}, {"root_of_tail", "neck"}));
    case SchemaFamily::AnimalPose17:
      return KeypointSchema::make(detail::spec_from_names(
          "AnimalPose17",
          {"left_eye", "right_eye", "nose", "withers", "tail_base", "left_front_elbow", "right_front_elbow",
           "left_back_elbow", "right_back_elbow", "left_front_knee", "right_front_knee", "left_back_knee",
           "right_back_knee", "left_front_paw", "right_front_paw", "left_back_paw", "right_back_paw"},
          {{"tail_base", "withers"}, {"withers", "nose"}, {"nose", "left_eye"}, {"nose", "right_eye"},
           {"withers", "left_front_elbow"}, {"left_front_elbow", "left_front_knee"},
           {"left_front_knee", "left_front_paw"}, {"withers", "right_front_elbow"},
           {"right_front_elbow", "right_front_knee"}, {"right_front_knee", "right_front_paw"},
           {"tail_base", "left_back_elbow"}, {"left_back_elbow", "left_back_knee"},
           {"left_back_knee", "left_back_paw"}, {"tail_base", "right_back_elbow"},
           {"right_back_elbow", "right_back_knee"}, {"right_back_knee", "right_back_paw"}},
          {{"left_eye", "right_eye"}, {"left_front_elbow", "right_front_elbow"},
           {"left_back_elbow", "right_back_elbow"}, {"left_front_knee", "right_front_knee"},
           {"left_back_knee", "right_back_knee"}, {"left_front_paw", "right_front_paw"},
           {"left_back_paw", "right_back_paw"}},
          {"left_eye", "right_eye", "nose"}, {"tail_base", "withers"}));
    case SchemaFamily::Birds23:
      return KeypointSchema::make(detail::spec_from_names(
          "Birds23",
          {"head_mid_top", "eye_left", "eye_right", "mouth_front_top", "mouth_back_left", "mouth_back_right",
           "mouth_front_bottom", "shoulder_left", "shoulder_right", "elbow_left", "elbow_right", "wrist_left",
           "wrist_right", "torso_mid_back", "hip_left", "hip_right", "knee_left", "knee_right", "ankle_left",
           "ankle_right", "tail_top_back", "tail_mid_back", "tail_end_back"},
          {{"tail_top_back", "torso_mid_back"}, {"torso_mid_back", "head_mid_top"},
           {"head_mid_top", "eye_left"}, {"head_mid_top", "eye_right"}, {"head_mid_top", "mouth_front_top"},
           {"mouth_front_top", "mouth_back_left"}, {"mouth_front_top", "mouth_back_right"},
           {"mouth_front_top", "mouth_front_bottom"}, {"torso_mid_back", "shoulder_left"},
           {"shoulder_left", "elbow_left"}, {"elbow_left", "wrist_left"}, {"torso_mid_back", "shoulder_right"},
           {"shoulder_right", "elbow_right"}, {"elbow_right", "wrist_right"}, {"torso_mid_back", "hip_left"},
           {"hip_left", "knee_left"}, {"knee_left", "ankle_left"}, {"torso_mid_back", "hip_right"},
           {"hip_right", "knee_right"}, {"knee_right", "ankle_right"}, {"tail_top_back", "tail_mid_back"},
           {"tail_mid_back", "tail_end_back"}},
          {{"eye_left", "eye_right"}, {"mouth_back_left", "mouth_back_right"},
           {"shoulder_left", "shoulder_right"}, {"elbow_left", "elbow_right"}, {"wrist_left", "wrist_right"},
           {"hip_left", "hip_right"}, {"knee_left", "knee_right"}, {"ankle_left", "ankle_right"}},
          {"head_mid_top", "eye_left", "eye_right", "mouth_front_top", "mouth_back_left", "mouth_back_right",
           "mouth_front_bottom"},
          {"tail_top_back", "torso_mid_back"}));
  }
  throw Error(ErrorKind::InvalidArgument, "unknown schema family");
}

inline std::optional<SchemaFamily> parse_family(std::string_view id) {
  if (id == "AP10K17") return SchemaFamily::AP10K17;
  if (id == "AnimalPose17") return SchemaFamily::AnimalPose17;
  if (id == "Birds23") return SchemaFamily::Birds23;
  return std::nullopt;
}

}  // namespace apcap
