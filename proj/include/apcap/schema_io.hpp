#pragma once

// Schema registry files. Format (YAML):
//
//   family_id: AP10K17
//   keypoints: [left_eye, right_eye, ...]
//   limbs: [[root_of_tail, neck], ...]          # parent, child (names or indices)
//   symmetry_pairs: [[left_eye, right_eye], ...]
//   face_group: [left_eye, right_eye, nose]
//   spine_group: [root_of_tail, neck]           # root first
//   sigma: 0.08                                 # or `sigmas: [...]`, one per keypoint
//
// Unknown keys are rejected.

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "apcap/schema.hpp"

namespace apcap {

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string yaml_where(const YAML::Node& node) {
  const auto mark = node.Mark();
  if (mark.is_null()) return "";
  return " (line " + std::to_string(mark.line + 1) + ", column " + std::to_string(mark.column + 1) + ")";
}

inline std::int64_t yaml_line(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.is_null() ? -1 : mark.line + 1;
}

inline int schema_index(const YAML::Node& node, const std::vector<std::string>& names) {
  const auto text = node.as<std::string>();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == text) return static_cast<int>(i);
  }
  try {
    std::size_t used = 0;
    const int k = std::stoi(text, &used);
    if (used == text.size()) return k;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::InvalidSchema, "unknown keypoint '" + text + "'" + yaml_where(node), yaml_line(node));
}

}  // namespace detail

inline SchemaPtr parse_schema_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::ParseError, e.what(), e.mark.is_null() ? -1 : e.mark.line + 1);
  }
  if (!root.IsMap()) throw Error(ErrorKind::InvalidSchema, "schema file must be a mapping");

  static const std::set<std::string> kKeys{"family_id", "keypoints", "limbs", "symmetry_pairs",
                                           "face_group", "spine_group", "sigma", "sigmas"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!kKeys.count(key)) throw Error(ErrorKind::InvalidSchema, "unknown key '" + key + "'" + detail::yaml_where(kv.first),
                                     detail::yaml_line(kv.first));
  }
  if (!root["family_id"] || !root["keypoints"]) {
    throw Error(ErrorKind::InvalidSchema, "schema requires family_id and keypoints");
  }

  try {
    SchemaSpec spec;
    spec.family_id = root["family_id"].as<std::string>();
    spec.keypoint_names = root["keypoints"].as<std::vector<std::string>>();
    const auto& names = spec.keypoint_names;
    auto pairs = [&](const char* key, auto&& emit) {
      if (!root[key]) return;
      for (const auto& item : root[key]) {
        if (!item.IsSequence() || item.size() != 2) {
          throw Error(ErrorKind::InvalidSchema, std::string(key) + " entries must be pairs" + detail::yaml_where(item),
                                  detail::yaml_line(item));
        }
        emit(detail::schema_index(item[0], names), detail::schema_index(item[1], names));
      }
    };
    pairs("limbs", [&](int a, int b) { spec.limbs.push_back({a, b}); });
    pairs("symmetry_pairs", [&](int a, int b) { spec.symmetry_pairs.push_back({a, b}); });
    auto group = [&](const char* key, std::vector<int>& out) {
      if (!root[key]) return;
      for (const auto& item : root[key]) out.push_back(detail::schema_index(item, names));
    };
    group("face_group", spec.face_group);
    group("spine_group", spec.spine_group);
    if (root["sigma"] && root["sigmas"]) throw Error(ErrorKind::InvalidSchema, "give either sigma or sigmas, not both");
    if (root["sigma"]) spec.per_keypoint_sigma.assign(names.size(), root["sigma"].as<double>());
    if (root["sigmas"]) spec.per_keypoint_sigma = root["sigmas"].as<std::vector<double>>();
    return KeypointSchema::make(std::move(spec));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::InvalidSchema, e.what(), e.mark.is_null() ? -1 : e.mark.line + 1);
  }
}

inline std::string schema_to_yaml(const KeypointSchema& schema) {
  const auto& s = schema.spec();
  const auto& names = s.keypoint_names;
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "family_id" << YAML::Value << s.family_id;
  out << YAML::Key << "keypoints" << YAML::Value << YAML::BeginSeq;
  for (const auto& n : names) out << n;
  out << YAML::EndSeq;
  auto pair_list = [&](const char* key, const auto& items, auto&& first, auto&& second) {
    out << YAML::Key << key << YAML::Value << YAML::BeginSeq;
    for (const auto& item : items) {
      out << YAML::Flow << YAML::BeginSeq << names[static_cast<std::size_t>(first(item))]
          << names[static_cast<std::size_t>(second(item))] << YAML::EndSeq;
    }
    out << YAML::EndSeq;
  };
  pair_list("limbs", s.limbs, [](const Limb& l) { return l.parent; }, [](const Limb& l) { return l.child; });
  pair_list("symmetry_pairs", s.symmetry_pairs, [](const SymmetryPair& p) { return p.left; },
            [](const SymmetryPair& p) { return p.right; });
  auto group = [&](const char* key, const std::vector<int>& items) {
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (int k : items) out << names[static_cast<std::size_t>(k)];
    out << YAML::EndSeq;
  };
  group("face_group", s.face_group);
  group("spine_group", s.spine_group);
  const auto& sig = s.per_keypoint_sigma;
  if (std::all_of(sig.begin(), sig.end(), [&](double v) { return v == sig.front(); })) {
    out << YAML::Key << "sigma" << YAML::Value << detail::shortest(sig.front());
  } else {
    out << YAML::Key << "sigmas" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double v : sig) out << detail::shortest(v);
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

inline SchemaPtr load_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open schema file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema_yaml(buf.str());
}

/// Resolve a --schema argument: a built-in family id, an existing file path,
/// or `<id>.yaml` inside a directory listed in APCAP_SCHEMA_PATH (colon-separated).
inline SchemaPtr resolve_schema(const std::string& selector) {
  if (auto family = parse_family(selector)) return builtin_schema(*family);
  if (std::filesystem::is_regular_file(selector)) return load_schema_file(selector);
  if (const char* env = std::getenv("APCAP_SCHEMA_PATH")) {
    std::stringstream dirs(env);
    std::string dir;
    while (std::getline(dirs, dir, ':')) {
      const auto candidate = std::filesystem::path(dir) / (selector + ".yaml");
      if (std::filesystem::is_regular_file(candidate)) return load_schema_file(candidate);
    }
  }
  throw Error(ErrorKind::InvalidArgument, "no schema named '" + selector + "'");
}

}  // namespace apcap
