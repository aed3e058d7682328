#pragma once

// Pipeline configuration file (YAML). Every key is optional; see
// configs/example.yaml for the full set. Relative paths in a file resolve
// against the file's directory; paths given as overrides resolve against the
// working directory. Unknown keys are rejected with their location.

#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "apcap/dataset/cross_domain.hpp"
#include "apcap/dataset/manifest.hpp"
#include "apcap/error.hpp"
#include "apcap/genbackend/types.hpp"
#include "apcap/perturb.hpp"
#include "apcap/pose_map.hpp"
#include "apcap/prompt.hpp"
#include "apcap/schema_io.hpp"
#include "apcap/screening.hpp"

namespace apcap {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::string schema = "AP10K17";
  std::uint64_t seed = 0;
  fs::path input;       // COCO file of real samples
  fs::path image_root;  // where real image_refs resolve; optional
  fs::path output_dir = "out";
  ImageSize resolution{256, 256};

  PoseMapStyle pose_map_style = PoseMapStyle::SkeletonLines;
  PoseMapOptions pose_map;
  /// Whether caption-enhanced requests also carry the pose map.
  bool ce_pose_map = true;

  MixRatio ratio;
  PerturbConfig perturb;
  PerturbOpSet perturb_ops = all_perturb_ops();
  PromptSpec prompt = default_prompt();
  gen::BackendDescriptor backend;
  FilterConfig filter;
  /// "mock" re-detects joints from mock images; "none" accepts unscreened.
  std::string redetector = "auto";

  CrossDomainSpec cross_domain;
  std::size_t batch_size = 12;

  static PromptSpec default_prompt() {
    PromptSpec p;
    p.category = "animal";
    p.descriptor_pools = {
        {"appearance", {"with thick fur", "with a glossy coat", "with a spotted coat", "with a striped pattern", "muddy"}},
        {"setting", {"in a grassland", "in a snowy forest", "on a rocky hillside", "near a lake", "in a zoo enclosure"}},
        {"lighting", {"at golden hour", "under overcast sky", "in soft morning light", "at dusk", "in harsh noon sun"}},
    };
    p.question_variants = {
        "Describe the animal in this image in one sentence.",
        "What does the animal look like and where is it?",
        "Give a short caption covering the animal's appearance and surroundings.",
    };
    return p;
  }

  /// Semantic checks plus existence of every referenced file.
  void validate() const {
    if (resolution.width <= 0 || resolution.height <= 0) throw Error(ErrorKind::InvalidConfig, "resolution must be positive");
    perturb.validate();
    backend.validate();
    filter.validate();
    cross_domain.validate();
    PromptSpec probe = prompt;
    if (probe.category.empty()) probe.category = "animal";
    try {
      validate_prompt_spec(probe);
    } catch (const Error& e) {
      throw Error(ErrorKind::InvalidConfig, std::string("prompt: ") + e.what());
    }
    if (redetector != "auto" && redetector != "mock" && redetector != "none") {
      throw Error(ErrorKind::InvalidConfig, "redetector must be auto, mock or none");
    }
    if (!input.empty() && !fs::is_regular_file(input)) throw Error(ErrorKind::InvalidConfig, "input file " + input.string() + " does not exist");
    if (!image_root.empty() && !fs::is_directory(image_root)) {
      throw Error(ErrorKind::InvalidConfig, "image_root " + image_root.string() + " is not a directory");
    }
    resolve_schema(schema);
  }
};

namespace config_detail {

inline std::string where(const YAML::Node& n) { return detail::yaml_where(n); }

inline void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& prefix) {
  if (!map.IsMap()) throw Error(ErrorKind::InvalidConfig, (prefix.empty() ? "config" : prefix) + " must be a mapping" + where(map));
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      const int line = kv.first.Mark().is_null() ? -1 : kv.first.Mark().line + 1;
      throw Error(ErrorKind::InvalidConfig, "unknown key '" + prefix + key + "'" + where(kv.first), line);
    }
  }
}

template <typename T>
T get(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::InvalidConfig, "bad value for '" + key + "'" + where(n));
  }
}

inline fs::path get_path(const YAML::Node& n, const std::string& key, const fs::path& base) {
  fs::path p = get<std::string>(n, key);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

/// Merge the keys present in `root` into `cfg`.
inline void apply(PipelineConfig& cfg, const YAML::Node& root, const fs::path& base) {
  if (!root || root.IsNull()) return;
  check_keys(root, {"schema", "seed", "input", "image_root", "output_dir", "resolution", "pose_map", "ratio", "perturb",
                    "prompt", "backend", "filter", "redetector", "cross_domain"},
             "");
  if (root["schema"]) {
    auto s = get<std::string>(root["schema"], "schema");
    if (!parse_family(s) && fs::path(s).is_relative() && fs::is_regular_file(base / s)) s = (base / s).string();
    cfg.schema = s;
  }
  if (root["seed"]) cfg.seed = get<std::uint64_t>(root["seed"], "seed");
  if (root["input"]) cfg.input = get_path(root["input"], "input", base);
  if (root["image_root"]) cfg.image_root = get_path(root["image_root"], "image_root", base);
  if (root["output_dir"]) cfg.output_dir = get_path(root["output_dir"], "output_dir", base);
  if (const auto r = root["resolution"]) {
    const auto v = get<std::vector<int>>(r, "resolution");
    if (v.size() != 2) throw Error(ErrorKind::InvalidConfig, "resolution must be [width, height]" + where(r));
    cfg.resolution = {v[0], v[1]};
  }
  if (root["ratio"]) cfg.ratio = MixRatio::parse(get<std::string>(root["ratio"], "ratio"));
  if (root["redetector"]) cfg.redetector = get<std::string>(root["redetector"], "redetector");

  if (const auto pm = root["pose_map"]) {
    check_keys(pm, {"style", "line_width", "disc_radius", "heatmap_sigma", "ce_pose_map"}, "pose_map.");
    if (pm["style"]) cfg.pose_map_style = parse_pose_map_style(get<std::string>(pm["style"], "pose_map.style"));
    if (pm["line_width"]) cfg.pose_map.line_width = get<double>(pm["line_width"], "pose_map.line_width");
    if (pm["disc_radius"]) cfg.pose_map.disc_radius = get<double>(pm["disc_radius"], "pose_map.disc_radius");
    if (pm["heatmap_sigma"]) cfg.pose_map.heatmap_sigma = get<double>(pm["heatmap_sigma"], "pose_map.heatmap_sigma");
    if (pm["ce_pose_map"]) cfg.ce_pose_map = get<bool>(pm["ce_pose_map"], "pose_map.ce_pose_map");
  }
  if (const auto p = root["perturb"]) {
    check_keys(p, {"face_move_max", "joint_flex_max_deg", "back_rotate_max_deg", "close_limb_threshold", "ops"}, "perturb.");
    if (p["face_move_max"]) cfg.perturb.face_move_max = get<double>(p["face_move_max"], "perturb.face_move_max");
    if (p["joint_flex_max_deg"]) cfg.perturb.joint_flex_max_deg = get<double>(p["joint_flex_max_deg"], "perturb.joint_flex_max_deg");
    if (p["back_rotate_max_deg"]) cfg.perturb.back_rotate_max_deg = get<double>(p["back_rotate_max_deg"], "perturb.back_rotate_max_deg");
    if (p["close_limb_threshold"]) {
      cfg.perturb.close_limb_threshold = get<double>(p["close_limb_threshold"], "perturb.close_limb_threshold");
    }
    if (p["ops"]) {
      cfg.perturb_ops.clear();
      for (const auto& op : get<std::vector<std::string>>(p["ops"], "perturb.ops")) cfg.perturb_ops.insert(parse_perturb_op(op));
    }
  }
  if (const auto p = root["prompt"]) {
    check_keys(p, {"template", "train_template", "pools", "questions"}, "prompt.");
    if (p["template"]) cfg.prompt.template_text = get<std::string>(p["template"], "prompt.template");
    if (p["train_template"]) cfg.prompt.train_template = get<std::string>(p["train_template"], "prompt.train_template");
    if (p["pools"]) {
      cfg.prompt.descriptor_pools =
          get<std::map<std::string, std::vector<std::string>>>(p["pools"], "prompt.pools");
    }
    if (p["questions"]) cfg.prompt.question_variants = get<std::vector<std::string>>(p["questions"], "prompt.questions");
  }
  if (const auto b = root["backend"]) {
    check_keys(b, {"kind", "endpoint", "max_in_flight", "timeout_ms", "retries", "backoff_base_ms"}, "backend.");
    if (b["kind"]) {
      const auto kind = get<std::string>(b["kind"], "backend.kind");
      if (kind == "mock") {
        cfg.backend.kind = gen::BackendDescriptor::Kind::Mock;
      } else if (kind == "remote") {
        cfg.backend.kind = gen::BackendDescriptor::Kind::Remote;
      } else {
        throw Error(ErrorKind::InvalidConfig, "backend.kind must be mock or remote" + where(b["kind"]));
      }
    }
    if (b["endpoint"]) cfg.backend.endpoint = get<std::string>(b["endpoint"], "backend.endpoint");
    if (b["max_in_flight"]) cfg.backend.max_in_flight = get<int>(b["max_in_flight"], "backend.max_in_flight");
    if (b["timeout_ms"]) cfg.backend.timeout_ms = get<int>(b["timeout_ms"], "backend.timeout_ms");
    if (b["retries"]) cfg.backend.retries = get<int>(b["retries"], "backend.retries");
    if (b["backoff_base_ms"]) cfg.backend.backoff_base_ms = get<int>(b["backoff_base_ms"], "backend.backoff_base_ms");
  }
  if (const auto f = root["filter"]) {
    check_keys(f, {"epsilon", "oks_accept"}, "filter.");
    if (f["epsilon"]) cfg.filter.epsilon = get<double>(f["epsilon"], "filter.epsilon");
    if (f["oks_accept"]) cfg.filter.oks_accept = get<double>(f["oks_accept"], "filter.oks_accept");
  }
  if (const auto c = root["cross_domain"]) {
    check_keys(c, {"source", "target", "source_ratio", "batch_size"}, "cross_domain.");
    if (c["source"]) {
      const auto v = get<std::vector<std::string>>(c["source"], "cross_domain.source");
      cfg.cross_domain.source_categories = {v.begin(), v.end()};
    }
    if (c["target"]) {
      const auto v = get<std::vector<std::string>>(c["target"], "cross_domain.target");
      cfg.cross_domain.target_categories = {v.begin(), v.end()};
    }
    if (c["source_ratio"]) {
      const auto text = get<std::string>(c["source_ratio"], "cross_domain.source_ratio");
      const auto slash = text.find('/');
      try {
        if (slash == std::string::npos) throw std::invalid_argument(text);
        cfg.cross_domain.source_num = std::stoi(text.substr(0, slash));
        cfg.cross_domain.source_den = std::stoi(text.substr(slash + 1));
      } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidConfig, "cross_domain.source_ratio must look like 1/3" + where(c["source_ratio"]));
      }
    }
    if (c["batch_size"]) cfg.batch_size = get<std::size_t>(c["batch_size"], "cross_domain.batch_size");
  }
}

}  // namespace config_detail

/// Apply one "dotted.key=value" override; the value is parsed as YAML.
inline void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::InvalidConfig, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::InvalidConfig, "override '" + key + "': " + e.what());
  }
  YAML::Node root(YAML::NodeType::Map);
  YAML::Node leaf = root;
  std::size_t start = 0;
  std::vector<std::string> parts;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  // Build the nested mapping from the innermost key outwards.
  YAML::Node nested = value;
  for (std::size_t i = parts.size(); i-- > 0;) {
    YAML::Node m(YAML::NodeType::Map);
    m[parts[i]] = nested;
    nested = m;
  }
  config_detail::apply(cfg, nested, fs::path());
}

inline PipelineConfig parse_config(const std::string& text, const fs::path& base = {}) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::ParseError, std::string("config: ") + e.what(), e.mark.is_null() ? -1 : e.mark.line + 1);
  }
  PipelineConfig cfg;
  config_detail::apply(cfg, root, base);
  return cfg;
}

/// Load `path` (or $APCAP_CONFIG when empty; defaults when neither is set),
/// apply overrides in order, then validate.
inline PipelineConfig load_config(fs::path path, const std::vector<std::string>& overrides = {}) {
  if (path.empty()) {
    if (const char* env = std::getenv("APCAP_CONFIG"); env && *env) path = env;
  }
  PipelineConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = parse_config(buf.str(), path.parent_path());
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

/// Cross-domain spec file: the `cross_domain` section on its own
/// (source, target, source_ratio, batch_size).
inline std::pair<CrossDomainSpec, std::size_t> load_cross_domain_spec(const fs::path& path) {
  YAML::Node node;
  try {
    node = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw Error(ErrorKind::Io, "cannot open spec " + path.string());
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what(), e.mark.is_null() ? -1 : e.mark.line + 1);
  }
  YAML::Node wrapped(YAML::NodeType::Map);
  wrapped["cross_domain"] = node;
  PipelineConfig cfg;
  config_detail::apply(cfg, wrapped, path.parent_path());
  cfg.cross_domain.validate();
  return {cfg.cross_domain, cfg.batch_size};
}

}  // namespace apcap
