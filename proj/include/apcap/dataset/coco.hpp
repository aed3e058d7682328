#pragma once

// COCO keypoint JSON. Layout follows the 2017 keypoint files: images,
// annotations (flat [x, y, v] * N keypoints, bbox [x, y, w, h]) and categories
// (keypoint names, 1-based skeleton). Generation metadata rides in an
// "apcap" object on each annotation:
//   {"provenance": "real"|"MF"|"PA"|"CE", "prompt"?, "seed"?, "group"?}

#include "json.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "apcap/dataset/manifest.hpp"
#include "apcap/error.hpp"
#include "apcap/sample.hpp"

namespace apcap {

using Json = nlohmann::ordered_json;

namespace coco_detail {

inline int line_of(const std::string& text, std::size_t byte) {
  const auto end = text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size()));
  return 1 + static_cast<int>(std::count(text.begin(), end, '\n'));
}

[[noreturn]] inline void fail(const std::string& where, const std::string& reason) {
  throw Error(ErrorKind::ParseError, where + ": " + reason);
}

inline const Json& member(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing '") + key + "'");
  return *it;
}

inline const Json& array_member(const Json& obj, const char* key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_array()) fail(where + "/" + key, "expected an array");
  return v;
}

inline std::int64_t id_member(const Json& obj, const char* key, const std::string& where) {
  const auto& v = member(obj, key, where);
  if (!v.is_number_integer()) fail(where + "/" + key, "expected an integer id");
  return v.get<std::int64_t>();
}

inline double number(const Json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

}  // namespace coco_detail

inline Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const int line = coco_detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorKind::ParseError, origin + ":" + std::to_string(line) + ": " + e.what(), line);
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

/// Parsed COCO file: samples in annotation order plus the id tables needed to
/// resolve detection results against it.
struct CocoDocument {
  std::vector<AnnotatedSample> samples;
  std::map<std::int64_t, std::string> image_refs;   // image id -> file_name
  std::map<std::int64_t, std::string> categories;  // category id -> name
  std::string subset_id;
  Split split = Split::Train;
  std::uint64_t seed = 0;

  std::optional<std::int64_t> image_id(const std::string& ref) const {
    for (const auto& [id, r] : image_refs) {
      if (r == ref) return id;
    }
    return std::nullopt;
  }
  std::optional<std::int64_t> category_id(const std::string& name) const {
    for (const auto& [id, n] : categories) {
      if (n == name) return id;
    }
    return std::nullopt;
  }
};

/// Flat [x, y, v] * N array into keypoints; SchemaMismatch on wrong length.
inline std::vector<Keypoint> parse_keypoint_triples(const Json& arr, const KeypointSchema& schema, const std::string& where) {
  if (!arr.is_array()) coco_detail::fail(where, "keypoints must be an array");
  if (arr.size() != 3 * schema.size()) {
    throw Error(ErrorKind::SchemaMismatch, where + ": expected " + std::to_string(3 * schema.size()) + " values (" +
                                               std::to_string(schema.size()) + " keypoints), got " +
                                               std::to_string(arr.size()));
  }
  std::vector<Keypoint> pts(schema.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    pts[k].x = coco_detail::number(arr[3 * k], where);
    pts[k].y = coco_detail::number(arr[3 * k + 1], where);
    const double v = coco_detail::number(arr[3 * k + 2], where);
    if (v != 0.0 && v != 1.0 && v != 2.0) coco_detail::fail(where, "visibility must be 0, 1 or 2");
    pts[k].v = static_cast<int>(v);
  }
  return pts;
}

inline Json keypoint_triples(const std::vector<Keypoint>& pts) {
  Json arr = Json::array();
  for (const auto& p : pts) {
    arr.push_back(p.x);
    arr.push_back(p.y);
    arr.push_back(p.v);
  }
  return arr;
}

/// Bounding box spanned by the labeled keypoints (zero box when none).
inline BBox keypoint_extent(const std::vector<Keypoint>& pts) {
  bool any = false;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  for (const auto& p : pts) {
    if (!p.labeled()) continue;
    x0 = any ? std::min(x0, p.x) : p.x;
    y0 = any ? std::min(y0, p.y) : p.y;
    x1 = any ? std::max(x1, p.x) : p.x;
    y1 = any ? std::max(y1, p.y) : p.y;
    any = true;
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

inline CocoDocument parse_coco(const std::string& text, const SchemaPtr& schema, const std::string& origin = "<coco>") {
  using namespace coco_detail;
  const Json root = parse_json_text(text, origin);
  if (!root.is_object()) fail(origin, "top level must be an object");
  CocoDocument doc;

  if (const auto info = root.find("info"); info != root.end() && info->is_object()) {
    doc.subset_id = info->value("description", "");
    if (const auto ext = info->find("apcap"); ext != info->end() && ext->is_object()) {
      if (ext->contains("split")) doc.split = parse_split(ext->at("split").get<std::string>());
      if (ext->contains("seed")) doc.seed = ext->at("seed").get<std::uint64_t>();
    }
  }

  std::map<std::int64_t, ImageSize> sizes;
  const auto& images = array_member(root, "images", origin);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = origin + ": /images/" + std::to_string(i);
    const auto id = id_member(images[i], "id", where);
    const auto& name = member(images[i], "file_name", where);
    if (!name.is_string()) fail(where + "/file_name", "expected a string");
    if (!doc.image_refs.emplace(id, name.get<std::string>()).second) fail(where, "duplicate image id");
    ImageSize size;
    if (images[i].contains("width")) size.width = static_cast<int>(number(images[i]["width"], where + "/width"));
    if (images[i].contains("height")) size.height = static_cast<int>(number(images[i]["height"], where + "/height"));
    sizes[id] = size;
  }

  const auto& cats = array_member(root, "categories", origin);
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = origin + ": /categories/" + std::to_string(i);
    const auto id = id_member(cats[i], "id", where);
    const auto& name = member(cats[i], "name", where);
    if (!name.is_string()) fail(where + "/name", "expected a string");
    if (const auto kp = cats[i].find("keypoints"); kp != cats[i].end() && kp->is_array() && kp->size() != schema->size()) {
      throw Error(ErrorKind::SchemaMismatch, where + ": category lists " + std::to_string(kp->size()) + " keypoints, schema has " +
                                                 std::to_string(schema->size()));
    }
    if (!doc.categories.emplace(id, name.get<std::string>()).second) fail(where, "duplicate category id");
  }

  const auto& anns = array_member(root, "annotations", origin);
  doc.samples.reserve(anns.size());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = origin + ": /annotations/" + std::to_string(i);
    const Json& a = anns[i];
    const auto image_id = id_member(a, "image_id", where);
    const auto cat_id = id_member(a, "category_id", where);
    const auto img = doc.image_refs.find(image_id);
    if (img == doc.image_refs.end()) fail(where, "unknown image_id " + std::to_string(image_id));
    const auto cat = doc.categories.find(cat_id);
    if (cat == doc.categories.end()) fail(where, "unknown category_id " + std::to_string(cat_id));

    auto pts = parse_keypoint_triples(member(a, "keypoints", where), *schema, where + "/keypoints");
    BBox box;
    if (const auto b = a.find("bbox"); b != a.end()) {
      if (!b->is_array() || b->size() != 4) fail(where + "/bbox", "expected [x, y, w, h]");
      box = {number((*b)[0], where), number((*b)[1], where), number((*b)[2], where), number((*b)[3], where)};
    } else {
      box = keypoint_extent(pts);
    }

    AnnotatedSample s;
    s.image_ref = img->second;
    s.pose = Pose::make(schema, std::move(pts), box);
    s.category = cat->second;
    s.image_size = sizes[image_id];
    if (const auto ext = a.find("apcap"); ext != a.end()) {
      if (!ext->is_object()) fail(where + "/apcap", "expected an object");
      try {
        if (ext->contains("provenance")) s.provenance = parse_provenance(ext->at("provenance").get<std::string>());
        if (ext->contains("prompt")) s.prompt_used = ext->at("prompt").get<std::string>();
        if (ext->contains("seed")) s.seed = ext->at("seed").get<std::uint64_t>();
        if (ext->contains("group")) s.group = ext->at("group").get<int>();
      } catch (const Json::exception& e) {
        fail(where + "/apcap", e.what());
      }
    }
    try {
      check_sample(s);
    } catch (const Error& e) {
      fail(where, e.what());
    }
    doc.samples.push_back(std::move(s));
  }
  return doc;
}

inline CocoDocument read_coco_document(const std::filesystem::path& path, const SchemaPtr& schema) {
  return parse_coco(read_text_file(path), schema, path.string());
}

inline std::vector<AnnotatedSample> read_coco(const std::filesystem::path& path, const SchemaPtr& schema) {
  return read_coco_document(path, schema).samples;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path, const SchemaPtr& schema) {
  auto doc = read_coco_document(path, schema);
  return DatasetManifest(doc.subset_id, std::move(doc.samples), doc.split, doc.seed);
}

/// Image and category ids follow first appearance in `samples`; annotation
/// ids are 1-based in order. Output key order is fixed.
inline Json coco_json(const std::vector<AnnotatedSample>& samples, const SchemaPtr& schema, const Json& info = Json::object()) {
  Json root;
  root["info"] = info;
  Json images = Json::array(), annotations = Json::array(), categories = Json::array();
  std::map<std::string, std::int64_t> image_ids, category_ids;

  Json skeleton = Json::array();
  for (const auto& l : schema->limbs()) skeleton.push_back(Json::array({l.parent + 1, l.child + 1}));

  for (const auto& s : samples) {
    if (!image_ids.count(s.image_ref)) {
      const auto id = static_cast<std::int64_t>(image_ids.size() + 1);
      image_ids[s.image_ref] = id;
      images.push_back(Json{{"id", id}, {"file_name", s.image_ref}, {"width", s.image_size.width}, {"height", s.image_size.height}});
    }
    if (!category_ids.count(s.category)) {
      const auto id = static_cast<std::int64_t>(category_ids.size() + 1);
      category_ids[s.category] = id;
      categories.push_back(Json{{"id", id},
                                {"name", s.category},
                                {"supercategory", "animal"},
                                {"keypoints", schema->keypoint_names()},
                                {"skeleton", skeleton}});
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.pose.points.size() != schema->size()) {
      throw Error(ErrorKind::SchemaMismatch, "sample '" + s.image_ref + "' does not match schema " + schema->family_id());
    }
    Json ext{{"provenance", std::string(to_string(s.provenance))}};
    if (s.prompt_used) ext["prompt"] = *s.prompt_used;
    if (s.seed) ext["seed"] = *s.seed;
    if (s.group) ext["group"] = *s.group;
    const auto& b = s.pose.bbox;
    annotations.push_back(Json{{"id", static_cast<std::int64_t>(i + 1)},
                               {"image_id", image_ids.at(s.image_ref)},
                               {"category_id", category_ids.at(s.category)},
                               {"keypoints", keypoint_triples(s.pose.points)},
                               {"num_keypoints", s.pose.labeled_count()},
                               {"bbox", Json::array({b.x, b.y, b.w, b.h})},
                               {"area", b.area()},
                               {"iscrowd", 0},
                               {"apcap", std::move(ext)}});
  }
  root["images"] = std::move(images);
  root["annotations"] = std::move(annotations);
  root["categories"] = std::move(categories);
  return root;
}

inline void write_coco(const std::vector<AnnotatedSample>& samples, const SchemaPtr& schema, const std::filesystem::path& path) {
  write_text_file(path, coco_json(samples, schema).dump(1) + "\n");
}

inline Json manifest_info(const DatasetManifest& m) {
  Json counts = Json::object();
  for (const auto& [p, n] : m.provenance_counts()) counts[std::string(to_string(p))] = n;
  return Json{{"description", m.subset_id()},
              {"apcap", Json{{"split", std::string(to_string(m.split()))}, {"seed", m.seed()}, {"provenance_counts", counts}}}};
}

inline void write_coco(const DatasetManifest& m, const SchemaPtr& schema, const std::filesystem::path& path) {
  write_text_file(path, coco_json(m.samples(), schema, manifest_info(m)).dump(1) + "\n");
}

}  // namespace apcap
