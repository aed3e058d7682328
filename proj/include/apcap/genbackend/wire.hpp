#pragma once

// JSON payloads of the generation-service protocol (HTTP/1.1):
//
//   POST /v1/generate  {strategy, prompt, caption?, seed, resolution: [w, h],
//                       category, pose_map_png_b64?}
//                  200 {image_png_b64, backend_id, seed_echo}
//                  4xx/5xx {error}
//   POST /v1/caption   {image_png_b64, instruction} -> 200 {caption}
//   GET  /v1/health    -> 200 {status: "ok", mode: "stub" | "model"}

#include "json.hpp"

#include <string>

#include "apcap/codec.hpp"
#include "apcap/error.hpp"
#include "apcap/genbackend/types.hpp"
#include "apcap/image.hpp"

namespace apcap::gen::wire {

using Json = nlohmann::ordered_json;

inline Json encode_request(const GenRequest& req) {
  Json j;
  j["strategy"] = std::string(to_string(req.strategy));
  j["prompt"] = req.prompt;
  if (req.caption) j["caption"] = *req.caption;
  j["seed"] = req.seed;
  j["resolution"] = Json::array({req.resolution.width, req.resolution.height});
  j["category"] = req.category;
  if (req.pose_map) j["pose_map_png_b64"] = base64_encode(encode_png(req.pose_map->image));
  return j;
}

namespace detail {

inline const Json& field(const Json& j, const char* name) {
  if (!j.is_object() || !j.contains(name)) throw Error(ErrorKind::ParseError, std::string("missing field '") + name + "'");
  return j.at(name);
}

inline std::string string_field(const Json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string()) throw Error(ErrorKind::ParseError, std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

inline std::uint64_t seed_field(const Json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_number_unsigned()) throw Error(ErrorKind::ParseError, std::string("field '") + name + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

}  // namespace detail

/// Server-side parse of /v1/generate. Throws Error(ParseError) naming the
/// offending field.
inline GenRequest decode_request(const Json& j) {
  GenRequest req;
  const auto strategy = parse_strategy(detail::string_field(j, "strategy"));
  if (!strategy) throw Error(ErrorKind::ParseError, "field 'strategy' must be MF, PA or CE");
  req.strategy = *strategy;
  req.prompt = detail::string_field(j, "prompt");
  if (j.contains("caption")) req.caption = detail::string_field(j, "caption");
  req.seed = detail::seed_field(j, "seed");
  const auto& res = detail::field(j, "resolution");
  if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() || !res[1].is_number_integer() ||
      res[0].get<int>() <= 0 || res[1].get<int>() <= 0) {
    throw Error(ErrorKind::ParseError, "field 'resolution' must be [width, height] with positive integers");
  }
  req.resolution = {res[0].get<int>(), res[1].get<int>()};
  req.category = detail::string_field(j, "category");
  if (j.contains("pose_map_png_b64")) {
    req.pose_map = PoseMap{PoseMapStyle::SkeletonLines, decode_png(base64_decode(detail::string_field(j, "pose_map_png_b64")))};
  }
  return req;
}

inline Json encode_response(const GenResponse& resp) {
  return Json{{"image_png_b64", base64_encode(resp.image_png)}, {"backend_id", resp.backend_id}, {"seed_echo", resp.seed_echo}};
}

inline GenResponse decode_response(const Json& j) {
  GenResponse resp;
  resp.image_png = base64_decode(detail::string_field(j, "image_png_b64"));
  resp.backend_id = detail::string_field(j, "backend_id");
  resp.seed_echo = detail::seed_field(j, "seed_echo");
  return resp;
}

inline Json encode_caption_request(const std::vector<std::uint8_t>& image_png, const std::string& instruction) {
  return Json{{"image_png_b64", base64_encode(image_png)}, {"instruction", instruction}};
}

struct CaptionRequest {
  std::vector<std::uint8_t> image_png;
  std::string instruction;
};

inline CaptionRequest decode_caption_request(const Json& j) {
  return {base64_decode(detail::string_field(j, "image_png_b64")), detail::string_field(j, "instruction")};
}

inline Json error_body(const std::string& message) { return Json{{"error", message}}; }

}  // namespace apcap::gen::wire
