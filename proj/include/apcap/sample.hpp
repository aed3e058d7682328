#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "apcap/error.hpp"
#include "apcap/pose.hpp"

namespace apcap {

/// Where a sample came from: a real annotation or one of the three synthesis
/// strategies (modality fusion, pose adjustment, caption enhancement).
enum class Provenance { Real, MF, PA, CE };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Real: return "real";
    case Provenance::MF: return "MF";
    case Provenance::PA: return "PA";
    case Provenance::CE: return "CE";
  }
  return "?";
}

inline Provenance parse_provenance(std::string_view text) {
  if (text == "real" || text == "Real") return Provenance::Real;
  if (text == "MF") return Provenance::MF;
  if (text == "PA") return Provenance::PA;
  if (text == "CE") return Provenance::CE;
  throw Error(ErrorKind::ParseError, "unknown provenance '" + std::string(text) + "'");
}

struct AnnotatedSample {
  std::string image_ref;
  Pose pose;
  std::string category;
  Provenance provenance = Provenance::Real;
  std::optional<std::string> prompt_used;
  std::optional<std::uint64_t> seed;
  /// Prompt group for synthetic samples (0 or 1 under the default layout).
  std::optional<int> group;
  /// Source image dimensions when known (COCO "images" entry).
  ImageSize image_size;

  friend bool operator==(const AnnotatedSample&, const AnnotatedSample&) = default;
};

/// Real samples carry no generation metadata.
inline void check_sample(const AnnotatedSample& s) {
  if (s.provenance == Provenance::Real && (s.prompt_used || s.seed || s.group)) {
    throw Error(ErrorKind::InvalidArgument, "real sample '" + s.image_ref + "' carries generation metadata");
  }
}

}  // namespace apcap
