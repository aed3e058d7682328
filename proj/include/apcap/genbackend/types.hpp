#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apcap/error.hpp"
#include "apcap/pose.hpp"
#include "apcap/pose_map.hpp"

namespace apcap::gen {

/// Synthesis strategy: modality fusion (prompt + fixed pose), pose adjustment
/// (prompt + perturbed pose), caption enhancement (caption-driven).
enum class Strategy { MF, PA, CE };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::MF: return "MF";
    case Strategy::PA: return "PA";
    case Strategy::CE: return "CE";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view text) {
  if (text == "MF") return Strategy::MF;
  if (text == "PA") return Strategy::PA;
  if (text == "CE") return Strategy::CE;
  return std::nullopt;
}

struct GenRequest {
  Strategy strategy = Strategy::MF;
  std::string prompt;
  std::optional<PoseMap> pose_map;
  std::optional<std::string> caption;
  std::uint64_t seed = 0;
  ImageSize resolution{256, 256};
  std::string category;
  /// Conditioning pose in generation-frame pixels. Never sent on the wire;
  /// the mock generator draws from it directly.
  std::optional<Pose> pose;
};

struct GenResponse {
  std::vector<std::uint8_t> image_png;
  std::string backend_id;
  double latency_ms = 0.0;
  std::uint64_t seed_echo = 0;
};

struct GenError {
  enum class Kind { Timeout, RemoteError, DecodeError, InvalidRequest };
  Kind kind = Kind::RemoteError;
  int status = 0;  // HTTP status for RemoteError; 0 when no response arrived
  std::string message;

  /// Timeouts and 5xx responses are safe to retry: generation is seeded.
  bool retryable() const { return kind == Kind::Timeout || (kind == Kind::RemoteError && status >= 500); }
};

inline std::string_view to_string(GenError::Kind k) {
  switch (k) {
    case GenError::Kind::Timeout: return "Timeout";
    case GenError::Kind::RemoteError: return "RemoteError";
    case GenError::Kind::DecodeError: return "DecodeError";
    case GenError::Kind::InvalidRequest: return "InvalidRequest";
  }
  return "?";
}

inline std::string describe(const GenError& e) {
  std::string out(to_string(e.kind));
  if (e.kind == GenError::Kind::RemoteError) out += "(" + std::to_string(e.status) + ")";
  return out + ": " + e.message;
}

/// Thrown by the single-call API; batch calls return GenError values instead.
class GenerationFailure : public std::runtime_error {
 public:
  explicit GenerationFailure(GenError error) : std::runtime_error(describe(error)), error_(std::move(error)) {}
  const GenError& error() const noexcept { return error_; }

 private:
  GenError error_;
};

struct BackendDescriptor {
  enum class Kind { Mock, Remote };
  Kind kind = Kind::Mock;
  std::string endpoint;  // e.g. http://127.0.0.1:8000 (Remote only)
  int max_in_flight = 8;
  int timeout_ms = 30000;
  int retries = 3;
  int backoff_base_ms = 250;

  void validate() const {
    if (max_in_flight < 1) throw Error(ErrorKind::InvalidConfig, "backend.max_in_flight must be >= 1");
    if (timeout_ms < 1) throw Error(ErrorKind::InvalidConfig, "backend.timeout_ms must be >= 1");
    if (retries < 0) throw Error(ErrorKind::InvalidConfig, "backend.retries must be >= 0");
    if (backoff_base_ms < 0) throw Error(ErrorKind::InvalidConfig, "backend.backoff_base_ms must be >= 0");
    if (kind == Kind::Remote && endpoint.empty()) throw Error(ErrorKind::InvalidConfig, "remote backend needs an endpoint");
  }
};

/// Request invariants: MF/PA carry a pose map, CE carries a caption.
inline std::optional<GenError> check_request(const GenRequest& req) {
  auto bad = [](std::string msg) { return GenError{GenError::Kind::InvalidRequest, 400, std::move(msg)}; };
  if (req.resolution.width <= 0 || req.resolution.height <= 0) return bad("resolution must be positive");
  if ((req.strategy == Strategy::MF || req.strategy == Strategy::PA) && !req.pose_map) {
    return bad(std::string(to_string(req.strategy)) + " request needs a pose map");
  }
  if (req.strategy == Strategy::CE && !req.caption) return bad("CE request needs a caption");
  if (req.pose_map && (req.pose_map->width() != req.resolution.width || req.pose_map->height() != req.resolution.height)) {
    return bad("pose map size differs from resolution");
  }
  return std::nullopt;
}

/// One generation service. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Returns a response or throws GenerationFailure.
  virtual GenResponse generate(const GenRequest& req) = 0;

  /// Caption `image_png` following `instruction`; throws GenerationFailure.
  virtual std::string caption(const std::vector<std::uint8_t>& image_png, const std::string& instruction) = 0;

  virtual std::string id() const = 0;
};

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace apcap::gen
