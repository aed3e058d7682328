#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <thread>
#include <variant>
#include <vector>

#include "apcap/genbackend/mock.hpp"
#include "apcap/genbackend/remote.hpp"
#include "apcap/genbackend/types.hpp"
#include "apcap/random.hpp"

namespace apcap::gen {

using BatchResult = std::variant<GenResponse, GenError>;

inline bool ok(const BatchResult& r) { return std::holds_alternative<GenResponse>(r); }

inline std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc) {
  desc.validate();
  if (desc.kind == BackendDescriptor::Kind::Remote) return std::make_unique<RemoteBackend>(desc);
  return std::make_unique<MockBackend>();
}

/// Single blocking call; throws GenerationFailure.
inline GenResponse generate(const GenRequest& req, const BackendDescriptor& desc) {
  return make_backend(desc)->generate(req);
}

/// Caption an image file through a remote backend's /v1/caption.
inline std::string caption_remote(const std::filesystem::path& image_ref, const std::string& instruction,
                                  const BackendDescriptor& desc) {
  return RemoteBackend(desc).caption(read_file_bytes(image_ref), instruction);
}

inline GenError to_gen_error(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const GenerationFailure& f) {
    return f.error();
  } catch (const Error& e) {
    return {GenError::Kind::InvalidRequest, 400, e.what()};
  } catch (const std::exception& e) {
    return {GenError::Kind::RemoteError, 0, e.what()};
  }
}

/// Delay before retry `attempt` (0-based): base * 2^attempt, jittered by a
/// factor in [0.5, 1.5) drawn from the request seed.
inline std::chrono::milliseconds backoff_delay(int base_ms, int attempt, std::uint64_t seed) {
  Rng rng(seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ULL);
  const double jitter = uniform(rng, 0.5, 1.5);
  return std::chrono::milliseconds(static_cast<long long>(std::ldexp(base_ms, attempt) * jitter));
}

inline BatchResult generate_with_retry(Backend& backend, const GenRequest& req, int retries, int backoff_base_ms) {
  for (int attempt = 0;; ++attempt) {
    try {
      return backend.generate(req);
    } catch (...) {
      GenError err = to_gen_error(std::current_exception());
      if (!err.retryable() || attempt >= retries) return err;
    }
    std::this_thread::sleep_for(backoff_delay(backoff_base_ms, attempt, req.seed));
  }
}

/// Bounded worker pool: at most `concurrency_cap` requests in flight, result i
/// belongs to request i, and a failing item never affects the others.
inline std::vector<BatchResult> generate_batch(std::span<const GenRequest> reqs, Backend& backend, int concurrency_cap,
                                               int retries = 0, int backoff_base_ms = 250) {
  if (concurrency_cap < 1) throw Error(ErrorKind::InvalidArgument, "concurrency cap must be >= 1");
  std::vector<std::optional<BatchResult>> slots(reqs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reqs.size(); i = next++) {
      slots[i] = generate_with_retry(backend, reqs[i], retries, backoff_base_ms);
    }
  };
  {
    const std::size_t n_workers = std::min(reqs.size(), static_cast<std::size_t>(concurrency_cap));
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  std::vector<BatchResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline std::vector<BatchResult> generate_batch(std::span<const GenRequest> reqs, const BackendDescriptor& desc) {
  auto backend = make_backend(desc);
  return generate_batch(reqs, *backend, desc.max_in_flight, desc.retries, desc.backoff_base_ms);
}

}  // namespace apcap::gen
