#pragma once

#include "httplib.h"

#include <chrono>
#include <string>

#include "apcap/genbackend/types.hpp"
#include "apcap/genbackend/wire.hpp"
#include "apcap/image.hpp"

namespace apcap::gen {

struct HealthStatus {
  std::string status;
  std::string mode;
};

/// Client for the HTTP generation service. One httplib::Client per call keeps
/// the object safe to share between worker threads.
class RemoteBackend : public Backend {
 public:
  explicit RemoteBackend(BackendDescriptor desc) : desc_(std::move(desc)) {}

  GenResponse generate(const GenRequest& req) override {
    const auto start = std::chrono::steady_clock::now();
    if (auto err = check_request(req)) throw GenerationFailure(*err);
    const auto body = post("/v1/generate", wire::encode_request(req));
    GenResponse resp;
    try {
      resp = wire::decode_response(body);
      const Image img = decode_png(resp.image_png);
      if (img.width != req.resolution.width || img.height != req.resolution.height) {
        throw Error(ErrorKind::ParseError, "image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                                               ", requested " + std::to_string(req.resolution.width) + "x" +
                                               std::to_string(req.resolution.height));
      }
    } catch (const Error& e) {
      throw GenerationFailure({GenError::Kind::DecodeError, 200, e.what()});
    }
    if (resp.seed_echo != req.seed) {
      throw GenerationFailure({GenError::Kind::DecodeError, 200, "seed_echo does not match request seed"});
    }
    resp.latency_ms = elapsed_ms(start);
    return resp;
  }

  std::string caption(const std::vector<std::uint8_t>& image_png, const std::string& instruction) override {
    const auto body = post("/v1/caption", wire::encode_caption_request(image_png, instruction));
    if (!body.contains("caption") || !body["caption"].is_string()) {
      throw GenerationFailure({GenError::Kind::DecodeError, 200, "caption response lacks 'caption'"});
    }
    return body["caption"].get<std::string>();
  }

  HealthStatus health() {
    auto cli = client();
    auto res = cli.Get("/v1/health");
    const auto body = check(res);
    return {body.value("status", ""), body.value("mode", "")};
  }

  std::string id() const override { return "remote:" + desc_.endpoint; }

 private:
  httplib::Client client() const {
    httplib::Client cli(desc_.endpoint);
    const auto timeout = std::chrono::milliseconds(desc_.timeout_ms);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    return cli;
  }

  wire::Json post(const std::string& path, const wire::Json& payload) const {
    auto cli = client();
    auto res = cli.Post(path, payload.dump(), "application/json");
    return check(res);
  }

  static wire::Json check(const httplib::Result& res) {
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read || err == httplib::Error::Write) {
        throw GenerationFailure({GenError::Kind::Timeout, 0, httplib::to_string(err)});
      }
      throw GenerationFailure({GenError::Kind::RemoteError, 0, "unreachable: " + httplib::to_string(err)});
    }
    wire::Json body;
    try {
      body = wire::Json::parse(res->body);
    } catch (const wire::Json::parse_error&) {
      if (res->status >= 400) throw GenerationFailure({GenError::Kind::RemoteError, res->status, res->body});
      throw GenerationFailure({GenError::Kind::DecodeError, res->status, "response is not JSON"});
    }
    if (res->status >= 400) {
      const std::string message = body.is_object() && body.contains("error") && body["error"].is_string()
                                      ? body["error"].get<std::string>()
                                      : res->body;
      throw GenerationFailure({GenError::Kind::RemoteError, res->status, message});
    }
    return body;
  }

  BackendDescriptor desc_;
};

}  // namespace apcap::gen
