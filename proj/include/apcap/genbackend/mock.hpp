#pragma once

// Deterministic stand-in generator. Images are procedural animal silhouettes:
// capsules along the conditioning skeleton, textured from a small latent that
// the toy DDPM sampler produces from (prompt, seed), with a tiny marker at
// every labeled joint so the conditioning pose can be re-detected exactly.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <string>

#include "apcap/codec.hpp"
#include "apcap/diffusion.hpp"
#include "apcap/genbackend/types.hpp"
#include "apcap/image.hpp"
#include "apcap/palette.hpp"
#include "apcap/pose_map.hpp"
#include "apcap/random.hpp"

namespace apcap::gen {

struct MockStyle {
  std::size_t latent_side = 8;
  std::size_t diffusion_steps = 20;
  double limb_radius = 5.0;    // px at 256x256
  double torso_radius = 10.0;
  double head_radius = 9.0;
  double marker_radius = 2.0;
};

namespace detail {

inline std::uint64_t digest_word(const Sha256Digest& d, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | d[offset + i];
  return v;
}

inline std::uint8_t to_channel(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

/// Latent texture of shape side x side x 3 drawn from (prompt, seed).
inline diffusion::Latent mock_texture(const std::string& prompt, std::uint64_t seed, const MockStyle& style) {
  const auto prompt_digest = sha256(prompt);
  Rng target_rng(digest_word(prompt_digest, 0));
  const std::vector<std::size_t> dims{style.latent_side, style.latent_side, 3};
  diffusion::Latent target = diffusion::Latent::gaussian(dims, target_rng);
  for (auto& v : target.values) v *= 0.6;

  Rng rng(seed ^ digest_word(prompt_digest, 8));
  const auto sched = diffusion::linear_schedule(style.diffusion_steps, 1e-3, 0.2);
  const auto zT = diffusion::Latent::gaussian(dims, rng);
  return diffusion::toy_denoise(zT, sched, diffusion::target_denoiser(target, sched, 0.85), rng);
}

/// Bilinear sample of channel c at normalised coordinates (u, v) in [0, 1].
inline double sample_latent(const diffusion::Latent& lat, std::size_t side, double u, double v, std::size_t c) {
  const double fx = std::clamp(u * static_cast<double>(side) - 0.5, 0.0, static_cast<double>(side - 1));
  const double fy = std::clamp(v * static_cast<double>(side) - 0.5, 0.0, static_cast<double>(side - 1));
  const auto x0 = static_cast<std::size_t>(fx);
  const auto y0 = static_cast<std::size_t>(fy);
  const std::size_t x1 = std::min(x0 + 1, side - 1);
  const std::size_t y1 = std::min(y0 + 1, side - 1);
  const double ax = fx - static_cast<double>(x0);
  const double ay = fy - static_cast<double>(y0);
  auto at = [&](std::size_t x, std::size_t y) { return lat.values[(y * side + x) * 3 + c]; };
  return (1 - ay) * ((1 - ax) * at(x0, y0) + ax * at(x1, y0)) + ay * ((1 - ax) * at(x0, y1) + ax * at(x1, y1));
}

}  // namespace detail

inline Image render_mock_image(const GenRequest& req, const MockStyle& style = {}) {
  const int w = req.resolution.width;
  const int h = req.resolution.height;
  const auto texture = detail::mock_texture(req.prompt, req.seed, style);
  const auto body_digest = sha256(req.prompt + '\x1f' + std::to_string(req.seed));
  const std::array<double, 3> body{static_cast<double>(body_digest[0]), static_cast<double>(body_digest[1]),
                                   static_cast<double>(body_digest[2])};

  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = (x + 0.5) / w;
      const double v = (y + 0.5) / h;
      Rgb c;
      c.r = detail::to_channel(90.0 + 45.0 * detail::sample_latent(texture, style.latent_side, u, v, 0));
      c.g = detail::to_channel(110.0 + 45.0 * detail::sample_latent(texture, style.latent_side, u, v, 1));
      c.b = detail::to_channel(80.0 + 45.0 * detail::sample_latent(texture, style.latent_side, u, v, 2));
      img.set(x, y, non_keypoint(c));
    }
  }
  if (!req.pose) return img;

  const Pose& pose = *req.pose;
  const auto& schema = *pose.schema;
  const double s = std::min(w, h) / 256.0;
  auto fur = [&](int x, int y) {
    const double u = (x + 0.5) / w;
    const double v = (y + 0.5) / h;
    Rgb c;
    c.r = detail::to_channel(0.6 * body[0] + 60.0 + 30.0 * detail::sample_latent(texture, style.latent_side, v, u, 0));
    c.g = detail::to_channel(0.6 * body[1] + 60.0 + 30.0 * detail::sample_latent(texture, style.latent_side, v, u, 1));
    c.b = detail::to_channel(0.6 * body[2] + 60.0 + 30.0 * detail::sample_latent(texture, style.latent_side, v, u, 2));
    return non_keypoint(c);
  };

  const auto& spine = schema.spine_group();
  for (std::size_t i = 1; i < spine.size(); ++i) {
    const auto& a = pose.points[static_cast<std::size_t>(spine[i - 1])];
    const auto& b = pose.points[static_cast<std::size_t>(spine[i])];
    if (a.labeled() && b.labeled()) shade_capsule(img, a.x, a.y, b.x, b.y, style.torso_radius * s, fur);
  }
  for (const auto& limb : schema.limbs()) {
    const auto& a = pose.points[static_cast<std::size_t>(limb.parent)];
    const auto& b = pose.points[static_cast<std::size_t>(limb.child)];
    if (a.labeled() && b.labeled()) shade_capsule(img, a.x, a.y, b.x, b.y, style.limb_radius * s, fur);
  }
  double hx = 0.0, hy = 0.0;
  int face_n = 0;
  for (int k : schema.face_group()) {
    const auto& p = pose.points[static_cast<std::size_t>(k)];
    if (!p.labeled()) continue;
    hx += p.x;
    hy += p.y;
    ++face_n;
  }
  if (face_n) shade_capsule(img, hx / face_n, hy / face_n, hx / face_n, hy / face_n, style.head_radius * s, fur);

  for (std::size_t k = 0; k < pose.points.size(); ++k) {
    const auto& p = pose.points[k];
    if (p.labeled()) fill_disc(img, p.x, p.y, style.marker_radius * s, keypoint_color(k));
  }
  return img;
}

/// Joint re-detector for mock images: each joint marker's centroid becomes a
/// visible keypoint; joints with no marker pixels come back unlabeled.
inline Pose mock_redetect(const Image& img, const SchemaPtr& schema) {
  const auto found = locate_keypoint_discs(img, schema->size());
  std::vector<Keypoint> points(schema->size());
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t k = 0; k < found.size(); ++k) {
    if (!found[k]) continue;
    points[k] = {found[k]->x, found[k]->y, kVisible};
    x0 = any ? std::min(x0, found[k]->x) : found[k]->x;
    y0 = any ? std::min(y0, found[k]->y) : found[k]->y;
    x1 = any ? std::max(x1, found[k]->x) : found[k]->x;
    y1 = any ? std::max(y1, found[k]->y) : found[k]->y;
    any = true;
  }
  return Pose::make(schema, std::move(points), {x0, y0, x1 - x0, y1 - y0});
}

class MockBackend : public Backend {
 public:
  explicit MockBackend(MockStyle style = {}) : style_(style) {}

  GenResponse generate(const GenRequest& req) override {
    const auto start = std::chrono::steady_clock::now();
    if (auto err = check_request(req)) throw GenerationFailure(*err);
    if (!req.pose) throw GenerationFailure({GenError::Kind::InvalidRequest, 400, "mock backend needs the conditioning pose"});
    GenResponse resp;
    resp.image_png = encode_png(render_mock_image(req, style_));
    resp.backend_id = id();
    resp.seed_echo = req.seed;
    resp.latency_ms = elapsed_ms(start);
    return resp;
  }

  std::string caption(const std::vector<std::uint8_t>& image_png, const std::string& instruction) override {
    static constexpr std::array<const char*, 6> kCoats{"tawny", "spotted", "dark", "pale", "striped", "russet"};
    static constexpr std::array<const char*, 5> kActions{"standing", "walking", "resting", "looking back", "running"};
    static constexpr std::array<const char*, 5> kPlaces{"on dry grass", "near a river bank", "in a forest clearing",
                                                       "on rocky ground", "in tall reeds"};
    std::vector<std::uint8_t> material(image_png);
    material.insert(material.end(), instruction.begin(), instruction.end());
    const auto d = sha256(material);
    return std::string("a ") + kCoats[d[0] % kCoats.size()] + " animal " + kActions[d[1] % kActions.size()] + " " +
           kPlaces[d[2] % kPlaces.size()];
  }

  std::string id() const override { return "mock-v1"; }

 private:
  MockStyle style_;
};

}  // namespace apcap::gen
