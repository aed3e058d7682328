#pragma once

// Inspection overlays: the annotated skeleton drawn over its image with the
// provenance tag in a corner strip. Before drawing, every image pixel has its
// low blue bit cleared so the overlay's keypoint discs are the only
// keypoint-coloured pixels and can be re-located exactly.

#include <array>
#include <cctype>
#include <string>
#include <string_view>

#include "apcap/image.hpp"
#include "apcap/palette.hpp"
#include "apcap/sample.hpp"

namespace apcap {

struct OverlayStyle {
  double line_width = 2.0;  // px at 256 on the shorter side
  double disc_radius = 3.0;
  int glyph_scale = 2;
};

namespace viz_detail {

// 5x7 glyphs, one row per byte, bit 4 = leftmost column.
struct Glyph {
  char c;
  std::array<std::uint8_t, 7> rows;
};

inline constexpr std::array<Glyph, 9> kFont{{
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {' ', {0, 0, 0, 0, 0, 0, 0}},
}};

inline const Glyph* glyph(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.c == u) return &g;
  }
  return nullptr;
}

/// Strip colour per provenance (even blue channel).
inline Rgb tag_color(Provenance p) {
  switch (p) {
    case Provenance::Real: return {40, 40, 40};
    case Provenance::MF: return {30, 90, 170};
    case Provenance::PA: return {160, 70, 20};
    case Provenance::CE: return {40, 130, 60};
  }
  return {0, 0, 0};
}

}  // namespace viz_detail

inline int text_width(std::string_view text, int scale) { return static_cast<int>(text.size()) * 6 * scale; }

/// Draw `text` with its top-left corner at (x, y). Unknown characters are blank.
inline void draw_text(Image& img, int x, int y, std::string_view text, Rgb color, int scale) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto* g = viz_detail::glyph(text[i]);
    if (!g) continue;
    const int gx = x + static_cast<int>(i) * 6 * scale;
    for (int row = 0; row < 7; ++row) {
      for (int col = 0; col < 5; ++col) {
        if (!((g->rows[static_cast<std::size_t>(row)] >> (4 - col)) & 1)) continue;
        fill_rect(img, gx + col * scale, y + row * scale, scale, scale, color);
      }
    }
  }
}

inline Image render_overlay(const Image& source, const AnnotatedSample& sample, const OverlayStyle& style = {}) {
  Image img = source;
  for (std::size_t i = 2; i < img.pixels.size(); i += 3) img.pixels[i] &= 0xFE;

  const std::string tag(to_string(sample.provenance));
  const int pad = 2 * style.glyph_scale;
  const int strip_h = 7 * style.glyph_scale + 2 * pad;
  fill_rect(img, 0, 0, text_width(tag, style.glyph_scale) + 2 * pad, strip_h, viz_detail::tag_color(sample.provenance));
  draw_text(img, pad, pad, tag, {250, 250, 250}, style.glyph_scale);

  const double s = std::min(img.width, img.height) / 256.0;
  const Pose& pose = sample.pose;
  const auto& limbs = pose.schema->limbs();
  for (std::size_t j = 0; j < limbs.size(); ++j) {
    const auto& a = pose.points[static_cast<std::size_t>(limbs[j].parent)];
    const auto& b = pose.points[static_cast<std::size_t>(limbs[j].child)];
    if (a.labeled() && b.labeled()) fill_capsule(img, a.x, a.y, b.x, b.y, 0.5 * style.line_width * s, limb_color(j));
  }
  for (std::size_t k = 0; k < pose.points.size(); ++k) {
    const auto& p = pose.points[k];
    if (p.labeled()) fill_disc(img, p.x, p.y, style.disc_radius * s, keypoint_color(k));
  }
  return img;
}

}  // namespace apcap
