#pragma once

// Colour conventions shared by pose maps, the mock generator and overlays.
// Keypoint k is drawn in a colour whose blue channel is 2k+1 (odd); every
// other colour the library paints has an even blue channel, so keypoint
// pixels can be located exactly. Listed in docs/pose_map.md.

#include <array>
#include <cstddef>

#include "apcap/error.hpp"
#include "apcap/image.hpp"

namespace apcap {

inline constexpr std::size_t kMaxPaletteKeypoints = 128;

inline Rgb keypoint_color(std::size_t k) {
  if (k >= kMaxPaletteKeypoints) throw Error(ErrorKind::InvalidArgument, "keypoint index exceeds palette");
  return {static_cast<std::uint8_t>(255 - (k * 53) % 128), static_cast<std::uint8_t>(64 + (k * 97) % 192),
          static_cast<std::uint8_t>(2 * k + 1)};
}

/// Limb colours cycle through an 18-entry hue wheel.
inline Rgb limb_color(std::size_t j) {
  static constexpr std::array<Rgb, 18> kWheel{{{255, 0, 0},
                                               {255, 84, 0},
                                               {255, 170, 0},
                                               {254, 254, 0},
                                               {170, 255, 0},
                                               {84, 255, 0},
                                               {0, 255, 0},
                                               {0, 255, 84},
                                               {0, 255, 170},
                                               {0, 254, 254},
                                               {0, 170, 254},
                                               {0, 84, 254},
                                               {0, 0, 254},
                                               {84, 0, 254},
                                               {170, 0, 254},
                                               {254, 0, 254},
                                               {255, 0, 170},
                                               {255, 0, 84}}};
  return kWheel[j % kWheel.size()];
}

inline bool is_keypoint_color(Rgb c) { return (c.b & 1u) != 0; }

/// Clear the lowest blue bit so a colour can never alias a keypoint colour.
inline Rgb non_keypoint(Rgb c) { return {c.r, c.g, static_cast<std::uint8_t>(c.b & 0xFE)}; }

}  // namespace apcap
