#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scpc/image.hpp"

namespace scpc {

enum class PatternKind { DiagonalStripes, Checkerboard, Dots, Noise, CrossHatch };

std::string to_string(PatternKind kind);
PatternKind pattern_kind_from_string(const std::string& name);

// Procedural, edge-preserving texture replacement. The output is
//   clip((1 - blend)·img + blend·(lowpass(img) + pattern - 1/2))
// where lowpass is a box blur that keeps the shape layout and the pattern
// supplies new local texture statistics around mid-gray.
struct TextureTransform {
  int texture_id = 1;
  PatternKind kind = PatternKind::DiagonalStripes;
  double period = 8.0;     // pattern repeat length in pixels
  double radius = 2.0;     // dot radius (Dots only)
  double amplitude = 0.5;  // peak deviation of the pattern from 0.5
  double blend = 0.6;
  int structure_radius = 1;  // box-blur radius of the retained structure
  double phase_x = 0.0;      // horizontal pattern offset in pixels
  double phase_y = 0.0;
  std::uint64_t seed = 0x5eed;  // Noise only

  // Pattern intensity in [0, 1] at pixel (x, y).
  float pattern(std::size_t x, std::size_t y) const;
};

// Ordered set of transforms addressed by texture_id (1..T).
class TextureBank {
public:
  TextureBank() = default;
  explicit TextureBank(std::vector<TextureTransform> transforms);

  // Stripes, checkerboard, dots, noise and cross-hatch, blended at 0.6 over
  // the unblurred image (structure_radius 0).
  static TextureBank standard(std::uint64_t noise_seed = 0x5eed);

  std::size_t size() const { return transforms_.size(); }
  bool empty() const { return transforms_.empty(); }
  // Throws ConfigError for an id outside the bank.
  const TextureTransform& at(int texture_id) const;
  std::span<const TextureTransform> transforms() const { return transforms_; }
  TextureBank first(std::size_t count) const;

private:
  std::vector<TextureTransform> transforms_;
};

Image apply_texture(const Image& img, const TextureTransform& t);
Image apply_texture(const Image& img, const TextureBank& bank, int texture_id);

// Element 0 is the original; element j applies transform j-1.
std::vector<Image> make_variants(const Image& img, std::span<const TextureTransform> bank);

}  // namespace scpc
