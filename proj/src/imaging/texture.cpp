#include "scpc/texture.hpp"

#include <algorithm>
#include <cmath>

namespace scpc {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double positive_mod(double v, double m) {
  const double r = std::fmod(v, m);
  return r < 0 ? r + m : r;
}

// Box blur with replicated borders, per channel.
Image box_blur(const Image& img, int radius) {
  if (radius <= 0) return img;
  const auto h = static_cast<std::ptrdiff_t>(img.height());
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  Image out(img.height(), img.width());
  const double norm = 1.0 / static_cast<double>((2 * radius + 1) * (2 * radius + 1));
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
          const auto yy = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y + dy, 0, h - 1));
          for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
            const auto xx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x + dx, 0, w - 1));
            acc += img.at(c, yy, xx);
          }
        }
        out.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
            std::clamp(static_cast<float>(acc * norm), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

}  // namespace

std::string to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::DiagonalStripes: return "stripes";
    case PatternKind::Checkerboard: return "checker";
    case PatternKind::Dots: return "dots";
    case PatternKind::Noise: return "noise";
    case PatternKind::CrossHatch: return "hatch";
  }
  return "unknown";
}

PatternKind pattern_kind_from_string(const std::string& name) {
  for (auto k : {PatternKind::DiagonalStripes, PatternKind::Checkerboard, PatternKind::Dots, PatternKind::Noise,
                 PatternKind::CrossHatch}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown texture pattern '" + name + "'");
}

float TextureTransform::pattern(std::size_t px, std::size_t py) const {
  const double x = static_cast<double>(px) + phase_x;
  const double y = static_cast<double>(py) + phase_y;
  double s = 0.0;  // in [-1, 1]
  switch (kind) {
    case PatternKind::DiagonalStripes:
      s = positive_mod(x + y, period) < period / 2 ? 1.0 : -1.0;
      break;
    case PatternKind::Checkerboard: {
      const double cell = period / 2;
      const auto cx = static_cast<long long>(std::floor(x / cell));
      const auto cy = static_cast<long long>(std::floor(y / cell));
      s = ((cx + cy) % 2 == 0) ? 1.0 : -1.0;
      break;
    }
    case PatternKind::Dots: {
      const double dx = positive_mod(x, period) - period / 2;
      const double dy = positive_mod(y, period) - period / 2;
      s = (dx * dx + dy * dy <= radius * radius) ? 1.0 : -1.0;
      break;
    }
    case PatternKind::Noise: {
      const std::uint64_t key = mix(seed ^ mix((static_cast<std::uint64_t>(py) << 32) | px));
      s = static_cast<double>(key >> 11) * 0x1.0p-53 * 2.0 - 1.0;
      break;
    }
    case PatternKind::CrossHatch: {
      const bool on = positive_mod(x + y, period) < 1.0 || positive_mod(x - y, period) < 1.0;
      s = on ? 1.0 : -1.0;
      break;
    }
  }
  return static_cast<float>(std::clamp(0.5 + amplitude * s, 0.0, 1.0));
}

TextureBank::TextureBank(std::vector<TextureTransform> transforms) : transforms_(std::move(transforms)) {
  for (std::size_t i = 0; i < transforms_.size(); ++i) {
    if (transforms_[i].texture_id != static_cast<int>(i + 1)) {
      throw ConfigError("texture bank ids must run 1..T in order");
    }
  }
}

TextureBank TextureBank::standard(std::uint64_t noise_seed) {
  std::vector<TextureTransform> bank(5);
  bank[0].kind = PatternKind::DiagonalStripes;
  bank[0].period = 8;
  bank[1].kind = PatternKind::Checkerboard;
  bank[1].period = 8;
  bank[2].kind = PatternKind::Dots;
  bank[2].period = 8;
  bank[2].radius = 2;
  bank[3].kind = PatternKind::Noise;
  bank[3].seed = noise_seed;
  bank[4].kind = PatternKind::CrossHatch;
  bank[4].period = 6;
  // Calibrated so every transform keeps >= 70% of the Sobel edges of
  // textured corpus images, including stripes meeting stripes in antiphase.
  for (std::size_t i = 0; i < bank.size(); ++i) {
    bank[i].texture_id = static_cast<int>(i + 1);
    bank[i].amplitude = bank[i].kind == PatternKind::Noise ? 0.25 : 0.3;
    bank[i].structure_radius = 0;
  }
  return TextureBank(std::move(bank));
}

const TextureTransform& TextureBank::at(int texture_id) const {
  if (texture_id < 1 || static_cast<std::size_t>(texture_id) > transforms_.size()) {
    throw ConfigError("unknown texture id " + std::to_string(texture_id) + " (bank holds " +
                      std::to_string(transforms_.size()) + ")");
  }
  return transforms_[static_cast<std::size_t>(texture_id - 1)];
}

TextureBank TextureBank::first(std::size_t count) const {
  if (count > transforms_.size()) {
    throw ConfigError("requested " + std::to_string(count) + " textures but bank holds " +
                      std::to_string(transforms_.size()));
  }
  return TextureBank({transforms_.begin(), transforms_.begin() + static_cast<std::ptrdiff_t>(count)});
}

Image apply_texture(const Image& img, const TextureTransform& t) {
  if (t.blend == 0.0) return img;
  const Image structure = box_blur(img, t.structure_radius);
  Image out(img.height(), img.width());
  const auto w = static_cast<float>(t.blend);
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const float p = t.pattern(x, y) - 0.5f;
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        const float v = (1.0f - w) * img.at(c, y, x) + w * (structure.at(c, y, x) + p);
        out.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

Image apply_texture(const Image& img, const TextureBank& bank, int texture_id) {
  return apply_texture(img, bank.at(texture_id));
}

std::vector<Image> make_variants(const Image& img, std::span<const TextureTransform> bank) {
  std::vector<Image> out;
  out.reserve(bank.size() + 1);
  out.push_back(img);
  for (const auto& t : bank) out.push_back(apply_texture(img, t));
  return out;
}

}  // namespace scpc
