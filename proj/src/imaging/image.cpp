#include "scpc/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace scpc {

Image::Image(std::size_t height, std::size_t width, float fill)
    : height_(height), width_(width), values_(kChannels * height * width, fill) {
  if (fill < 0.0f || fill > 1.0f) throw FormatError("image fill value outside [0,1]");
}

Image::Image(std::size_t height, std::size_t width, std::vector<float> planar)
    : height_(height), width_(width), values_(std::move(planar)) {
  if (values_.size() != kChannels * height * width) {
    throw DimensionError("image buffer holds " + std::to_string(values_.size()) + " values, expected " +
                         std::to_string(kChannels * height * width));
  }
  for (float v : values_) {
    if (!(v >= 0.0f && v <= 1.0f)) throw FormatError("image value outside [0,1]");
  }
}

float Image::luminance(std::size_t y, std::size_t x) const {
  return 0.299f * at(0, y, x) + 0.587f * at(1, y, x) + 0.114f * at(2, y, x);
}

Image Image::crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const {
  if (top + h > height_ || left + w > width_) throw DimensionError("crop window exceeds image bounds");
  Image out(h, w);
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(&values_[(c * height_ + top + y) * width_ + left], w, &out.at(c, y, 0));
  return out;
}

Image Image::flipped_horizontal() const {
  Image out(height_, width_);
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t y = 0; y < height_; ++y)
      for (std::size_t x = 0; x < width_; ++x) out.at(c, y, x) = at(c, y, width_ - 1 - x);
  return out;
}

void GridSpec::validate() const {
  if (patch_side == 0 || patch_side % 2 != 0) {
    throw DimensionError("patch_side must be even and positive (got " + std::to_string(patch_side) + ")");
  }
  if (stride != patch_side / 2) {
    throw DimensionError("stride must equal patch_side/2 for half overlap (got stride " + std::to_string(stride) +
                         ", patch_side " + std::to_string(patch_side) + ")");
  }
  if (image_side < patch_side) {
    throw DimensionError("image_side " + std::to_string(image_side) + " smaller than patch_side " +
                         std::to_string(patch_side));
  }
  if ((image_side - patch_side) % stride != 0) {
    throw DimensionError("(image_side - patch_side) must be divisible by stride (" + std::to_string(image_side) +
                         " - " + std::to_string(patch_side) + " not divisible by " + std::to_string(stride) + ")");
  }
}

Image resize(const Image& img, std::size_t side) {
  if (img.empty()) throw DimensionError("resize: degenerate input image");
  if (side == 0) throw DimensionError("resize: target side must be positive");
  if (img.height() == side && img.width() == side) return img;
  Image out(side, side);
  // Corner alignment maps output 0 and side-1 onto input 0 and extent-1.
  auto source = [side](std::size_t o, std::size_t extent) {
    if (side == 1) return 0.5 * static_cast<double>(extent - 1);
    return static_cast<double>(o) * static_cast<double>(extent - 1) / static_cast<double>(side - 1);
  };
  for (std::size_t oy = 0; oy < side; ++oy) {
    const double sy = source(oy, img.height());
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < side; ++ox) {
      const double sx = source(ox, img.width());
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        const double top = (1.0 - fx) * img.at(c, y0, x0) + fx * img.at(c, y0, x1);
        const double bottom = (1.0 - fx) * img.at(c, y1, x0) + fx * img.at(c, y1, x1);
        out.at(c, oy, ox) = std::clamp(static_cast<float>((1.0 - fy) * top + fy * bottom), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

PatchGrid extract_grid(const Image& img, const GridSpec& spec, int texture_id) {
  spec.validate();
  if (img.height() != spec.image_side || img.width() != spec.image_side) {
    throw DimensionError("extract_grid: image is " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                         " but grid expects " + std::to_string(spec.image_side) + "x" +
                         std::to_string(spec.image_side));
  }
  PatchGrid grid{spec, texture_id, {}};
  const std::size_t s = spec.grid_side();
  grid.patches.reserve(s * s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j)
      grid.patches.push_back(img.crop(i * spec.stride, j * spec.stride, spec.patch_side, spec.patch_side));
  return grid;
}

std::vector<float> sobel_magnitude(const Image& img) {
  const std::size_t h = img.height(), w = img.width();
  std::vector<float> lum(h * w), mag(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) lum[y * w + x] = img.luminance(y, x);
  auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1);
    return lum[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
  };
  for (std::size_t uy = 0; uy < h; ++uy) {
    for (std::size_t ux = 0; ux < w; ++ux) {
      const auto y = static_cast<std::ptrdiff_t>(uy), x = static_cast<std::ptrdiff_t>(ux);
      const float gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                       (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const float gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                       (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      mag[uy * w + ux] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

double edge_overlap(const Image& reference, const Image& candidate, float threshold) {
  if (reference.height() != candidate.height() || reference.width() != candidate.width()) {
    throw DimensionError("edge_overlap: image sizes differ");
  }
  const auto a = sobel_magnitude(reference);
  const auto b = sobel_magnitude(candidate);
  std::size_t edges = 0, kept = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= threshold) continue;
    ++edges;
    if (b[i] > threshold) ++kept;
  }
  return edges == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(edges);
}

double mean_abs_difference(const Image& a, const Image& b) {
  if (a.values().size() != b.values().size()) throw DimensionError("mean_abs_difference: image sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) acc += std::abs(a.values()[i] - b.values()[i]);
  return acc / static_cast<double>(a.values().size());
}

}  // namespace scpc
