#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "scpc/error.hpp"

namespace scpc {

// RGB image with values in [0, 1], stored planar (channel, row, column).
class Image {
public:
  static constexpr std::size_t kChannels = 3;

  Image() = default;
  Image(std::size_t height, std::size_t width, float fill = 0.0f);
  // Wraps planar CHW values; throws FormatError for values outside [0, 1].
  Image(std::size_t height, std::size_t width, std::vector<float> planar);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool empty() const { return height_ == 0 || width_ == 0; }

  float& at(std::size_t c, std::size_t y, std::size_t x) { return values_[(c * height_ + y) * width_ + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return values_[(c * height_ + y) * width_ + x]; }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  // Rec. 601 luma.
  float luminance(std::size_t y, std::size_t x) const;

  // Copy of the window [top, top+h) × [left, left+w).
  Image crop(std::size_t top, std::size_t left, std::size_t h, std::size_t w) const;

  Image flipped_horizontal() const;

  bool operator==(const Image&) const = default;

private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> values_;
};

// Half-overlapping square patch layout over a square image.
struct GridSpec {
  std::size_t image_side = 64;
  std::size_t patch_side = 16;
  std::size_t stride = 8;

  // Throws DimensionError naming the violated constraint.
  void validate() const;
  std::size_t grid_side() const { return (image_side - patch_side) / stride + 1; }

  static GridSpec half_overlap(std::size_t image_side, std::size_t patch_side) {
    return {image_side, patch_side, patch_side / 2};
  }
  static GridSpec paper_scale() { return {224, 56, 28}; }
  static GridSpec desk_scale() { return {64, 16, 8}; }

  bool operator==(const GridSpec&) const = default;
};

struct PatchGrid {
  GridSpec spec;
  int texture_id = 0;  // 0 = original image
  std::vector<Image> patches;  // grid_side² patches, row-major

  std::size_t side() const { return spec.grid_side(); }
  const Image& patch(std::size_t row, std::size_t col) const { return patches.at(row * side() + col); }
};

// Bilinear resize to side×side with corner-aligned sampling.
Image resize(const Image& img, std::size_t side);

PatchGrid extract_grid(const Image& img, const GridSpec& spec, int texture_id = 0);

// Sobel gradient magnitude of the luminance channel (borders replicated).
std::vector<float> sobel_magnitude(const Image& img);

// Fraction of the reference image's edge pixels (Sobel magnitude > threshold)
// that are also edge pixels in `candidate`.
double edge_overlap(const Image& reference, const Image& candidate, float threshold);

double mean_abs_difference(const Image& a, const Image& b);

// IMGF raw format: "IMGF", u16 height, u16 width, u16 channels, u16 reserved,
// then row-major interleaved float32 samples; little-endian.
Image read_imgf(const std::filesystem::path& path);
void write_imgf(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
// Dispatches on the file's magic bytes.
Image read_image(const std::filesystem::path& path);

}  // namespace scpc
