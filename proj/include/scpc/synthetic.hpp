#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scpc/image.hpp"

namespace scpc {

enum class ShapeClass { Circle = 0, Triangle = 1, Square = 2, Cross = 3 };
inline constexpr std::size_t kShapeClassCount = 4;
std::string to_string(ShapeClass c);

struct LabeledImage {
  Image image;
  int label = 0;
  std::string name;
};

struct SyntheticShapesSpec {
  std::size_t images_per_class = 10;
  std::size_t image_side = 64;
  // Foreground and background filled with random colors and random bank
  // textures, so that only shape predicts the label.
  bool texture_randomization = true;
  std::uint64_t seed = 7;
};

// Deterministic in spec.seed. Images are ordered class-major.
std::vector<LabeledImage> generate_shapes(const SyntheticShapesSpec& spec);

// 32-bin luminance histogram per image.
std::vector<double> luminance_histogram(const Image& img, std::size_t bins = 32);

// Leave-one-out nearest-centroid accuracy on luminance histograms: a
// texture-only baseline that should sit near chance on a randomized corpus.
double histogram_baseline_accuracy(std::span<const LabeledImage> images, std::size_t classes);

// Writes <dir>/<name>.imgf for each image plus <dir>/manifest.csv (path,label).
void write_corpus(const std::filesystem::path& dir, std::span<const LabeledImage> images);
// Reads a manifest.csv (or a directory containing one); paths are relative to it.
std::vector<LabeledImage> read_corpus(const std::filesystem::path& manifest_or_dir);

}  // namespace scpc
