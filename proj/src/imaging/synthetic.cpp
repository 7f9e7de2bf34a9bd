#include "scpc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "scpc/rng.hpp"
#include "scpc/texture.hpp"

namespace scpc {

std::string to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::Circle: return "circle";
    case ShapeClass::Triangle: return "triangle";
    case ShapeClass::Square: return "square";
    case ShapeClass::Cross: return "cross";
  }
  return "unknown";
}

namespace {

// Sizes are chosen so that every class covers roughly pi·r² pixels.
bool inside(ShapeClass shape, double x, double y, double cx, double cy, double r) {
  const double dx = x - cx, dy = y - cy;
  switch (shape) {
    case ShapeClass::Circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeClass::Square: {
      const double half = 0.886 * r;
      return std::abs(dx) <= half && std::abs(dy) <= half;
    }
    case ShapeClass::Triangle: {
      // Upward equilateral triangle with side 2.69r centred on its centroid.
      const double side = 2.69 * r;
      const double height = side * std::sqrt(3.0) / 2.0;
      const double top = -2.0 * height / 3.0, bottom = height / 3.0;
      if (dy < top || dy > bottom) return false;
      const double half_width = (dy - top) / height * side / 2.0;
      return std::abs(dx) <= half_width;
    }
    case ShapeClass::Cross: {
      const double half_len = 1.2 * r, half_bar = 0.4 * r;
      return (std::abs(dx) <= half_len && std::abs(dy) <= half_bar) ||
             (std::abs(dy) <= half_len && std::abs(dx) <= half_bar);
    }
  }
  return false;
}

struct Fill {
  std::array<float, 3> color{};
  const TextureTransform* texture = nullptr;
  double phase_x = 0, phase_y = 0;

  float value(std::size_t c, std::size_t x, std::size_t y) const {
    float v = color[c];
    if (texture != nullptr) {
      TextureTransform t = *texture;
      t.phase_x = phase_x;
      t.phase_y = phase_y;
      t.amplitude = 0.5;
      v += (t.pattern(x, y) - 0.5f) * 0.6f;
    }
    return std::clamp(v, 0.0f, 1.0f);
  }
};

float luma(const std::array<float, 3>& c) { return 0.299f * c[0] + 0.587f * c[1] + 0.114f * c[2]; }

}  // namespace

std::vector<LabeledImage> generate_shapes(const SyntheticShapesSpec& spec) {
  if (spec.image_side < 8) throw ConfigError("synthetic image_side must be at least 8");
  Rng rng = Rng::stream(spec.seed, "synthetic_shapes");
  const TextureBank bank = TextureBank::standard(spec.seed);
  const double side = static_cast<double>(spec.image_side);
  std::vector<LabeledImage> out;
  out.reserve(kShapeClassCount * spec.images_per_class);
  for (std::size_t cls = 0; cls < kShapeClassCount; ++cls) {
    const auto shape = static_cast<ShapeClass>(cls);
    for (std::size_t n = 0; n < spec.images_per_class; ++n) {
      const double r = rng.uniform(0.17, 0.24) * side;
      const double margin = 1.25 * r;
      const double cx = rng.uniform(margin, side - margin);
      const double cy = rng.uniform(margin, side - margin);
      Fill fg, bg;
      do {
        for (auto& v : fg.color) v = static_cast<float>(rng.uniform(0.15, 0.85));
        for (auto& v : bg.color) v = static_cast<float>(rng.uniform(0.15, 0.85));
      } while (std::abs(luma(fg.color) - luma(bg.color)) < 0.2f);
      if (spec.texture_randomization) {
        fg.texture = &bank.at(static_cast<int>(1 + rng.below(bank.size())));
        bg.texture = &bank.at(static_cast<int>(1 + rng.below(bank.size())));
        fg.phase_x = rng.uniform(0, 8);
        fg.phase_y = rng.uniform(0, 8);
        bg.phase_x = rng.uniform(0, 8);
        bg.phase_y = rng.uniform(0, 8);
      }
      Image img(spec.image_side, spec.image_side);
      for (std::size_t y = 0; y < spec.image_side; ++y) {
        for (std::size_t x = 0; x < spec.image_side; ++x) {
          // 2×2 supersampled coverage.
          int hits = 0;
          for (double oy : {0.25, 0.75})
            for (double ox : {0.25, 0.75}) hits += inside(shape, x + ox, y + oy, cx, cy, r) ? 1 : 0;
          const float alpha = static_cast<float>(hits) / 4.0f;
          for (std::size_t c = 0; c < Image::kChannels; ++c)
            img.at(c, y, x) = alpha * fg.value(c, x, y) + (1.0f - alpha) * bg.value(c, x, y);
        }
      }
      std::ostringstream name;
      name << to_string(shape) << '_' << n;
      out.push_back({std::move(img), static_cast<int>(cls), name.str()});
    }
  }
  return out;
}

std::vector<double> luminance_histogram(const Image& img, std::size_t bins) {
  std::vector<double> h(bins, 0.0);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) {
      const auto b = std::min(bins - 1, static_cast<std::size_t>(img.luminance(y, x) * static_cast<float>(bins)));
      h[b] += 1.0;
    }
  const double total = static_cast<double>(img.height() * img.width());
  for (auto& v : h) v /= total;
  return h;
}

double histogram_baseline_accuracy(std::span<const LabeledImage> images, std::size_t classes) {
  if (images.empty()) return 0.0;
  std::vector<std::vector<double>> hists;
  for (const auto& li : images) hists.push_back(luminance_histogram(li.image));
  const std::size_t bins = hists.front().size();
  std::vector<std::vector<double>> sums(classes, std::vector<double>(bins, 0.0));
  std::vector<double> counts(classes, 0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto c = static_cast<std::size_t>(images[i].label);
    for (std::size_t b = 0; b < bins; ++b) sums[c][b] += hists[i][b];
    counts[c] += 1.0;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto own = static_cast<std::size_t>(images[i].label);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_class = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double n = counts[c] - (c == own ? 1.0 : 0.0);
      if (n <= 0.0) continue;
      double dist = 0.0;
      for (std::size_t b = 0; b < bins; ++b) {
        const double centroid = (sums[c][b] - (c == own ? hists[i][b] : 0.0)) / n;
        dist += (hists[i][b] - centroid) * (hists[i][b] - centroid);
      }
      if (dist < best) {
        best = dist;
        best_class = c;
      }
    }
    if (best_class == own) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

void write_corpus(const std::filesystem::path& dir, std::span<const LabeledImage> images) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
  manifest << "path,label\n";
  for (const auto& li : images) {
    const std::string file = li.name + ".imgf";
    write_imgf(dir / file, li.image);
    manifest << file << ',' << li.label << '\n';
  }
  if (!manifest) throw IoError("short write to manifest");
}

std::vector<LabeledImage> read_corpus(const std::filesystem::path& manifest_or_dir) {
  const auto manifest_path = std::filesystem::is_directory(manifest_or_dir) ? manifest_or_dir / "manifest.csv"
                                                                             : manifest_or_dir;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  const auto base = manifest_path.parent_path();
  std::vector<LabeledImage> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line == "path,label") continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": expected path,label");
    }
    const std::string rel = line.substr(0, comma);
    int label = 0;
    try {
      label = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw FormatError(manifest_path.string() + ":" + std::to_string(line_no) + ": bad label");
    }
    const auto path = std::filesystem::path(rel).is_absolute() ? std::filesystem::path(rel) : base / rel;
    out.push_back({read_image(path), label, std::filesystem::path(rel).stem().string()});
  }
  return out;
}

}  // namespace scpc
