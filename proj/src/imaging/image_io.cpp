#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "scpc/binary_io.hpp"
#include "scpc/image.hpp"

namespace scpc {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

Image read_imgf(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path.string());
  ByteReader in(bytes, path.string());
  if (in.raw(4) != "IMGF") throw FormatError(path.string() + ": bad magic, expected IMGF");
  const std::size_t h = in.u16();
  const std::size_t w = in.u16();
  const std::size_t channels = in.u16();
  in.u16();  // reserved
  if (h == 0 || w == 0) throw FormatError(path.string() + ": zero-sized image");
  if (channels != 1 && channels != 3) {
    throw FormatError(path.string() + ": unsupported channel count " + std::to_string(channels));
  }
  std::vector<float> planar(Image::kChannels * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        const float v = in.f32();
        if (channels == 1) {
          for (std::size_t k = 0; k < Image::kChannels; ++k) planar[(k * h + y) * w + x] = v;
        } else {
          planar[(c * h + y) * w + x] = v;
        }
      }
  if (!in.at_end()) throw FormatError(path.string() + ": trailing bytes after pixel payload");
  return Image(h, w, std::move(planar));
}

void write_imgf(const std::filesystem::path& path, const Image& img) {
  if (img.height() > 0xffff || img.width() > 0xffff) throw FormatError("image too large for IMGF");
  ByteWriter out;
  out.raw("IMGF");
  out.u16(static_cast<std::uint16_t>(img.height()));
  out.u16(static_cast<std::uint16_t>(img.width()));
  out.u16(static_cast<std::uint16_t>(Image::kChannels));
  out.u16(0);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < Image::kChannels; ++c) out.f32(img.at(c, y, x));
  write_file_bytes(path.string(), out.bytes());
}

Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw FormatError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError(path.string() + ": " + png.message);
  }
  const std::size_t h = png.height, w = png.width;
  std::vector<float> planar(Image::kChannels * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < Image::kChannels; ++c)
        planar[(c * h + y) * w + x] = static_cast<float>(buffer[(y * w + x) * 3 + c]) / 255.0f;
  return Image(h, w, std::move(planar));
}

void write_png(const std::filesystem::path& path, const Image& img) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(img.width() * img.height() * 3);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x)
      for (std::size_t c = 0; c < Image::kChannels; ++c)
        buffer[(y * img.width() + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + png.message);
  }
}

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (std::string_view(magic, 4) == "IMGF") return read_imgf(path);
  if (static_cast<unsigned char>(magic[0]) == 0x89 && std::string_view(magic + 1, 3) == "PNG") return read_png(path);
  throw FormatError(path.string() + ": unrecognized image format");
}

}  // namespace scpc
