#include "diqa/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace diqa {
namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint8_t to_byte(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

Tensor decode_bmp(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  if (bytes.size() < 54) throw FormatError("truncated BMP header in '" + path.string() + "'");
  const std::uint32_t pixel_offset = le32(&bytes[10]);
  const std::uint32_t header_size = le32(&bytes[14]);
  if (header_size < 40) throw FormatError("unsupported BMP header variant in '" + path.string() + "'");
  const auto width = static_cast<std::int32_t>(le32(&bytes[18]));
  const auto raw_height = static_cast<std::int32_t>(le32(&bytes[22]));
  const std::uint16_t bits = le16(&bytes[28]);
  const std::uint32_t compression = le32(&bytes[30]);
  if (bits != 24) {
    throw FormatError("unsupported bit depth " + std::to_string(bits) + " in '" + path.string() +
                      "' (24-bit BMP required)");
  }
  if (compression != 0) throw FormatError("compressed BMP not supported: '" + path.string() + "'");
  if (width <= 0 || raw_height == 0) throw FormatError("invalid BMP dimensions in '" + path.string() + "'");
  const bool bottom_up = raw_height > 0;
  const std::int64_t h = std::abs(static_cast<std::int64_t>(raw_height));
  const std::int64_t w = width;
  const std::int64_t stride = (w * 3 + 3) / 4 * 4;
  if (pixel_offset + static_cast<std::uint64_t>(stride * h) > bytes.size()) {
    throw FormatError("truncated BMP pixel data in '" + path.string() + "'");
  }
  Tensor image(Shape{3, h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    const std::int64_t src_row = bottom_up ? h - 1 - y : y;
    const unsigned char* row = bytes.data() + pixel_offset + src_row * stride;
    for (std::int64_t x = 0; x < w; ++x) {
      image[(0 * h + y) * w + x] = static_cast<float>(row[3 * x + 2]) / 255.0f;
      image[(1 * h + y) * w + x] = static_cast<float>(row[3 * x + 1]) / 255.0f;
      image[(2 * h + y) * w + x] = static_cast<float>(row[3 * x + 0]) / 255.0f;
    }
  }
  return image;
}

Tensor decode_png(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw FormatError("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  if ((img.format & PNG_FORMAT_FLAG_LINEAR) != 0) {
    png_image_free(&img);
    throw FormatError("unsupported bit depth 16 in '" + path.string() + "' (8-bit PNG required)");
  }
  img.format = PNG_FORMAT_RGB;
  const std::int64_t w = img.width, h = img.height;
  std::vector<unsigned char> pixels(static_cast<std::size_t>(PNG_IMAGE_SIZE(img)));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    std::string message = img.message;
    png_image_free(&img);
    throw FormatError("cannot decode PNG '" + path.string() + "': " + message);
  }
  Tensor image(Shape{3, h, w});
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t c = 0; c < 3; ++c) {
        image[(c * h + y) * w + x] = static_cast<float>(pixels[(y * w + x) * 3 + c]) / 255.0f;
      }
    }
  }
  return image;
}

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_png(const std::filesystem::path& path, const std::vector<unsigned char>& pixels, std::int64_t w,
               std::int64_t h, bool color) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot encode PNG '" + path.string() + "': " + img.message);
  }
  std::vector<unsigned char> encoded(size);
  if (!png_image_write_to_memory(&img, encoded.data(), &size, 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot encode PNG '" + path.string() + "': " + img.message);
  }
  encoded.resize(size);
  write_bytes(path, encoded);
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static constexpr std::array<unsigned char, 8> kPngMagic{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngMagic.begin(), kPngMagic.end(), bytes.begin())) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return decode_bmp(bytes, path);
  throw FormatError("'" + path.string() + "' is neither PNG nor BMP");
}

void save_png(const std::filesystem::path& path, const Tensor& image) {
  require_rank(image, 3, "save_png");
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (c != 1 && c != 3) throw DimensionError("save_png: expected 1 or 3 channels, got " + std::to_string(c));
  std::vector<unsigned char> pixels(static_cast<std::size_t>(c * h * w));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t k = 0; k < c; ++k) pixels[(y * w + x) * c + k] = to_byte(image[(k * h + y) * w + x]);
    }
  }
  write_png(path, pixels, w, h, c == 3);
}

void save_bmp(const std::filesystem::path& path, const Tensor& image) {
  require_rank(image, 3, "save_bmp");
  if (image.dim(0) != 3) throw DimensionError("save_bmp: expected 3 channels");
  const std::int64_t h = image.dim(1), w = image.dim(2);
  const std::int64_t stride = (w * 3 + 3) / 4 * 4;
  std::vector<unsigned char> out;
  out.reserve(static_cast<std::size_t>(54 + stride * h));
  out.push_back('B');
  out.push_back('M');
  put32(out, static_cast<std::uint32_t>(54 + stride * h));
  put32(out, 0);
  put32(out, 54);
  put32(out, 40);
  put32(out, static_cast<std::uint32_t>(w));
  put32(out, static_cast<std::uint32_t>(h));
  put16(out, 1);
  put16(out, 24);
  put32(out, 0);
  put32(out, static_cast<std::uint32_t>(stride * h));
  put32(out, 2835);
  put32(out, 2835);
  put32(out, 0);
  put32(out, 0);
  for (std::int64_t y = h - 1; y >= 0; --y) {
    for (std::int64_t x = 0; x < w; ++x) {
      out.push_back(to_byte(image[(2 * h + y) * w + x]));
      out.push_back(to_byte(image[(1 * h + y) * w + x]));
      out.push_back(to_byte(image[(0 * h + y) * w + x]));
    }
    for (std::int64_t p = w * 3; p < stride; ++p) out.push_back(0);
  }
  write_bytes(path, out);
}

void save_gray_png(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::int64_t width,
                   std::int64_t height) {
  if (static_cast<std::int64_t>(pixels.size()) != width * height) throw DimensionError("save_gray_png: size mismatch");
  write_png(path, std::vector<unsigned char>(pixels.begin(), pixels.end()), width, height, false);
}

void save_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::int64_t width,
              std::int64_t height) {
  if (static_cast<std::int64_t>(pixels.size()) != width * height) throw DimensionError("save_pgm: size mismatch");
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  write_bytes(path, out);
}

}  // namespace diqa
