#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "diqa/tensor.hpp"

namespace diqa {

/// Decodes a PNG or 24-bit uncompressed BMP into a [3,H,W] tensor with values pixel/255.
/// Grayscale sources are replicated across the three channels.
Tensor load_image(const std::filesystem::path& path);

/// Writes a [3,H,W] or [1,H,W] tensor with values in [0,1] as an 8-bit PNG.
void save_png(const std::filesystem::path& path, const Tensor& image);

/// Writes a [3,H,W] tensor with values in [0,1] as a 24-bit uncompressed BMP.
void save_bmp(const std::filesystem::path& path, const Tensor& image);

/// 8-bit grayscale writers for row-major pixel grids.
void save_gray_png(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::int64_t width,
                   std::int64_t height);
void save_pgm(const std::filesystem::path& path, std::span<const std::uint8_t> pixels, std::int64_t width,
              std::int64_t height);

}  // namespace diqa
