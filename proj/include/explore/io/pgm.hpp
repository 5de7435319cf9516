#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace explore::io {

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Maps values to bytes by round(255 * v / max); an all-zero input stays zero.
GrayImage to_gray_max_normalized(std::span<const double> values, std::size_t width, std::size_t height);
/// Maps values in [0, 1] to bytes by round(255 * clamp(v, 0, 1)).
GrayImage to_gray_unit(std::span<const double> values, std::size_t width, std::size_t height);

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace explore::io
