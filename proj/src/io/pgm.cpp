#include "explore/io/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace explore::io {

namespace {

void check_dims(std::span<const double> values, std::size_t width, std::size_t height) {
  if (values.size() != width * height) throw std::invalid_argument("pgm: value count does not match dimensions");
}

}  // namespace

GrayImage to_gray_max_normalized(std::span<const double> values, std::size_t width, std::size_t height) {
  check_dims(values, width, height);
  GrayImage img{width, height, std::vector<std::uint8_t>(values.size(), 0)};
  double mx = 0.0;
  for (double v : values) mx = std::max(mx, v);
  if (mx <= 0.0) return img;
  for (std::size_t i = 0; i < values.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(values[i] / mx, 0.0, 1.0)));
  }
  return img;
}

GrayImage to_gray_unit(std::span<const double> values, std::size_t width, std::size_t height) {
  check_dims(values, width, height);
  GrayImage img{width, height, std::vector<std::uint8_t>(values.size(), 0)};
  for (std::size_t i = 0; i < values.size(); ++i) {
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(values[i], 0.0, 1.0)));
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height) throw std::invalid_argument("pgm: bad image buffer");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  GrayImage img;
  int maxval = 0;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw std::runtime_error("pgm: unsupported header in " + path.string());
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error("pgm: truncated payload in " + path.string());
  return img;
}

}  // namespace explore::io
