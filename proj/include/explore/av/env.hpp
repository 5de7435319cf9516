#pragma once

// Active-vision substrate: grayscale image corpora and the foveated sensor.
//
// Locations are l = (lx, ly) in [-1, 1]^2 with (-1, -1) the top-left corner;
// lx runs along columns, ly along rows.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "explore/num/rng.hpp"

namespace explore::av {

using Location = std::array<double, 2>;

struct ImageCorpus {
  std::size_t height = 0, width = 0;
  std::size_t n_classes = 10;
  std::string split = "train";
  /// Row-major pixels in [0, 1], height * width per image.
  std::vector<std::vector<double>> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
  /// Throws std::invalid_argument on inconsistent sizes, out-of-range pixels or labels.
  void validate() const;
};

struct FoveationSpec {
  std::size_t d = 8;
  std::size_t n_fov = 1;
  std::size_t scale = 2;

  void validate() const;
  std::size_t glimpse_size() const { return n_fov * d * d; }
};

struct Glimpse {
  std::vector<double> x;
  Location l{};
  bool clamped = false;
};

/// Pixel index round((v + 1) / 2 * (extent - 1)) for one axis.
std::size_t location_to_pixel(double v, std::size_t extent);
/// Inverse of location_to_pixel on pixel centres.
double pixel_to_location(std::size_t p, std::size_t extent);

/// Extracts n_fov windows of side d * scale^k centred on l, zero-padded off
/// the image, each average-pooled to d x d, concatenated row-major in
/// increasing scale order. Locations outside [-1, 1]^2 are clamped and flagged.
Glimpse foveate(std::span<const double> image, std::size_t height, std::size_t width, Location l,
                const FoveationSpec& spec);

/// Pixel rectangle [row0, row0 + side) x [col0, col0 + side) seen by the
/// scale-k window at l; coordinates may fall outside the image.
struct Window {
  long row0, col0;
  std::size_t side;
};
Window foveation_window(std::size_t height, std::size_t width, Location l, const FoveationSpec& spec, std::size_t k);

/// The 7 x 5 bitmap of digit `digit` (rows top to bottom, '#' = ink).
const std::array<const char*, 7>& glyph_bitmap(int digit);

struct GlyphCorpusOptions {
  std::size_t n_per_class = 100;
  std::size_t image_size = 28;
  bool translated = false;
  double noise_std = 0.0;
};

/// Ten classes of 28 x 20 digit glyphs (the 7 x 5 font upscaled 4x), centred
/// or placed at uniformly random offsets, plus clipped Gaussian noise.
/// Images are interleaved by class: image i has label i % 10.
ImageCorpus make_glyph_corpus(const GlyphCorpusOptions& opts, num::Rng& rng);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
ImageCorpus load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes a grid of the first `count` images as one PGM.
void export_corpus_pgm(const std::filesystem::path& path, const ImageCorpus& corpus, std::size_t count,
                       std::size_t per_row);

}  // namespace explore::av
