#include "explore/av/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "explore/io/pgm.hpp"

namespace explore::av {

void ImageCorpus::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("corpus: image dimensions must be positive");
  if (images.size() != labels.size()) throw std::invalid_argument("corpus: image and label counts differ");
  for (const auto& img : images) {
    if (img.size() != height * width) throw std::invalid_argument("corpus: image has wrong pixel count");
    for (double v : img) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("corpus: pixel outside [0, 1]");
    }
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw std::invalid_argument("corpus: label out of range");
  }
}

void FoveationSpec::validate() const {
  if (d < 1) throw std::invalid_argument("foveation: patch side d must be >= 1");
  if (n_fov < 1) throw std::invalid_argument("foveation: n_fov must be >= 1");
  if (n_fov > 1 && scale < 2) throw std::invalid_argument("foveation: scale must be >= 2 when n_fov > 1");
}

std::size_t location_to_pixel(double v, std::size_t extent) {
  return static_cast<std::size_t>(std::lround((v + 1.0) / 2.0 * static_cast<double>(extent - 1)));
}

double pixel_to_location(std::size_t p, std::size_t extent) {
  return 2.0 * static_cast<double>(p) / static_cast<double>(extent - 1) - 1.0;
}

namespace {

std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

}  // namespace

Window foveation_window(std::size_t height, std::size_t width, Location l, const FoveationSpec& spec,
                        std::size_t k) {
  const std::size_t side = spec.d * ipow(spec.scale, k);
  const long cy = static_cast<long>(location_to_pixel(std::clamp(l[1], -1.0, 1.0), height));
  const long cx = static_cast<long>(location_to_pixel(std::clamp(l[0], -1.0, 1.0), width));
  const long half = static_cast<long>(side / 2);
  return {cy - half, cx - half, side};
}

Glimpse foveate(std::span<const double> image, std::size_t height, std::size_t width, Location l,
                const FoveationSpec& spec) {
  spec.validate();
  if (image.size() != height * width) throw std::invalid_argument("foveate: image size does not match dimensions");
  Glimpse g;
  for (int i = 0; i < 2; ++i) {
    if (!std::isfinite(l[i])) throw std::invalid_argument("foveate: non-finite location");
    const double c = std::clamp(l[i], -1.0, 1.0);
    g.clamped = g.clamped || c != l[i];
    g.l[i] = c;
  }
  g.x.assign(spec.glimpse_size(), 0.0);
  const std::size_t d = spec.d;
  for (std::size_t k = 0; k < spec.n_fov; ++k) {
    const Window w = foveation_window(height, width, g.l, spec, k);
    const std::size_t f = w.side / d;
    const double inv = 1.0 / static_cast<double>(f * f);
    double* out = &g.x[k * d * d];
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < f; ++i) {
          const long y = w.row0 + static_cast<long>(r * f + i);
          if (y < 0 || y >= static_cast<long>(height)) continue;
          for (std::size_t j = 0; j < f; ++j) {
            const long x = w.col0 + static_cast<long>(c * f + j);
            if (x < 0 || x >= static_cast<long>(width)) continue;
            sum += image[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
          }
        }
        out[r * d + c] = sum * inv;
      }
    }
  }
  return g;
}

const std::array<const char*, 7>& glyph_bitmap(int digit) {
  static const std::array<std::array<const char*, 7>, 10> font = {{
      {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},
      {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},
      {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"},
      {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "},
      {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},
      {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},
      {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "},
      {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "},
      {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},
      {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "},
  }};
  if (digit < 0 || digit > 9) throw std::out_of_range("glyph_bitmap: digit must be 0..9");
  return font[static_cast<std::size_t>(digit)];
}

ImageCorpus make_glyph_corpus(const GlyphCorpusOptions& opts, num::Rng& rng) {
  constexpr std::size_t kUp = 4, kRows = 7 * kUp, kCols = 5 * kUp;
  const std::size_t n = opts.image_size;
  if (n < kRows) throw std::invalid_argument("glyph corpus: image_size must be >= 28");
  if (!(opts.noise_std >= 0.0)) throw std::invalid_argument("glyph corpus: noise_std must be >= 0");
  ImageCorpus c;
  c.height = c.width = n;
  c.n_classes = 10;
  c.images.reserve(opts.n_per_class * 10);
  for (std::size_t i = 0; i < opts.n_per_class; ++i) {
    for (int digit = 0; digit < 10; ++digit) {
      std::size_t r0 = (n - kRows) / 2, c0 = (n - kCols) / 2;
      if (opts.translated) {
        r0 = rng.index(n - kRows + 1);
        c0 = rng.index(n - kCols + 1);
      }
      std::vector<double> img(n * n, 0.0);
      const auto& bm = glyph_bitmap(digit);
      for (std::size_t r = 0; r < kRows; ++r) {
        for (std::size_t col = 0; col < kCols; ++col) {
          if (bm[r / kUp][col / kUp] == '#') img[(r0 + r) * n + c0 + col] = 1.0;
        }
      }
      if (opts.noise_std > 0.0) {
        for (double& v : img) v = std::clamp(v + opts.noise_std * rng.normal(), 0.0, 1.0);
      }
      c.images.push_back(std::move(img));
      c.labels.push_back(digit);
    }
  }
  return c;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("idx: truncated header in " + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<unsigned char> buf(n);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n))) {
    throw std::runtime_error("idx: truncated payload in " + what + " (expected " + std::to_string(n) + " bytes)");
  }
  return buf;
}

}  // namespace

ImageCorpus load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  std::ifstream fi(images, std::ios::binary), fl(labels, std::ios::binary);
  if (!fi) throw std::runtime_error("idx: cannot open " + images.string());
  if (!fl) throw std::runtime_error("idx: cannot open " + labels.string());
  const std::string iname = images.string(), lname = labels.string();

  const std::uint32_t im = read_be32(fi, iname);
  if (im != 0x00000803) {
    throw std::runtime_error("idx: " + iname + " has magic " + std::to_string(im) + ", expected 0x00000803 (u8, 3 dims)");
  }
  const std::uint32_t n = read_be32(fi, iname), rows = read_be32(fi, iname), cols = read_be32(fi, iname);
  if (rows == 0 || cols == 0) throw std::runtime_error("idx: zero image dimension in " + iname);

  const std::uint32_t lm = read_be32(fl, lname);
  if (lm != 0x00000801) {
    throw std::runtime_error("idx: " + lname + " has magic " + std::to_string(lm) + ", expected 0x00000801 (u8, 1 dim)");
  }
  const std::uint32_t nl = read_be32(fl, lname);
  if (nl != n) {
    throw std::runtime_error("idx: " + std::to_string(n) + " images but " + std::to_string(nl) + " labels");
  }

  const std::size_t px = std::size_t{rows} * cols;
  auto pix = read_payload(fi, px * n, iname);
  auto lab = read_payload(fl, n, lname);

  ImageCorpus c;
  c.height = rows;
  c.width = cols;
  c.n_classes = 1;
  c.images.resize(n);
  c.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.images[i].resize(px);
    for (std::size_t j = 0; j < px; ++j) c.images[i][j] = pix[i * px + j] / 255.0;
    c.labels[i] = lab[i];
    c.n_classes = std::max<std::size_t>(c.n_classes, std::size_t{lab[i]} + 1);
  }
  c.n_classes = std::max<std::size_t>(c.n_classes, 10);
  return c;
}

void export_corpus_pgm(const std::filesystem::path& path, const ImageCorpus& corpus, std::size_t count,
                       std::size_t per_row) {
  count = std::min(count, corpus.size());
  if (count == 0 || per_row == 0) throw std::invalid_argument("export_corpus_pgm: nothing to export");
  const std::size_t cols = std::min(per_row, count), rows = (count + cols - 1) / cols;
  const std::size_t W = cols * corpus.width, H = rows * corpus.height;
  std::vector<double> canvas(W * H, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t oy = (i / cols) * corpus.height, ox = (i % cols) * corpus.width;
    for (std::size_t r = 0; r < corpus.height; ++r) {
      for (std::size_t c = 0; c < corpus.width; ++c) canvas[(oy + r) * W + ox + c] = corpus.images[i][r * corpus.width + c];
    }
  }
  io::write_pgm(path, io::to_gray_unit(canvas, W, H));
}

}  // namespace explore::av
