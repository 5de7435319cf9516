#include <doctest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "explore/av/env.hpp"
#include "explore/io/pgm.hpp"

using namespace explore;
using namespace explore::av;
using doctest::Approx;

namespace {

std::vector<double> random_image(std::size_t h, std::size_t w, num::Rng& rng) {
  std::vector<double> img(h * w);
  for (double& v : img) v = rng.uniform();
  return img;
}

// Pixel-by-pixel oracle: each output cell is the mean over its f x f block,
// reading zero outside the image.
std::vector<double> oracle_foveate(const std::vector<double>& img, std::size_t H, std::size_t W, std::size_t cy,
                                   std::size_t cx, std::size_t d, std::size_t n_fov, std::size_t scale) {
  std::vector<double> out;
  std::size_t f = 1;
  for (std::size_t k = 0; k < n_fov; ++k, f *= scale) {
    const long side = static_cast<long>(d * f);
    const long top = static_cast<long>(cy) - side / 2, left = static_cast<long>(cx) - side / 2;
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0;
        for (long y = top + static_cast<long>(r * f); y < top + static_cast<long>((r + 1) * f); ++y) {
          for (long x = left + static_cast<long>(c * f); x < left + static_cast<long>((c + 1) * f); ++x) {
            if (y >= 0 && x >= 0 && y < static_cast<long>(H) && x < static_cast<long>(W)) s += img[y * W + x];
          }
        }
        out.push_back(s / static_cast<double>(f * f));
      }
    }
  }
  return out;
}

void put_be32(std::ofstream& f, std::uint32_t v) {
  const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  f.write(b, 4);
}

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("foveate: glimpse length for the translated preset") {
  std::vector<double> img(60 * 60, 0.5);
  FoveationSpec spec{12, 3, 2};
  auto g = foveate(img, 60, 60, {0.3, -0.2}, spec);
  CHECK(g.x.size() == 432);
  CHECK_FALSE(g.clamped);
}

TEST_CASE("foveate: zero image gives zero glimpse") {
  std::vector<double> img(28 * 28, 0.0);
  num::Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    auto g = foveate(img, 28, 28, {rng.uniform(-1, 1), rng.uniform(-1, 1)}, {8, 2, 2});
    for (double v : g.x) CHECK(v == 0.0);
  }
}

TEST_CASE("foveate: centre window of an odd constant image is constant") {
  std::vector<double> img(9 * 9, 0.7);
  auto g = foveate(img, 9, 9, {0.0, 0.0}, {3, 2, 3});
  REQUIRE(g.x.size() == 18);
  for (double v : g.x) CHECK(v == Approx(0.7).epsilon(1e-15));
  // d = 4 on the same image: window rows 2..5 are all inside.
  g = foveate(img, 9, 9, {0.0, 0.0}, {4, 1, 2});
  for (double v : g.x) CHECK(v == Approx(0.7).epsilon(1e-15));
}

TEST_CASE("foveate: matches pixel-loop oracle on random images") {
  num::Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t H = 5 + rng.index(20), W = 5 + rng.index(20);
    const FoveationSpec spec{1 + rng.index(6), 1 + rng.index(3), 2 + rng.index(2)};
    auto img = random_image(H, W, rng);
    Location l{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto g = foveate(img, H, W, l, spec);
    auto ref = oracle_foveate(img, H, W, location_to_pixel(l[1], H), location_to_pixel(l[0], W), spec.d, spec.n_fov,
                              spec.scale);
    REQUIRE(g.x.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(g.x[i] == Approx(ref[i]).epsilon(1e-14));
  }
}

TEST_CASE("foveate: corners map to corner pixels") {
  CHECK(location_to_pixel(-1.0, 28) == 0);
  CHECK(location_to_pixel(1.0, 28) == 27);
  CHECK(location_to_pixel(0.0, 29) == 14);
  for (std::size_t p = 0; p < 60; ++p) CHECK(location_to_pixel(pixel_to_location(p, 60), 60) == p);
}

TEST_CASE("foveate: out-of-range location is clamped and flagged") {
  std::vector<double> img(16 * 16, 0.25);
  auto g = foveate(img, 16, 16, {1.7, -3.0}, {4, 1, 2});
  CHECK(g.clamped);
  CHECK(g.l[0] == 1.0);
  CHECK(g.l[1] == -1.0);
  auto ref = foveate(img, 16, 16, {1.0, -1.0}, {4, 1, 2});
  CHECK(g.x == ref.x);
  CHECK_THROWS_AS(foveate(img, 16, 16, {NAN, 0.0}, {4, 1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(foveate(img, 15, 16, {0.0, 0.0}, {4, 1, 2}), std::invalid_argument);
  CHECK_THROWS_AS(foveate(img, 16, 16, {0.0, 0.0}, {4, 2, 1}), std::invalid_argument);
  CHECK_THROWS_AS(foveate(img, 16, 16, {0.0, 0.0}, {0, 1, 2}), std::invalid_argument);
}

TEST_CASE("foveate: translation consistency, exhaustive on a small image") {
  // A embedded in a larger zero canvas B at (dy, dx): a glimpse of A at pixel
  // (r, c) equals a glimpse of B at (r + dy, c + dx) bit for bit.
  num::Rng rng(3);
  const std::size_t h = 10, w = 12, H = 19, W = 17, dy = 5, dx = 3;
  auto a = random_image(h, w, rng);
  std::vector<double> b(H * W, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) b[(r + dy) * W + c + dx] = a[r * w + c];
  const FoveationSpec spec{3, 2, 2};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      auto ga = foveate(a, h, w, {pixel_to_location(c, w), pixel_to_location(r, h)}, spec);
      auto gb = foveate(b, H, W, {pixel_to_location(c + dx, W), pixel_to_location(r + dy, H)}, spec);
      CHECK(ga.x == gb.x);
    }
  }
}

TEST_CASE("foveate: values stay in [0, 1]") {
  num::Rng rng(4);
  std::vector<double> ones(20 * 20, 1.0);
  for (int i = 0; i < 500; ++i) {
    auto img = i % 2 ? ones : random_image(20, 20, rng);
    auto g = foveate(img, 20, 20, {rng.uniform(-2, 2), rng.uniform(-2, 2)}, {5, 3, 2});
    for (double v : g.x) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("glyph corpus: size, labels, determinism") {
  num::Rng r1(7), r2(7);
  auto c1 = make_glyph_corpus({100, 28, false, 0.0}, r1);
  auto c2 = make_glyph_corpus({100, 28, false, 0.0}, r2);
  CHECK(c1.size() == 1000);
  CHECK(c1.images == c2.images);
  CHECK(c1.labels == c2.labels);
  c1.validate();
  for (std::size_t i = 0; i < c1.size(); ++i) CHECK(c1.labels[i] == static_cast<int>(i % 10));
  // Noise-free centred glyphs are identical within a class and differ across classes.
  CHECK(c1.images[3] == c1.images[13]);
  for (int a = 0; a < 10; ++a)
    for (int b = a + 1; b < 10; ++b) CHECK(c1.images[a] != c1.images[b]);
}

TEST_CASE("glyph corpus: centred glyph occupies columns 4..23") {
  num::Rng rng(0);
  auto c = make_glyph_corpus({1, 28, false, 0.0}, rng);
  const auto& eight = c.images[8];
  std::size_t minc = 28, maxc = 0, minr = 28, maxr = 0;
  for (std::size_t r = 0; r < 28; ++r)
    for (std::size_t col = 0; col < 28; ++col)
      if (eight[r * 28 + col] > 0) {
        minc = std::min(minc, col), maxc = std::max(maxc, col);
        minr = std::min(minr, r), maxr = std::max(maxr, r);
      }
  CHECK(minc == 4);
  CHECK(maxc == 23);
  CHECK(minr == 0);
  CHECK(maxr == 27);
}

TEST_CASE("glyph corpus: translated glyphs stay inside a 60x60 frame and move") {
  num::Rng rng(11);
  auto c = make_glyph_corpus({50, 60, true, 0.0}, rng);
  c.validate();
  for (std::size_t i = 0; i < c.size(); ++i) {
    // Each glyph's full ink count matches the bitmap, so nothing was clipped.
    const auto& bm = glyph_bitmap(c.labels[i]);
    double ink = 0;
    for (auto row : bm)
      for (int k = 0; k < 5; ++k) ink += row[k] == '#' ? 16 : 0;
    double sum = 0;
    for (double v : c.images[i]) sum += v;
    CHECK(sum == ink);
  }
  // Offsets vary across images.
  CHECK(c.images[0] != c.images[10]);
  CHECK_THROWS_AS(make_glyph_corpus({1, 20, false, 0.0}, rng), std::invalid_argument);
}

TEST_CASE("glyph corpus: noise histogram matches clipped-Gaussian oracle") {
  const double sigma = 0.1;
  num::Rng r0(5), rn(5);
  auto clean = make_glyph_corpus({40, 28, false, 0.0}, r0);
  auto noisy = make_glyph_corpus({40, 28, false, sigma}, rn);
  noisy.validate();
  // Bins over the residual pixel - clean value, for background pixels (clean 0):
  // {0 exactly}, (0, 0.05], (0.05, 0.1], (0.1, 0.2], (0.2, 1].
  const std::vector<double> edges = {0.0, 0.05, 0.1, 0.2, 1.0};
  boost::math::normal_distribution<double> n01(0.0, sigma);
  std::vector<double> p = {0.5};
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    p.push_back(boost::math::cdf(n01, edges[i + 1]) - boost::math::cdf(n01, edges[i]));
  p.back() += boost::math::cdf(boost::math::complement(n01, 1.0));
  std::vector<double> counts(p.size(), 0.0);
  double n = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    for (std::size_t j = 0; j < clean.images[i].size(); ++j) {
      if (clean.images[i][j] != 0.0) continue;
      const double v = noisy.images[i][j];
      n += 1;
      if (v == 0.0) {
        counts[0] += 1;
        continue;
      }
      for (std::size_t b = 0; b + 1 < edges.size(); ++b)
        if (v > edges[b] && v <= edges[b + 1]) counts[b + 1] += 1;
    }
  }
  for (std::size_t b = 0; b < p.size(); ++b) {
    const double se = std::sqrt(p[b] * (1 - p[b]) / n);
    CAPTURE(b);
    CHECK(std::abs(counts[b] / n - p[b]) <= 3 * se);
  }
}

TEST_CASE("load_idx: fixture round trip") {
  const auto ip = tmp("explore_idx_images"), lp = tmp("explore_idx_labels");
  std::vector<std::uint8_t> pix(2 * 28 * 28);
  for (std::size_t i = 0; i < pix.size(); ++i) pix[i] = static_cast<std::uint8_t>((i * 37) % 256);
  {
    std::ofstream f(ip, std::ios::binary);
    put_be32(f, 0x00000803);
    put_be32(f, 2);
    put_be32(f, 28);
    put_be32(f, 28);
    f.write(reinterpret_cast<const char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    std::ofstream g(lp, std::ios::binary);
    put_be32(g, 0x00000801);
    put_be32(g, 2);
    const char lab[2] = {7, 2};
    g.write(lab, 2);
  }
  auto c = load_idx(ip, lp);
  REQUIRE(c.size() == 2);
  CHECK(c.height == 28);
  CHECK(c.width == 28);
  CHECK(c.labels == std::vector<int>{7, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 784; ++j) CHECK(std::lround(c.images[i][j] * 255.0) == pix[i * 784 + j]);
  c.validate();

  // Label count mismatch.
  {
    std::ofstream g(lp, std::ios::binary);
    put_be32(g, 0x00000801);
    put_be32(g, 3);
    const char lab[3] = {1, 2, 3};
    g.write(lab, 3);
  }
  CHECK_THROWS_AS(load_idx(ip, lp), std::runtime_error);

  // Wrong magic.
  {
    std::ofstream g(lp, std::ios::binary);
    put_be32(g, 0x00000803);
    put_be32(g, 2);
  }
  CHECK_THROWS_AS(load_idx(ip, lp), std::runtime_error);

  // Truncated payload.
  {
    std::ofstream f(ip, std::ios::binary);
    put_be32(f, 0x00000803);
    put_be32(f, 2);
    put_be32(f, 28);
    put_be32(f, 28);
    f.write(reinterpret_cast<const char*>(pix.data()), 100);
    std::ofstream g(lp, std::ios::binary);
    put_be32(g, 0x00000801);
    put_be32(g, 2);
    const char lab[2] = {7, 2};
    g.write(lab, 2);
  }
  CHECK_THROWS_AS(load_idx(ip, lp), std::runtime_error);
  CHECK_THROWS_AS(load_idx(tmp("explore_no_such_file"), lp), std::runtime_error);
  std::filesystem::remove(ip);
  std::filesystem::remove(lp);
}

TEST_CASE("export_corpus_pgm writes a grid") {
  num::Rng rng(0);
  auto c = make_glyph_corpus({2, 28, false, 0.0}, rng);
  const auto p = tmp("explore_corpus.pgm");
  export_corpus_pgm(p, c, 20, 10);
  auto img = io::read_pgm(p);
  CHECK(img.width == 280);
  CHECK(img.height == 56);
  // Pixel (0, 4) of glyph 1 in the first row is background; the "1" stem is ink.
  CHECK(img.pixels[28 + 4] == 0);
  CHECK(img.pixels[28 + 12] == 255);
  std::filesystem::remove(p);
}
