#include <doctest.h>

#include <cmath>
#include <vector>

#include "mscan/preprocess.hpp"
#include "mscan/rng.hpp"

using namespace mscan;

namespace {

Image16 random_image(Rng& rng, int rows, int cols, int vmax = 4000) {
  Image16 img(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      img(r, c) = static_cast<std::uint16_t>(rng.uniform_int(0, vmax));
  return img;
}

// ---------------------------------------------------------------------------
// Straightforward scalar CLAHE reference, written directly from the algorithm
// description: per-tile clipped histograms equalized into the global range,
// then per-pixel bilinear blending between tile-center mappings. Kept free of
// the production code path on purpose.
// ---------------------------------------------------------------------------
Image16 clahe_reference(const Image16& img, const ClaheParams& prm) {
  const int rows = static_cast<int>(img.rows());
  const int cols = static_cast<int>(img.cols());
  const int ty = std::min(prm.tiles_y, rows);
  const int tx = std::min(prm.tiles_x, cols);
  std::uint16_t vmin = img(0, 0), vmax = img(0, 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      vmin = std::min(vmin, img(r, c));
      vmax = std::max(vmax, img(r, c));
    }
  if (vmin == vmax) return img;

  auto bin_of = [&](std::uint16_t v) {
    const std::uint64_t range = static_cast<std::uint64_t>(vmax) - vmin + 1;
    return static_cast<int>((static_cast<std::uint64_t>(v) - vmin) *
                            static_cast<std::uint64_t>(prm.bins) / range);
  };

  // per-tile mapping tables
  std::vector<std::vector<std::uint16_t>> maps(
      static_cast<size_t>(ty) * tx, std::vector<std::uint16_t>(prm.bins, vmin));
  for (int a = 0; a < ty; ++a)
    for (int b = 0; b < tx; ++b) {
      const int y0 = a * rows / ty, y1 = (a + 1) * rows / ty;
      const int x0 = b * cols / tx, x1 = (b + 1) * cols / tx;
      const std::uint64_t npix = static_cast<std::uint64_t>(y1 - y0) *
                                 static_cast<std::uint64_t>(x1 - x0);
      std::vector<std::uint64_t> hist(static_cast<size_t>(prm.bins), 0);
      for (int r = y0; r < y1; ++r)
        for (int c = x0; c < x1; ++c) ++hist[static_cast<size_t>(bin_of(img(r, c)))];
      const std::uint64_t limit = std::max<std::uint64_t>(
          1, static_cast<std::uint64_t>(prm.clip_limit * static_cast<double>(npix) /
                                        prm.bins));
      std::uint64_t excess = 0;
      for (auto& h : hist)
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      for (int q = 0; q < prm.bins; ++q)
        hist[static_cast<size_t>(q)] +=
            excess / prm.bins +
            (static_cast<std::uint64_t>(q) < excess % prm.bins ? 1 : 0);
      std::uint64_t cdf = 0;
      for (int q = 0; q < prm.bins; ++q) {
        cdf += hist[static_cast<size_t>(q)];
        maps[static_cast<size_t>(a) * tx + b][static_cast<size_t>(q)] =
            static_cast<std::uint16_t>(
                vmin + cdf * (static_cast<std::uint64_t>(vmax) - vmin) / npix);
      }
    }

  auto center = [&](int t, int dim, int tiles) {
    const int lo = t * dim / tiles, hi = (t + 1) * dim / tiles;
    return (lo + hi - 1) / 2.0;
  };
  auto pick = [&](double p, int dim, int tiles, int& t0, int& t1, double& w) {
    t0 = t1 = 0;
    w = 0.0;
    if (tiles == 1 || p <= center(0, dim, tiles)) return;
    if (p >= center(tiles - 1, dim, tiles)) {
      t0 = t1 = tiles - 1;
      return;
    }
    for (int t = 0; t + 1 < tiles; ++t)
      if (p >= center(t, dim, tiles) && p < center(t + 1, dim, tiles)) {
        t0 = t;
        t1 = t + 1;
        w = (p - center(t, dim, tiles)) /
            (center(t + 1, dim, tiles) - center(t, dim, tiles));
        return;
      }
    t0 = t1 = tiles - 1;
  };

  Image16 out(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      int ry0, ry1, cx0, cx1;
      double wy, wx;
      pick(r, rows, ty, ry0, ry1, wy);
      pick(c, cols, tx, cx0, cx1, wx);
      const int b = bin_of(img(r, c));
      const double top =
          (1 - wx) * maps[static_cast<size_t>(ry0) * tx + cx0][static_cast<size_t>(b)] +
          wx * maps[static_cast<size_t>(ry0) * tx + cx1][static_cast<size_t>(b)];
      const double bot =
          (1 - wx) * maps[static_cast<size_t>(ry1) * tx + cx0][static_cast<size_t>(b)] +
          wx * maps[static_cast<size_t>(ry1) * tx + cx1][static_cast<size_t>(b)];
      out(r, c) = static_cast<std::uint16_t>((1 - wy) * top + wy * bot + 0.5);
    }
  return out;
}

// Plain (unclipped) per-tile equalization; the clip_limit -> infinity limit.
Image16 equalize_reference(const Image16& img, const ClaheParams& base) {
  ClaheParams prm = base;
  prm.clip_limit = 1e18;  // beyond any tile pixel count: nothing clips
  return clahe_reference(img, prm);
}

}  // namespace

TEST_CASE("crop basics") {
  Image16 img(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) img(r, c) = static_cast<std::uint16_t>(r * 4 + c + 1);

  SUBCASE("center at image center with full size copies the image") {
    CropSpec spec{{2.0, 2.0}, 4, 4, 0};
    CHECK(crop(img, spec) == img);
  }
  SUBCASE("center (0,0) shows the top-left corner, rest zero-padded") {
    CropSpec spec{{0.0, 0.0}, 4, 4, 0};
    const Image16 out = crop(img, spec);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        if (r >= 2 && c >= 2)
          CHECK(out(r, c) == img(r - 2, c - 2));
        else
          CHECK(out(r, c) == 0);
      }
  }
  SUBCASE("output shape always equals the spec size") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      CropSpec spec{{rng.uniform(-10, 14), rng.uniform(-10, 14)},
                    static_cast<int>(rng.uniform_int(1, 9)),
                    static_cast<int>(rng.uniform_int(1, 9)),
                    0};
      const Image16 out = crop(img, spec);
      CHECK(out.rows() == spec.height);
      CHECK(out.cols() == spec.width);
    }
  }
}

TEST_CASE("crop per-pixel index oracle on random cases") {
  Rng rng(5);
  for (int iter = 0; iter < 100; ++iter) {
    const int rows = static_cast<int>(rng.uniform_int(1, 12));
    const int cols = static_cast<int>(rng.uniform_int(1, 12));
    const Image16 img = random_image(rng, rows, cols);
    CropSpec spec{{rng.uniform(-5, rows + 5), rng.uniform(-5, cols + 5)},
                  static_cast<int>(rng.uniform_int(1, 10)),
                  static_cast<int>(rng.uniform_int(1, 10)),
                  0};
    const Image16 out = crop(img, spec);
    const int r0 = static_cast<int>(std::floor(spec.center.row)) - spec.height / 2;
    const int c0 = static_cast<int>(std::floor(spec.center.col)) - spec.width / 2;
    for (int r = 0; r < spec.height; ++r)
      for (int c = 0; c < spec.width; ++c) {
        const int sr = r0 + r, sc = c0 + c;
        if (sr >= 0 && sr < rows && sc >= 0 && sc < cols)
          CHECK(out(r, c) == img(sr, sc));
        else
          CHECK(out(r, c) == 0);
      }
  }
}

TEST_CASE("clahe constant image is a fixpoint for every params setting") {
  for (double clip : {1.0, 2.0, 8.0, 1e6}) {
    for (int tiles : {1, 2, 8}) {
      ClaheParams prm;
      prm.clip_limit = clip;
      prm.tiles_y = prm.tiles_x = tiles;
      Image16 img = Image16::Constant(17, 23, 777);
      CHECK(clahe(img, prm) == img);
    }
  }
}

TEST_CASE("clahe matches the scalar reference bit-for-bit") {
  Rng rng(17);
  SUBCASE("two-tile toy image") {
    ClaheParams prm;
    prm.tiles_y = 1;
    prm.tiles_x = 2;
    prm.bins = 16;
    prm.clip_limit = 2.0;
    const Image16 img = random_image(rng, 8, 16, 255);
    CHECK(clahe(img, prm) == clahe_reference(img, prm));
  }
  SUBCASE("default params on random images") {
    for (int iter = 0; iter < 20; ++iter) {
      const int rows = static_cast<int>(rng.uniform_int(8, 80));
      const int cols = static_cast<int>(rng.uniform_int(8, 80));
      const Image16 img = random_image(rng, rows, cols);
      ClaheParams prm;
      CHECK(clahe(img, prm) == clahe_reference(img, prm));
    }
  }
  SUBCASE("huge clip limit degenerates to plain per-tile equalization") {
    for (int iter = 0; iter < 10; ++iter) {
      const Image16 img = random_image(rng, 32, 32);
      ClaheParams prm;
      prm.clip_limit = 1e18;
      CHECK(clahe(img, prm) == equalize_reference(img, prm));
    }
  }
}

TEST_CASE("clahe preserves the value range and per-tile maps are monotone") {
  Rng rng(23);
  for (int iter = 0; iter < 20; ++iter) {
    const Image16 img = random_image(rng, 40, 40);
    ClaheParams prm;
    prm.clip_limit = rng.uniform(1.0, 6.0);
    const Image16 out = clahe(img, prm);
    CHECK(out.minCoeff() >= img.minCoeff());
    CHECK(out.maxCoeff() <= img.maxCoeff());

    const ClaheTileMaps tm = clahe_tile_maps(img, prm);
    for (const auto& map : tm.maps)
      for (size_t b = 1; b < map.size(); ++b) CHECK(map[b] >= map[b - 1]);
  }
}

TEST_CASE("normalize") {
  SUBCASE("constant image maps to zeros") {
    const Image16 img = Image16::Constant(5, 5, 123);
    CHECK(normalize(img).isZero());
  }
  SUBCASE("[0,2] image maps to [-1,1]") {
    Image16 img(1, 2);
    img(0, 0) = 0;
    img(0, 1) = 2;
    const ImageF out = normalize(img);
    CHECK(out(0, 0) == doctest::Approx(-1.0));
    CHECK(out(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("random image gets zero mean, unit std") {
    Rng rng(31);
    const Image16 img = random_image(rng, 20, 30);
    const ImageF out = normalize(img);
    const double mean = out.cast<double>().mean();
    const double var = (out.cast<double>().array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
  }
}

TEST_CASE("resize_bilinear") {
  Rng rng(37);
  SUBCASE("same-size resize is the identity") {
    ImageF img(6, 7);
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 7; ++c) img(r, c) = static_cast<float>(rng.uniform());
    const ImageF out = resize_bilinear(img, 6, 7);
    CHECK((out - img).cwiseAbs().maxCoeff() < 1e-6f);
  }
  SUBCASE("2x2 -> 1x1 averages the four pixels") {
    ImageF img(2, 2);
    img << 1.f, 2.f, 3.f, 4.f;
    const ImageF out = resize_bilinear(img, 1, 1);
    CHECK(out(0, 0) == doctest::Approx(2.5));
  }
  SUBCASE("random resizes match a direct per-pixel oracle") {
    for (int iter = 0; iter < 30; ++iter) {
      const int rows = static_cast<int>(rng.uniform_int(2, 16));
      const int cols = static_cast<int>(rng.uniform_int(2, 16));
      ImageF img(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) img(r, c) = static_cast<float>(rng.uniform());
      const int oh = static_cast<int>(rng.uniform_int(1, 24));
      const int ow = static_cast<int>(rng.uniform_int(1, 24));
      const ImageF out = resize_bilinear(img, oh, ow);
      for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
          double fr = (r + 0.5) * rows / static_cast<double>(oh) - 0.5;
          double fc = (c + 0.5) * cols / static_cast<double>(ow) - 0.5;
          fr = std::clamp(fr, 0.0, rows - 1.0);
          fc = std::clamp(fc, 0.0, cols - 1.0);
          const int r0 = static_cast<int>(std::floor(fr));
          const int c0 = static_cast<int>(std::floor(fc));
          const int r1 = std::min(r0 + 1, rows - 1);
          const int c1 = std::min(c0 + 1, cols - 1);
          const double wr = fr - r0, wc = fc - c0;
          const double expect =
              (1 - wr) * ((1 - wc) * img(r0, c0) + wc * img(r0, c1)) +
              wr * ((1 - wc) * img(r1, c0) + wc * img(r1, c1));
          CHECK(std::abs(out(r, c) - expect) < 1e-6);
        }
    }
  }
}
