#include "mscan/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace mscan {

Image16 crop(const Image16& image, const CropSpec& spec) {
  if (image.size() == 0) fail(ErrorCode::BadShape, "crop of empty image");
  if (spec.height <= 0 || spec.width <= 0)
    fail(ErrorCode::BadShape, "crop size must be positive");

  Image16 out(spec.height, spec.width);
  const int r0 = static_cast<int>(std::floor(spec.center.row)) - spec.height / 2;
  const int c0 = static_cast<int>(std::floor(spec.center.col)) - spec.width / 2;
  for (int r = 0; r < spec.height; ++r) {
    const int sr = r0 + r;
    for (int c = 0; c < spec.width; ++c) {
      const int sc = c0 + c;
      const bool inside = sr >= 0 && sr < image.rows() && sc >= 0 && sc < image.cols();
      out(r, c) = inside ? image(sr, sc) : spec.pad_value;
    }
  }
  return out;
}

int ClaheTileMaps::bin_of(std::uint16_t v) const {
  const std::uint64_t range = static_cast<std::uint64_t>(vmax) - vmin + 1;
  return static_cast<int>((static_cast<std::uint64_t>(v) - vmin) * bins / range);
}

ClaheTileMaps clahe_tile_maps(const Image16& image, const ClaheParams& params) {
  if (image.size() == 0) fail(ErrorCode::BadShape, "clahe of empty image");
  if (params.clip_limit < 1.0 || params.bins < 2 || params.tiles_y < 1 ||
      params.tiles_x < 1)
    fail(ErrorCode::BadConfig, "clahe params out of range");

  const int rows = static_cast<int>(image.rows());
  const int cols = static_cast<int>(image.cols());

  ClaheTileMaps tm;
  tm.tiles_y = std::min(params.tiles_y, rows);
  tm.tiles_x = std::min(params.tiles_x, cols);
  tm.bins = params.bins;
  tm.vmin = image.minCoeff();
  tm.vmax = image.maxCoeff();
  tm.maps.assign(static_cast<size_t>(tm.tiles_y) * tm.tiles_x,
                 std::vector<std::uint16_t>(params.bins, tm.vmin));
  if (tm.vmin == tm.vmax) return tm;  // single-value image maps to itself

  std::vector<std::uint64_t> hist(params.bins);
  for (int ty = 0; ty < tm.tiles_y; ++ty) {
    const int y0 = ty * rows / tm.tiles_y;
    const int y1 = (ty + 1) * rows / tm.tiles_y;
    for (int tx = 0; tx < tm.tiles_x; ++tx) {
      const int x0 = tx * cols / tm.tiles_x;
      const int x1 = (tx + 1) * cols / tm.tiles_x;
      const std::uint64_t npix =
          static_cast<std::uint64_t>(y1 - y0) * static_cast<std::uint64_t>(x1 - x0);

      std::fill(hist.begin(), hist.end(), 0);
      for (int r = y0; r < y1; ++r)
        for (int c = x0; c < x1; ++c) ++hist[tm.bin_of(image(r, c))];

      // Clip at clip_limit times the uniform level, push the excess back
      // uniformly (remainder goes one count each to the leading bins).
      const double raw_limit = params.clip_limit * static_cast<double>(npix) /
                               static_cast<double>(params.bins);
      const std::uint64_t limit =
          std::max<std::uint64_t>(1, static_cast<std::uint64_t>(raw_limit));
      std::uint64_t excess = 0;
      for (auto& h : hist)
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      const std::uint64_t share = excess / params.bins;
      const std::uint64_t rem = excess % params.bins;
      for (int b = 0; b < params.bins; ++b)
        hist[b] += share + (static_cast<std::uint64_t>(b) < rem ? 1 : 0);

      // Equalize the clipped cdf into the global value range.
      auto& map = tm.maps[static_cast<size_t>(ty) * tm.tiles_x + tx];
      const std::uint64_t span = static_cast<std::uint64_t>(tm.vmax) - tm.vmin;
      std::uint64_t cdf = 0;
      for (int b = 0; b < params.bins; ++b) {
        cdf += hist[b];
        map[b] = static_cast<std::uint16_t>(tm.vmin + cdf * span / npix);
      }
    }
  }
  return tm;
}

namespace {

// Tile center along one axis, in pixel-index coordinates.
double tile_center(int t, int dim, int tiles) {
  const int lo = t * dim / tiles;
  const int hi = (t + 1) * dim / tiles;
  return (lo + hi - 1) / 2.0;
}

// Neighbouring tile pair and blend weight for a pixel coordinate. Pixels at
// or beyond the outermost tile centers use that tile's mapping alone.
void blend_coords(int p, int dim, int tiles, int& t0, int& t1, double& w) {
  t0 = t1 = 0;
  w = 0.0;
  if (tiles == 1 || p <= tile_center(0, dim, tiles)) return;
  if (p >= tile_center(tiles - 1, dim, tiles)) {
    t0 = t1 = tiles - 1;
    return;
  }
  for (int t = 0; t < tiles - 1; ++t) {
    const double c0 = tile_center(t, dim, tiles);
    const double c1 = tile_center(t + 1, dim, tiles);
    if (p >= c0 && p < c1) {
      t0 = t;
      t1 = t + 1;
      w = (p - c0) / (c1 - c0);
      return;
    }
  }
  t0 = t1 = tiles - 1;
}

}  // namespace

Image16 clahe(const Image16& image, const ClaheParams& params) {
  const ClaheTileMaps tm = clahe_tile_maps(image, params);
  if (tm.vmin == tm.vmax) return image;

  const int rows = static_cast<int>(image.rows());
  const int cols = static_cast<int>(image.cols());
  Image16 out(rows, cols);

  std::vector<int> cx0(cols), cx1(cols);
  std::vector<double> wx(cols);
  for (int c = 0; c < cols; ++c) blend_coords(c, cols, tm.tiles_x, cx0[c], cx1[c], wx[c]);

  for (int r = 0; r < rows; ++r) {
    int ty0, ty1;
    double wy;
    blend_coords(r, rows, tm.tiles_y, ty0, ty1, wy);
    for (int c = 0; c < cols; ++c) {
      const int b = tm.bin_of(image(r, c));
      const double top = (1.0 - wx[c]) * tm.maps[static_cast<size_t>(ty0) * tm.tiles_x + cx0[c]][b] +
                         wx[c] * tm.maps[static_cast<size_t>(ty0) * tm.tiles_x + cx1[c]][b];
      const double bot = (1.0 - wx[c]) * tm.maps[static_cast<size_t>(ty1) * tm.tiles_x + cx0[c]][b] +
                         wx[c] * tm.maps[static_cast<size_t>(ty1) * tm.tiles_x + cx1[c]][b];
      out(r, c) = static_cast<std::uint16_t>((1.0 - wy) * top + wy * bot + 0.5);
    }
  }
  return out;
}

namespace {

ImageF normalize_impl(const Eigen::Ref<const Eigen::ArrayXXd>& x) {
  const double mean = x.mean();
  const double var = (x - mean).square().mean();
  const double sd = std::sqrt(var);
  ImageF out(x.rows(), x.cols());
  if (sd < 1e-8) {
    out.setZero();
    return out;
  }
  out = ((x - mean) / sd).cast<float>().matrix();
  return out;
}

}  // namespace

ImageF normalize(const Image16& image) {
  Eigen::ArrayXXd x = image.cast<double>().array();
  return normalize_impl(x);
}

ImageF normalize(const ImageF& image) {
  Eigen::ArrayXXd x = image.cast<double>().array();
  return normalize_impl(x);
}

ImageF resize_bilinear(const ImageF& image, int out_rows, int out_cols) {
  if (out_rows <= 0 || out_cols <= 0)
    fail(ErrorCode::BadShape, "resize target must be positive");
  const int in_rows = static_cast<int>(image.rows());
  const int in_cols = static_cast<int>(image.cols());
  ImageF out(out_rows, out_cols);
  const double sr = static_cast<double>(in_rows) / out_rows;
  const double sc = static_cast<double>(in_cols) / out_cols;
  for (int r = 0; r < out_rows; ++r) {
    double fr = (r + 0.5) * sr - 0.5;
    fr = std::clamp(fr, 0.0, static_cast<double>(in_rows - 1));
    const int r0 = static_cast<int>(std::floor(fr));
    const int r1 = std::min(r0 + 1, in_rows - 1);
    const double wr = fr - r0;
    for (int c = 0; c < out_cols; ++c) {
      double fc = (c + 0.5) * sc - 0.5;
      fc = std::clamp(fc, 0.0, static_cast<double>(in_cols - 1));
      const int c0 = static_cast<int>(std::floor(fc));
      const int c1 = std::min(c0 + 1, in_cols - 1);
      const double wc = fc - c0;
      const double v = (1 - wr) * ((1 - wc) * image(r0, c0) + wc * image(r0, c1)) +
                       wr * ((1 - wc) * image(r1, c0) + wc * image(r1, c1));
      out(r, c) = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace mscan
