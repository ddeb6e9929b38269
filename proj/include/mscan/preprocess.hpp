#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mscan/error.hpp"
#include "mscan/types.hpp"

namespace mscan {

struct CropSpec {
  Point2D center;
  int height = 128;
  int width = 128;
  std::uint16_t pad_value = 0;
};

struct ClaheParams {
  double clip_limit = 2.0;  // relative to the uniform bin level; >= 1
  int tiles_y = 8;
  int tiles_x = 8;
  int bins = 256;
};

// Axis-aligned window around spec.center; the center lands on output pixel
// (h/2, w/2) after integer floor. Out-of-bounds pixels read as pad_value, so
// the output shape is always (height, width).
Image16 crop(const Image16& image, const CropSpec& spec);

// Contrast-limited adaptive histogram equalization on u16 data. Tile grids
// partition the image evenly (edge tiles absorb the remainder); per-tile
// clipped histograms are equalized into the global [min, max] value range and
// pixels are bilinearly blended between the four surrounding tile mappings.
// Integer tile mappings make results exactly reproducible.
Image16 clahe(const Image16& image, const ClaheParams& params = {});

// The per-tile value mapping tables (tiles_y*tiles_x rows, bins cols), plus
// the bin assignment of any value; exposed so the mapping's monotonicity is
// directly testable.
struct ClaheTileMaps {
  int tiles_y = 0;
  int tiles_x = 0;
  int bins = 0;
  std::uint16_t vmin = 0;
  std::uint16_t vmax = 0;
  std::vector<std::vector<std::uint16_t>> maps;  // [tile][bin]
  int bin_of(std::uint16_t v) const;
};
ClaheTileMaps clahe_tile_maps(const Image16& image, const ClaheParams& params = {});

// (x - mean) / std with the population std; degenerate std (< 1e-8) maps the
// whole image to zeros.
ImageF normalize(const Image16& image);
ImageF normalize(const ImageF& image);

// align_corners=false bilinear resampling.
ImageF resize_bilinear(const ImageF& image, int out_rows, int out_cols);

}  // namespace mscan
