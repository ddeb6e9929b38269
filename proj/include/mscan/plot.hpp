#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace mscan {

// Minimal RGB raster with polyline drawing, written out as an 8-bit PNG.
struct Canvas {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Canvas(int w, int h, std::array<std::uint8_t, 3> bg = {255, 255, 255});
  void set(int x, int y, std::array<std::uint8_t, 3> c);
  void line(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c);
};

void write_png(const Canvas& canvas, const std::filesystem::path& path);

// Loss/accuracy curves from a training log csv (epoch,loss[,accuracy]).
void plot_training_curves(const std::filesystem::path& log_csv,
                          const std::filesystem::path& out_png);

// ROC curves from an eval scores csv: one-vs-rest per grade plus the binary
// NormalMild-vs-rest curve.
void plot_roc(const std::filesystem::path& scores_csv,
              const std::filesystem::path& out_png);

}  // namespace mscan
