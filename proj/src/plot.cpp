#include "mscan/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <zlib.h>

#include "mscan/error.hpp"
#include "mscan/trainer.hpp"

namespace mscan {

Canvas::Canvas(int w, int h, std::array<std::uint8_t, 3> bg)
    : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3) {
  for (size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = bg[0];
    rgb[i + 1] = bg[1];
    rgb[i + 2] = bg[2];
  }
}

void Canvas::set(int x, int y, std::array<std::uint8_t, 3> c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const size_t i = (static_cast<size_t>(y) * width + x) * 3;
  rgb[i] = c[0];
  rgb[i + 1] = c[1];
  rgb[i + 2] = c[2];
}

void Canvas::line(int x0, int y0, int x1, int y1, std::array<std::uint8_t, 3> c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

namespace {

void put_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

void write_chunk(std::ofstream& out, const char type[4],
                 const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> hdr;
  put_be32(hdr, static_cast<std::uint32_t>(data.size()));
  out.write(reinterpret_cast<const char*>(hdr.data()), 4);
  out.write(type, 4);
  if (!data.empty())
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
  std::uint32_t crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  std::vector<std::uint8_t> tail;
  put_be32(tail, crc);
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const Canvas& canvas, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(canvas.width));
  put_be32(ihdr, static_cast<std::uint32_t>(canvas.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);   // deflate
  ihdr.push_back(0);   // filter method
  ihdr.push_back(0);   // no interlace
  write_chunk(out, "IHDR", ihdr);

  // one filter byte (0 = none) per scanline
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<size_t>(canvas.height) * (canvas.width * 3 + 1));
  for (int y = 0; y < canvas.height; ++y) {
    raw.push_back(0);
    const size_t off = static_cast<size_t>(y) * canvas.width * 3;
    raw.insert(raw.end(), canvas.rgb.begin() + static_cast<long>(off),
               canvas.rgb.begin() + static_cast<long>(off + canvas.width * 3));
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    fail(ErrorCode::IoError, "png compression failed");
  compressed.resize(bound);
  write_chunk(out, "IDAT", compressed);
  write_chunk(out, "IEND", {});
}

namespace {

constexpr int kPlotW = 640, kPlotH = 480, kMargin = 48;
constexpr std::array<std::uint8_t, 3> kAxis{40, 40, 40};
constexpr std::array<std::uint8_t, 3> kGrid{220, 220, 220};
constexpr std::array<std::array<std::uint8_t, 3>, 4> kSeries{
    {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}}};

struct Frame {
  Canvas canvas{kPlotW, kPlotH};
  double x0, x1, y0, y1;

  Frame(double x0_, double x1_, double y0_, double y1_)
      : x0(x0_), x1(x1_), y0(y0_), y1(y1_) {
    for (int i = 1; i < 10; ++i) {
      const int gx = kMargin + i * (kPlotW - 2 * kMargin) / 10;
      const int gy = kMargin + i * (kPlotH - 2 * kMargin) / 10;
      canvas.line(gx, kMargin, gx, kPlotH - kMargin, kGrid);
      canvas.line(kMargin, gy, kPlotW - kMargin, gy, kGrid);
    }
    canvas.line(kMargin, kMargin, kMargin, kPlotH - kMargin, kAxis);
    canvas.line(kMargin, kPlotH - kMargin, kPlotW - kMargin, kPlotH - kMargin, kAxis);
  }

  int px(double x) const {
    const double t = (x - x0) / (x1 - x0 + 1e-300);
    return kMargin + static_cast<int>(t * (kPlotW - 2 * kMargin));
  }
  int py(double y) const {
    const double t = (y - y0) / (y1 - y0 + 1e-300);
    return kPlotH - kMargin - static_cast<int>(t * (kPlotH - 2 * kMargin));
  }

  void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                std::array<std::uint8_t, 3> c) {
    for (size_t i = 1; i < xs.size(); ++i)
      canvas.line(px(xs[i - 1]), py(ys[i - 1]), px(xs[i]), py(ys[i]), c);
  }
};

std::vector<std::vector<double>> read_csv_columns(const std::filesystem::path& path,
                                                  size_t* n_cols) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::string line;
  std::getline(in, line);  // header
  *n_cols = static_cast<size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<std::vector<double>> cols(*n_cols);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t pos = 0;
    for (size_t c = 0; c < *n_cols; ++c) {
      const size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos
                                                    ? std::string::npos
                                                    : comma - pos);
      cols[c].push_back(std::stod(cell));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  return cols;
}

// TPR/FPR sweep for one score column; scores descending.
void roc_points(const std::vector<double>& scores, const std::vector<int>& labels,
                std::vector<double>& fpr, std::vector<double>& tpr) {
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  double n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg) += 1;
  fpr = {0.0};
  tpr = {0.0};
  double tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (size_t k = i; k <= j; ++k) (labels[order[k]] ? tp : fp) += 1;
    fpr.push_back(n_neg > 0 ? fp / n_neg : 0.0);
    tpr.push_back(n_pos > 0 ? tp / n_pos : 0.0);
    i = j + 1;
  }
}

}  // namespace

void plot_training_curves(const std::filesystem::path& log_csv,
                          const std::filesystem::path& out_png) {
  size_t n_cols = 0;
  const auto cols = read_csv_columns(log_csv, &n_cols);
  if (n_cols < 2 || cols[0].empty())
    fail(ErrorCode::IoError, log_csv.string() + ": no rows to plot");
  const double loss_max = *std::max_element(cols[1].begin(), cols[1].end());
  Frame frame(0.0, std::max(1.0, cols[0].back()), 0.0, std::max(1e-12, loss_max));
  frame.polyline(cols[0], cols[1], kSeries[0]);
  if (n_cols >= 3) {
    // accuracy rescaled onto the loss axis
    std::vector<double> acc(cols[2].size());
    for (size_t i = 0; i < acc.size(); ++i) acc[i] = cols[2][i] * loss_max;
    frame.polyline(cols[0], acc, kSeries[1]);
  }
  write_png(frame.canvas, out_png);
}

void plot_roc(const std::filesystem::path& scores_csv,
              const std::filesystem::path& out_png) {
  const auto rows = read_scores_csv(scores_csv);
  if (rows.empty()) fail(ErrorCode::IoError, scores_csv.string() + ": no rows");
  Frame frame(0.0, 1.0, 0.0, 1.0);
  frame.canvas.line(frame.px(0), frame.py(0), frame.px(1), frame.py(1), kGrid);

  for (int cls = 0; cls < kNumGrades; ++cls) {
    std::vector<double> s;
    std::vector<int> l;
    for (const auto& r : rows) {
      s.push_back(r.prob[static_cast<size_t>(cls)]);
      l.push_back(r.grade == cls ? 1 : 0);
    }
    std::vector<double> fpr, tpr;
    roc_points(s, l, fpr, tpr);
    frame.polyline(fpr, tpr, kSeries[static_cast<size_t>(cls)]);
  }
  std::vector<double> s, fpr, tpr;
  std::vector<int> l;
  for (const auto& r : rows) {
    s.push_back(r.prob[1] + r.prob[2]);
    l.push_back(r.grade > 0 ? 1 : 0);
  }
  roc_points(s, l, fpr, tpr);
  frame.polyline(fpr, tpr, kSeries[3]);
  write_png(frame.canvas, out_png);
}

}  // namespace mscan
