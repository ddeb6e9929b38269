#pragma once

#include <vector>

#include "mscan/error.hpp"
#include "mscan/types.hpp"

namespace mscan::nn {

// Batched image tensor (n, c, h, w) backed by one row-major matrix of shape
// (n*c, h*w): row i*c+ch is the contiguous plane of sample i, channel ch.
template <typename S>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  Mat<S> m;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), m(Mat<S>::Zero(static_cast<Eigen::Index>(n_) * c_,
                                                   static_cast<Eigen::Index>(h_) * w_)) {}

  Eigen::Index plane_row(int i, int ch) const {
    return static_cast<Eigen::Index>(i) * c + ch;
  }

  S& at(int i, int ch, int r, int col) {
    return m(plane_row(i, ch), static_cast<Eigen::Index>(r) * w + col);
  }
  S at(int i, int ch, int r, int col) const {
    return m(plane_row(i, ch), static_cast<Eigen::Index>(r) * w + col);
  }

  bool same_shape(const Tensor4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  static Tensor4 from_images(const std::vector<Mat<S>>& images) {
    if (images.empty()) fail(ErrorCode::EmptyDataset, "no images");
    Tensor4 t(static_cast<int>(images.size()), 1,
              static_cast<int>(images[0].rows()), static_cast<int>(images[0].cols()));
    for (size_t i = 0; i < images.size(); ++i) {
      if (images[i].rows() != t.h || images[i].cols() != t.w)
        fail(ErrorCode::BadShape, "ragged image batch");
      t.m.row(static_cast<Eigen::Index>(i)) =
          Eigen::Map<const Vec<S>>(images[i].data(), images[i].size()).transpose();
    }
    return t;
  }
};

// A sequence of T batch matrices, each (B, D); the level axis is the sequence.
template <typename S>
using Seq = std::vector<Mat<S>>;

template <typename S>
void check_seq(const Seq<S>& x, const char* what) {
  if (x.empty()) fail(ErrorCode::BadShape, std::string(what) + ": empty sequence");
  for (const auto& step : x)
    if (step.rows() != x[0].rows() || step.cols() != x[0].cols())
      fail(ErrorCode::BadShape, std::string(what) + ": ragged sequence");
}

}  // namespace mscan::nn
