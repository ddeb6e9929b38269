#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mscan/nn/params.hpp"
#include "mscan/nn/tensor.hpp"
#include "mscan/rng.hpp"

namespace mscan::nn {

template <typename S>
S uniform_bound(Rng& rng, double bound) {
  return static_cast<S>(rng.uniform(-bound, bound));
}

template <typename S>
void init_uniform(Mat<S>& m, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform_bound<S>(rng, bound);
}

template <typename S>
void init_uniform(Vec<S>& v, Rng& rng, double bound) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = uniform_bound<S>(rng, bound);
}

// ---------------------------------------------------------------------------
// Fully connected layer: y = x W^T + b, x is (B, in).
// ---------------------------------------------------------------------------
template <typename S>
struct Linear {
  int in = 0, out = 0;
  Mat<S> W, gW;
  Vec<S> b, gb;
  Mat<S> x_cache;

  Linear() = default;
  Linear(int in_, int out_, Rng& rng) : in(in_), out(out_) {
    W.resize(out, in);
    gW = Mat<S>::Zero(out, in);
    b = Vec<S>::Zero(out);
    gb = Vec<S>::Zero(out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(W, rng, bound);
    init_uniform(b, rng, bound);
  }

  Mat<S> forward(const Mat<S>& x, bool cache = true) {
    if (x.cols() != in) fail(ErrorCode::BadShape, "linear input width mismatch");
    if (cache) x_cache = x;
    Mat<S> y = x * W.transpose();
    y.rowwise() += b.transpose();
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) {
    gW.noalias() += dy.transpose() * x_cache;
    gb.noalias() += dy.colwise().sum().transpose();
    return dy * W;
  }

  void params(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix + ".W", W, gW);
    add_param(out, prefix + ".b", b, gb);
  }
};

// ---------------------------------------------------------------------------
// 2D convolution, stride 1, square kernel, zero padding k/2 (shape-preserving).
// One im2col GEMM covers the whole batch; backward rebuilds the patch matrix
// from the cached input instead of caching it.
// ---------------------------------------------------------------------------
template <typename S>
struct Conv2d {
  int ci = 0, co = 0, k = 3, pad = 1;
  Mat<S> W, gW;  // (co, ci*k*k)
  Vec<S> b, gb;
  Tensor4<S> x_cache;

  Conv2d() = default;
  Conv2d(int ci_, int co_, int k_, Rng& rng) : ci(ci_), co(co_), k(k_), pad(k_ / 2) {
    W.resize(co, ci * k * k);
    gW = Mat<S>::Zero(co, ci * k * k);
    b = Vec<S>::Zero(co);
    gb = Vec<S>::Zero(co);
    const double bound = 1.0 / std::sqrt(static_cast<double>(ci) * k * k);
    init_uniform(W, rng, bound);
    init_uniform(b, rng, bound);
  }

  Mat<S> im2col(const Tensor4<S>& x) const {
    const Eigen::Index howo = static_cast<Eigen::Index>(x.h) * x.w;
    Mat<S> K = Mat<S>::Zero(static_cast<Eigen::Index>(ci) * k * k,
                            static_cast<Eigen::Index>(x.n) * howo);
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < ci; ++ch) {
        const auto plane = x.m.row(x.plane_row(i, ch));
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) {
            const Eigen::Index krow =
                (static_cast<Eigen::Index>(ch) * k + dy) * k + dx;
            for (int r = 0; r < x.h; ++r) {
              const int sr = r + dy - pad;
              if (sr < 0 || sr >= x.h) continue;
              const int c_lo = std::max(0, pad - dx);
              const int c_hi = std::min(x.w, x.w + pad - dx);
              if (c_lo >= c_hi) continue;
              K.row(krow).segment(i * howo + static_cast<Eigen::Index>(r) * x.w + c_lo,
                                  c_hi - c_lo) =
                  plane.segment(static_cast<Eigen::Index>(sr) * x.w + (c_lo + dx - pad),
                                c_hi - c_lo);
            }
          }
      }
    return K;
  }

  Tensor4<S> forward(const Tensor4<S>& x, bool cache = true) {
    if (x.c != ci) fail(ErrorCode::BadShape, "conv input channels mismatch");
    if (cache) x_cache = x;
    const Eigen::Index howo = static_cast<Eigen::Index>(x.h) * x.w;
    const Mat<S> K = im2col(x);
    Mat<S> Y = W * K;  // (co, n*howo)
    Tensor4<S> out(x.n, co, x.h, x.w);
    for (int i = 0; i < x.n; ++i)
      for (int oc = 0; oc < co; ++oc)
        out.m.row(out.plane_row(i, oc)) =
            Y.row(oc).segment(i * howo, howo).array() + b(oc);
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& dy) {
    const Tensor4<S>& x = x_cache;
    const Eigen::Index howo = static_cast<Eigen::Index>(x.h) * x.w;
    Mat<S> dY(co, static_cast<Eigen::Index>(x.n) * howo);
    for (int i = 0; i < x.n; ++i)
      for (int oc = 0; oc < co; ++oc)
        dY.row(oc).segment(i * howo, howo) = dy.m.row(dy.plane_row(i, oc));

    const Mat<S> K = im2col(x);
    gW.noalias() += dY * K.transpose();
    gb.noalias() += dY.rowwise().sum();

    const Mat<S> dK = W.transpose() * dY;  // (ci*k*k, n*howo)
    Tensor4<S> dx(x.n, ci, x.h, x.w);
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < ci; ++ch) {
        auto plane = dx.m.row(dx.plane_row(i, ch));
        for (int dyk = 0; dyk < k; ++dyk)
          for (int dxk = 0; dxk < k; ++dxk) {
            const Eigen::Index krow =
                (static_cast<Eigen::Index>(ch) * k + dyk) * k + dxk;
            for (int r = 0; r < x.h; ++r) {
              const int sr = r + dyk - pad;
              if (sr < 0 || sr >= x.h) continue;
              const int c_lo = std::max(0, pad - dxk);
              const int c_hi = std::min(x.w, x.w + pad - dxk);
              if (c_lo >= c_hi) continue;
              plane.segment(static_cast<Eigen::Index>(sr) * x.w + (c_lo + dxk - pad),
                            c_hi - c_lo) +=
                  dK.row(krow).segment(
                      i * howo + static_cast<Eigen::Index>(r) * x.w + c_lo,
                      c_hi - c_lo);
            }
          }
      }
    return dx;
  }

  void params(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix + ".W", W, gW);
    add_param(out, prefix + ".b", b, gb);
  }
};

// ---------------------------------------------------------------------------
// Batch normalization over (n, h, w) per channel.
// ---------------------------------------------------------------------------
template <typename S>
struct BatchNorm2d {
  int c = 0;
  double eps = 1e-5, momentum = 0.1;
  Vec<S> gamma, beta, ggamma, gbeta;
  Vec<S> running_mean, running_var;
  // caches
  Tensor4<S> xhat;
  Vec<S> invstd;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c_) : c(c_) {
    gamma = Vec<S>::Ones(c);
    beta = Vec<S>::Zero(c);
    ggamma = Vec<S>::Zero(c);
    gbeta = Vec<S>::Zero(c);
    running_mean = Vec<S>::Zero(c);
    running_var = Vec<S>::Ones(c);
  }

  Tensor4<S> forward(const Tensor4<S>& x, bool train) {
    if (x.c != c) fail(ErrorCode::BadShape, "batchnorm channels mismatch");
    Tensor4<S> out(x.n, x.c, x.h, x.w);
    if (train) {
      xhat = Tensor4<S>(x.n, x.c, x.h, x.w);
      invstd.resize(c);
      const double count = static_cast<double>(x.n) * x.h * x.w;
      for (int ch = 0; ch < c; ++ch) {
        S mean = 0, sq = 0;
        for (int i = 0; i < x.n; ++i) {
          mean += x.m.row(x.plane_row(i, ch)).sum();
          sq += x.m.row(x.plane_row(i, ch)).squaredNorm();
        }
        mean /= static_cast<S>(count);
        const S var = sq / static_cast<S>(count) - mean * mean;
        const S istd = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
        invstd(ch) = istd;
        running_mean(ch) = static_cast<S>((1 - momentum) * running_mean(ch) + momentum * mean);
        running_var(ch) = static_cast<S>((1 - momentum) * running_var(ch) + momentum * var);
        for (int i = 0; i < x.n; ++i) {
          xhat.m.row(xhat.plane_row(i, ch)) =
              ((x.m.row(x.plane_row(i, ch)).array() - mean) * istd).matrix();
          out.m.row(out.plane_row(i, ch)) =
              (xhat.m.row(xhat.plane_row(i, ch)).array() * gamma(ch) + beta(ch))
                  .matrix();
        }
      }
    } else {
      for (int ch = 0; ch < c; ++ch) {
        const S istd = static_cast<S>(
            1.0 / std::sqrt(static_cast<double>(running_var(ch)) + eps));
        for (int i = 0; i < x.n; ++i)
          out.m.row(out.plane_row(i, ch)) =
              ((x.m.row(x.plane_row(i, ch)).array() - running_mean(ch)) * istd *
                   gamma(ch) +
               beta(ch))
                  .matrix();
      }
    }
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& dy) {
    const double count = static_cast<double>(dy.n) * dy.h * dy.w;
    Tensor4<S> dx(dy.n, dy.c, dy.h, dy.w);
    for (int ch = 0; ch < c; ++ch) {
      S sum_dy = 0, sum_dy_xhat = 0;
      for (int i = 0; i < dy.n; ++i) {
        sum_dy += dy.m.row(dy.plane_row(i, ch)).sum();
        sum_dy_xhat += dy.m.row(dy.plane_row(i, ch))
                           .cwiseProduct(xhat.m.row(xhat.plane_row(i, ch)))
                           .sum();
      }
      ggamma(ch) += sum_dy_xhat;
      gbeta(ch) += sum_dy;
      const S scale = gamma(ch) * invstd(ch) / static_cast<S>(count);
      for (int i = 0; i < dy.n; ++i)
        dx.m.row(dx.plane_row(i, ch)) =
            (scale *
             (static_cast<S>(count) * dy.m.row(dy.plane_row(i, ch)).array() -
              sum_dy - xhat.m.row(xhat.plane_row(i, ch)).array() * sum_dy_xhat))
                .matrix();
    }
    return dx;
  }

  void params(const std::string& prefix, ParamList<S>& out) {
    add_param(out, prefix + ".gamma", gamma, ggamma);
    add_param(out, prefix + ".beta", beta, gbeta);
    add_param(out, prefix + ".running_mean", running_mean, running_mean, false);
    add_param(out, prefix + ".running_var", running_var, running_var, false);
  }
};

// ---------------------------------------------------------------------------
// Elementwise activations on raw matrices (tensor callers pass .m).
// ---------------------------------------------------------------------------
template <typename S>
struct ReLU {
  Mat<S> mask;
  Mat<S> forward(const Mat<S>& x) {
    mask = (x.array() > S(0)).template cast<S>().matrix();
    return x.cwiseProduct(mask);
  }
  Mat<S> backward(const Mat<S>& dy) const { return dy.cwiseProduct(mask); }
};

template <typename S>
Mat<S> sigmoid(const Mat<S>& x) {
  return ((-x.array()).exp() + S(1)).inverse().matrix();
}

template <typename S>
struct Sigmoid {
  Mat<S> y;
  Mat<S> forward(const Mat<S>& x) {
    y = sigmoid(x);
    return y;
  }
  Mat<S> backward(const Mat<S>& dy) const {
    return (dy.array() * y.array() * (S(1) - y.array())).matrix();
  }
};

template <typename S>
struct Softplus {
  Mat<S> x_cache;
  Mat<S> forward(const Mat<S>& x) {
    x_cache = x;
    // log1p(exp(x)) with the standard overflow guard.
    return x.unaryExpr([](S v) {
      if (v > S(30)) return v;
      return static_cast<S>(std::log1p(std::exp(static_cast<double>(v))));
    });
  }
  Mat<S> backward(const Mat<S>& dy) const {
    return dy.cwiseProduct(sigmoid(x_cache));
  }
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2; argmax positions cached for backward.
// ---------------------------------------------------------------------------
template <typename S>
struct MaxPool2 {
  Tensor4<S> x_cache;
  std::vector<Eigen::Index> argmax;  // per output element, input column index

  Tensor4<S> forward(const Tensor4<S>& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
      fail(ErrorCode::BadShape, "maxpool needs even spatial dims");
    x_cache = x;
    const int ho = x.h / 2, wo = x.w / 2;
    Tensor4<S> out(x.n, x.c, ho, wo);
    argmax.assign(static_cast<size_t>(out.m.rows()) * out.m.cols(), 0);
    for (Eigen::Index row = 0; row < x.m.rows(); ++row) {
      for (int r = 0; r < ho; ++r)
        for (int c = 0; c < wo; ++c) {
          const Eigen::Index base = static_cast<Eigen::Index>(2 * r) * x.w + 2 * c;
          const Eigen::Index cand[4] = {base, base + 1, base + x.w, base + x.w + 1};
          Eigen::Index best = cand[0];
          S bv = x.m(row, cand[0]);
          for (int q = 1; q < 4; ++q)
            if (x.m(row, cand[q]) > bv) {
              bv = x.m(row, cand[q]);
              best = cand[q];
            }
          out.m(row, static_cast<Eigen::Index>(r) * wo + c) = bv;
          argmax[static_cast<size_t>(row) * out.m.cols() +
                 static_cast<Eigen::Index>(r) * wo + c] = best;
        }
    }
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& dy) {
    Tensor4<S> dx(x_cache.n, x_cache.c, x_cache.h, x_cache.w);
    for (Eigen::Index row = 0; row < dy.m.rows(); ++row)
      for (Eigen::Index j = 0; j < dy.m.cols(); ++j)
        dx.m(row, argmax[static_cast<size_t>(row) * dy.m.cols() + j]) += dy.m(row, j);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x upsampling.
// ---------------------------------------------------------------------------
template <typename S>
struct UpsampleNearest2 {
  int h_in = 0, w_in = 0;

  Tensor4<S> forward(const Tensor4<S>& x) {
    h_in = x.h;
    w_in = x.w;
    Tensor4<S> out(x.n, x.c, 2 * x.h, 2 * x.w);
    for (Eigen::Index row = 0; row < x.m.rows(); ++row)
      for (int r = 0; r < x.h; ++r)
        for (int c = 0; c < x.w; ++c) {
          const S v = x.m(row, static_cast<Eigen::Index>(r) * x.w + c);
          const Eigen::Index o = static_cast<Eigen::Index>(2 * r) * (2 * x.w) + 2 * c;
          out.m(row, o) = v;
          out.m(row, o + 1) = v;
          out.m(row, o + 2 * x.w) = v;
          out.m(row, o + 2 * x.w + 1) = v;
        }
    return out;
  }

  Tensor4<S> backward(const Tensor4<S>& dy) {
    Tensor4<S> dx(dy.n, dy.c, h_in, w_in);
    for (Eigen::Index row = 0; row < dy.m.rows(); ++row)
      for (int r = 0; r < h_in; ++r)
        for (int c = 0; c < w_in; ++c) {
          const Eigen::Index o = static_cast<Eigen::Index>(2 * r) * (2 * w_in) + 2 * c;
          dx.m(row, static_cast<Eigen::Index>(r) * w_in + c) =
              dy.m(row, o) + dy.m(row, o + 1) + dy.m(row, o + 2 * w_in) +
              dy.m(row, o + 2 * w_in + 1);
        }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Global average pool (n,c,h,w) -> (n,c) and flatten (n,c,h,w) -> (n,c*h*w).
// ---------------------------------------------------------------------------
template <typename S>
struct GlobalAvgPool {
  int c = 0, h = 0, w = 0;
  Mat<S> forward(const Tensor4<S>& x) {
    c = x.c;
    h = x.h;
    w = x.w;
    Mat<S> out(x.n, x.c);
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < x.c; ++ch)
        out(i, ch) = x.m.row(x.plane_row(i, ch)).mean();
    return out;
  }
  Tensor4<S> backward(const Mat<S>& dy) const {
    Tensor4<S> dx(static_cast<int>(dy.rows()), c, h, w);
    const S scale = S(1) / static_cast<S>(h * w);
    for (int i = 0; i < dx.n; ++i)
      for (int ch = 0; ch < c; ++ch)
        dx.m.row(dx.plane_row(i, ch)).setConstant(dy(i, ch) * scale);
    return dx;
  }
};

template <typename S>
struct Flatten {
  int c = 0, h = 0, w = 0;
  Mat<S> forward(const Tensor4<S>& x) {
    c = x.c;
    h = x.h;
    w = x.w;
    const Eigen::Index hw = static_cast<Eigen::Index>(x.h) * x.w;
    Mat<S> out(x.n, static_cast<Eigen::Index>(x.c) * hw);
    for (int i = 0; i < x.n; ++i)
      for (int ch = 0; ch < x.c; ++ch)
        out.row(i).segment(static_cast<Eigen::Index>(ch) * hw, hw) =
            x.m.row(x.plane_row(i, ch));
    return out;
  }
  Tensor4<S> backward(const Mat<S>& dy) const {
    Tensor4<S> dx(static_cast<int>(dy.rows()), c, h, w);
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    for (int i = 0; i < dx.n; ++i)
      for (int ch = 0; ch < c; ++ch)
        dx.m.row(dx.plane_row(i, ch)) =
            dy.row(i).segment(static_cast<Eigen::Index>(ch) * hw, hw);
    return dx;
  }
};

// Row-wise softmax with max subtraction.
template <typename S>
Mat<S> softmax_rows(const Mat<S>& x) {
  Mat<S> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S mx = x.row(i).maxCoeff();
    Eigen::Array<S, 1, Eigen::Dynamic> e = (x.row(i).array() - mx).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return out;
}

}  // namespace mscan::nn
