#pragma once

#include <array>
#include <string>
#include <vector>

#include "mscan/nn/adamw.hpp"
#include "mscan/nn/layers.hpp"
#include "mscan/nn/loss.hpp"
#include "mscan/nn/tensor.hpp"
#include "mscan/types.hpp"

namespace mscan {

using KeypointSet = std::array<Point2D, kNumLevels>;

// ---------------------------------------------------------------------------
// Double conv block: (conv3x3 -> BN -> ReLU) x2.
// ---------------------------------------------------------------------------
template <typename S>
struct DoubleConv {
  nn::Conv2d<S> conv1, conv2;
  nn::BatchNorm2d<S> bn1, bn2;
  nn::ReLU<S> relu1, relu2;

  DoubleConv() = default;
  DoubleConv(int ci, int co, Rng& rng)
      : conv1(ci, co, 3, rng), conv2(co, co, 3, rng), bn1(co), bn2(co) {}

  nn::Tensor4<S> forward(const nn::Tensor4<S>& x, bool train) {
    auto a = bn1.forward(conv1.forward(x), train);
    a.m = relu1.forward(a.m);
    auto b = bn2.forward(conv2.forward(a), train);
    b.m = relu2.forward(b.m);
    return b;
  }

  nn::Tensor4<S> backward(const nn::Tensor4<S>& dy) {
    nn::Tensor4<S> d = dy;
    d.m = relu2.backward(d.m);
    d = conv2.backward(bn2.backward(d));
    d.m = relu1.backward(d.m);
    return conv1.backward(bn1.backward(d));
  }

  void params(const std::string& p, nn::ParamList<S>& out) {
    conv1.params(p + ".conv1", out);
    bn1.params(p + ".bn1", out);
    conv2.params(p + ".conv2", out);
    bn2.params(p + ".bn2", out);
  }
};

// Channel concat / split along the channel axis.
template <typename S>
nn::Tensor4<S> concat_channels(const nn::Tensor4<S>& a, const nn::Tensor4<S>& b) {
  nn::Tensor4<S> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    for (int ch = 0; ch < a.c; ++ch)
      out.m.row(out.plane_row(i, ch)) = a.m.row(a.plane_row(i, ch));
    for (int ch = 0; ch < b.c; ++ch)
      out.m.row(out.plane_row(i, a.c + ch)) = b.m.row(b.plane_row(i, ch));
  }
  return out;
}

template <typename S>
void split_channels(const nn::Tensor4<S>& d, nn::Tensor4<S>& da, nn::Tensor4<S>& db,
                    int ca) {
  da = nn::Tensor4<S>(d.n, ca, d.h, d.w);
  db = nn::Tensor4<S>(d.n, d.c - ca, d.h, d.w);
  for (int i = 0; i < d.n; ++i) {
    for (int ch = 0; ch < ca; ++ch)
      da.m.row(da.plane_row(i, ch)) = d.m.row(d.plane_row(i, ch));
    for (int ch = 0; ch < d.c - ca; ++ch)
      db.m.row(db.plane_row(i, ch)) = d.m.row(d.plane_row(i, ca + ch));
  }
}

// ---------------------------------------------------------------------------
// Sagittal keypoint net: encoder/decoder with skip connections, four pooling
// stages (inputs must divide by 16), five heatmap channels, softplus output.
// ---------------------------------------------------------------------------
template <typename S>
struct UNet {
  int base = 16;
  DoubleConv<S> enc0, enc1, enc2, enc3, bott;
  nn::MaxPool2<S> pool0, pool1, pool2, pool3;
  struct UpBlock {
    nn::UpsampleNearest2<S> up;
    nn::Conv2d<S> conv;
    nn::BatchNorm2d<S> bn;
    nn::ReLU<S> relu;
    DoubleConv<S> merge;
    UpBlock() = default;
    UpBlock(int ci, int co, Rng& rng)
        : conv(ci, co, 3, rng), bn(co), merge(2 * co, co, rng) {}

    nn::Tensor4<S> forward(const nn::Tensor4<S>& x, const nn::Tensor4<S>& skip,
                           bool train) {
      auto u = bn.forward(conv.forward(up.forward(x)), train);
      u.m = relu.forward(u.m);
      return merge.forward(concat_channels(u, skip), train);
    }
    // dskip is written for the caller to propagate into the encoder path.
    nn::Tensor4<S> backward(const nn::Tensor4<S>& dy, nn::Tensor4<S>& dskip) {
      nn::Tensor4<S> d = merge.backward(dy);
      nn::Tensor4<S> du;
      split_channels(d, du, dskip, conv.co);
      du.m = relu.backward(du.m);
      return up.backward(conv.backward(bn.backward(du)));
    }
    void params(const std::string& p, nn::ParamList<S>& out) {
      conv.params(p + ".conv", out);
      bn.params(p + ".bn", out);
      merge.params(p + ".merge", out);
    }
  };
  UpBlock up3, up2, up1, up0;
  nn::Conv2d<S> head;
  nn::Softplus<S> softplus;

  // forward caches for backward
  nn::Tensor4<S> s0, s1, s2, s3;

  UNet() = default;
  explicit UNet(Rng& rng, int base_ = 16)
      : base(base_),
        enc0(1, base_, rng),
        enc1(base_, 2 * base_, rng),
        enc2(2 * base_, 4 * base_, rng),
        enc3(4 * base_, 8 * base_, rng),
        bott(8 * base_, 16 * base_, rng),
        up3(16 * base_, 8 * base_, rng),
        up2(8 * base_, 4 * base_, rng),
        up1(4 * base_, 2 * base_, rng),
        up0(2 * base_, base_, rng),
        head(base_, kNumLevels, 1, rng) {
    head.b.setConstant(static_cast<S>(-4.0));  // near-zero background at init
  }

  nn::Tensor4<S> forward(const nn::Tensor4<S>& x, bool train) {
    if (x.c != 1) fail(ErrorCode::BadShape, "heatmap net expects one channel");
    if (x.h % 16 != 0 || x.w % 16 != 0)
      fail(ErrorCode::BadShape, "input dims must divide by 16");
    s0 = enc0.forward(x, train);
    s1 = enc1.forward(pool0.forward(s0), train);
    s2 = enc2.forward(pool1.forward(s1), train);
    s3 = enc3.forward(pool2.forward(s2), train);
    auto b = bott.forward(pool3.forward(s3), train);
    auto d = up3.forward(b, s3, train);
    d = up2.forward(d, s2, train);
    d = up1.forward(d, s1, train);
    d = up0.forward(d, s0, train);
    auto y = head.forward(d);
    y.m = softplus.forward(y.m);
    return y;
  }

  nn::Tensor4<S> backward(const nn::Tensor4<S>& dy) {
    nn::Tensor4<S> d = dy;
    d.m = softplus.backward(d.m);
    d = head.backward(d);
    nn::Tensor4<S> dsk0, dsk1, dsk2, dsk3;
    d = up0.backward(d, dsk0);
    d = up1.backward(d, dsk1);
    d = up2.backward(d, dsk2);
    d = up3.backward(d, dsk3);
    d = pool3.backward(bott.backward(d));
    d.m += dsk3.m;
    d = pool2.backward(enc3.backward(d));
    d.m += dsk2.m;
    d = pool1.backward(enc2.backward(d));
    d.m += dsk1.m;
    d = pool0.backward(enc1.backward(d));
    d.m += dsk0.m;
    return enc0.backward(d);
  }

  void params(nn::ParamList<S>& out, const std::string& prefix = "unet") {
    enc0.params(prefix + ".enc0", out);
    enc1.params(prefix + ".enc1", out);
    enc2.params(prefix + ".enc2", out);
    enc3.params(prefix + ".enc3", out);
    bott.params(prefix + ".bott", out);
    up3.params(prefix + ".up3", out);
    up2.params(prefix + ".up2", out);
    up1.params(prefix + ".up1", out);
    up0.params(prefix + ".up0", out);
    head.params(prefix + ".head", out);
  }
};

// Per-channel argmax (ties -> lowest row, then col) refined by the
// background-subtracted intensity centroid over a 5x5 window. A flat window
// keeps the argmax pixel.
template <typename S>
KeypointSet decode_keypoints(const nn::Tensor4<S>& hm, int sample = 0) {
  if (hm.c != kNumLevels) fail(ErrorCode::BadShape, "expected 5 heatmap channels");
  KeypointSet out;
  for (int ch = 0; ch < kNumLevels; ++ch) {
    const auto plane = hm.m.row(hm.plane_row(sample, ch));
    int br = 0, bc = 0;
    S best = plane(0);
    for (int r = 0; r < hm.h; ++r)
      for (int c = 0; c < hm.w; ++c) {
        const S v = plane(static_cast<Eigen::Index>(r) * hm.w + c);
        if (v > best) {
          best = v;
          br = r;
          bc = c;
        }
      }
    const int r0 = std::max(0, br - 2), r1 = std::min(hm.h - 1, br + 2);
    const int c0 = std::max(0, bc - 2), c1 = std::min(hm.w - 1, bc + 2);
    double vmin = static_cast<double>(best);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        vmin = std::min(vmin, static_cast<double>(
                                  plane(static_cast<Eigen::Index>(r) * hm.w + c)));
    double wsum = 0.0, rsum = 0.0, csum = 0.0;
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const double w =
            static_cast<double>(plane(static_cast<Eigen::Index>(r) * hm.w + c)) - vmin;
        wsum += w;
        rsum += w * r;
        csum += w * c;
      }
    if (wsum > 0.0)
      out[ch] = {std::clamp(rsum / wsum, 0.0, hm.h - 1.0),
                 std::clamp(csum / wsum, 0.0, hm.w - 1.0)};
    else
      out[ch] = {static_cast<double>(br), static_cast<double>(bc)};
  }
  return out;
}

// Gaussian target heatmaps (amplitude 1) for supervision.
template <typename S>
nn::Tensor4<S> gaussian_heatmaps(const std::vector<KeypointSet>& keypoints, int h,
                                 int w, double sigma = 3.0) {
  nn::Tensor4<S> t(static_cast<int>(keypoints.size()), kNumLevels, h, w);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (size_t i = 0; i < keypoints.size(); ++i)
    for (int ch = 0; ch < kNumLevels; ++ch) {
      const auto& kp = keypoints[i][ch];
      auto row = t.m.row(t.plane_row(static_cast<int>(i), ch));
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double d2 = (r - kp.row) * (r - kp.row) + (c - kp.col) * (c - kp.col);
          row(static_cast<Eigen::Index>(r) * w + c) = static_cast<S>(std::exp(-d2 * inv));
        }
    }
  return t;
}

// ---------------------------------------------------------------------------
// Axial canal-center regressor: three conv stages, flatten, two linear layers,
// sigmoid to normalized [0,1]^2 coordinates.
// ---------------------------------------------------------------------------
template <typename S>
struct CanalCenterNet {
  int in_h = 32, in_w = 32;
  nn::Conv2d<S> c1, c2, c3;
  nn::BatchNorm2d<S> b1, b2, b3;
  nn::ReLU<S> r1, r2, r3;
  nn::MaxPool2<S> p1, p2, p3;
  nn::Flatten<S> flat;
  nn::Linear<S> fc1, fc2;
  nn::ReLU<S> r4;
  nn::Sigmoid<S> sig;

  CanalCenterNet() = default;
  CanalCenterNet(int in_h_, int in_w_, Rng& rng)
      : in_h(in_h_),
        in_w(in_w_),
        c1(1, 16, 3, rng),
        c2(16, 32, 3, rng),
        c3(32, 64, 3, rng),
        b1(16),
        b2(32),
        b3(64),
        fc1(64 * (in_h_ / 8) * (in_w_ / 8), 64, rng),
        fc2(64, 2, rng) {
    if (in_h_ % 8 != 0 || in_w_ % 8 != 0)
      fail(ErrorCode::BadShape, "canal net input must divide by 8");
  }

  // Normalized (row, col) in [0,1]^2 per sample.
  Mat<S> forward(const nn::Tensor4<S>& x, bool train) {
    if (x.c != 1 || x.h != in_h || x.w != in_w)
      fail(ErrorCode::BadShape, "canal net input shape mismatch");
    auto a = b1.forward(c1.forward(x), train);
    a.m = r1.forward(a.m);
    a = p1.forward(a);
    a = b2.forward(c2.forward(a), train);
    a.m = r2.forward(a.m);
    a = p2.forward(a);
    a = b3.forward(c3.forward(a), train);
    a.m = r3.forward(a.m);
    a = p3.forward(a);
    Mat<S> f = flat.forward(a);
    f = r4.forward(fc1.forward(f));
    return sig.forward(fc2.forward(f));
  }

  void backward(const Mat<S>& dpred) {
    Mat<S> d = sig.backward(dpred);
    d = fc2.backward(d);
    d = r4.backward(d);
    d = fc1.backward(d);
    nn::Tensor4<S> t = flat.backward(d);
    t = p3.backward(t);
    t.m = r3.backward(t.m);
    t = c3.backward(b3.backward(t));
    t = p2.backward(t);
    t.m = r2.backward(t.m);
    t = c2.backward(b2.backward(t));
    t = p1.backward(t);
    t.m = r1.backward(t.m);
    c1.backward(b1.backward(t));
  }

  void params(nn::ParamList<S>& out, const std::string& prefix = "canal") {
    c1.params(prefix + ".c1", out);
    b1.params(prefix + ".b1", out);
    c2.params(prefix + ".c2", out);
    b2.params(prefix + ".b2", out);
    c3.params(prefix + ".c3", out);
    b3.params(prefix + ".b3", out);
    fc1.params(prefix + ".fc1", out);
    fc2.params(prefix + ".fc2", out);
  }
};

// ---------------------------------------------------------------------------
// Training loops (pixel datasets in, loss trajectories out).
// ---------------------------------------------------------------------------
struct FitConfig {
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-4;
  double weight_decay = 1e-2;
  double grad_clip = 1.0;
};

struct TrainLog {
  std::vector<double> loss;      // per epoch
  std::vector<double> accuracy;  // per epoch; empty for regression fits
};

template <typename S>
std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Heatmap regression against per-image keypoint targets.
template <typename S>
TrainLog train_unet(UNet<S>& net, const std::vector<Mat<S>>& images,
                    const std::vector<KeypointSet>& keypoints, const FitConfig& cfg,
                    Rng& rng, double sigma = 3.0) {
  if (images.empty()) fail(ErrorCode::EmptyDataset, "no training images");
  if (images.size() != keypoints.size())
    fail(ErrorCode::BadShape, "image/keypoint count mismatch");

  nn::ParamList<S> params;
  net.params(params);
  nn::AdamW<S> opt(cfg.lr, cfg.weight_decay);
  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices<S>(images.size(), rng);
    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Mat<S>> batch;
      std::vector<KeypointSet> kp;
      for (size_t i = start; i < stop; ++i) {
        batch.push_back(images[order[i]]);
        kp.push_back(keypoints[order[i]]);
      }
      const auto x = nn::Tensor4<S>::from_images(batch);
      const auto target = gaussian_heatmaps<S>(kp, x.h, x.w, sigma);
      nn::zero_grads(params);
      auto pred = net.forward(x, true);
      const auto res = nn::mse(pred.m, target.m);
      nn::Tensor4<S> dpred = pred;
      dpred.m = res.dpred;
      net.backward(dpred);
      nn::clip_grad_norm(params, cfg.grad_clip);
      opt.step(params);
      epoch_loss += static_cast<double>(res.loss) * static_cast<double>(stop - start);
      seen += stop - start;
    }
    log.loss.push_back(epoch_loss / static_cast<double>(seen));
  }
  return log;
}

// Canal-center regression on normalized coordinates.
template <typename S>
TrainLog train_canal_center(CanalCenterNet<S>& net, const std::vector<Mat<S>>& images,
                            const Mat<S>& targets01, const FitConfig& cfg, Rng& rng) {
  if (images.empty()) fail(ErrorCode::EmptyDataset, "no training images");
  nn::ParamList<S> params;
  net.params(params);
  nn::AdamW<S> opt(cfg.lr, cfg.weight_decay);
  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices<S>(images.size(), rng);
    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Mat<S>> batch;
      Mat<S> y(stop - start, 2);
      for (size_t i = start; i < stop; ++i) {
        batch.push_back(images[order[i]]);
        y.row(static_cast<Eigen::Index>(i - start)) =
            targets01.row(static_cast<Eigen::Index>(order[i]));
      }
      nn::zero_grads(params);
      const Mat<S> pred = net.forward(nn::Tensor4<S>::from_images(batch), true);
      const auto res = nn::mse(pred, y);
      net.backward(res.dpred);
      nn::clip_grad_norm(params, cfg.grad_clip);
      opt.step(params);
      epoch_loss += static_cast<double>(res.loss) * static_cast<double>(stop - start);
      seen += stop - start;
    }
    log.loss.push_back(epoch_loss / static_cast<double>(seen));
  }
  return log;
}

}  // namespace mscan
