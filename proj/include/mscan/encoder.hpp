#pragma once

#include <string>
#include <vector>

#include "mscan/localization.hpp"
#include "mscan/nn/adamw.hpp"
#include "mscan/nn/layers.hpp"
#include "mscan/nn/loss.hpp"

namespace mscan {

inline constexpr int kEmbedDim = 512;

// Crop embedder: four conv stages with pooling, global average pool, and a
// projection that pins the embedding width to 512 for any stage widths. The
// 3-way classifier head is used only for pretraining.
template <typename S>
struct CropEncoder {
  int in_h = 32, in_w = 32;
  std::array<int, 4> widths{16, 32, 64, 128};
  nn::Conv2d<S> c1, c2, c3, c4;
  nn::BatchNorm2d<S> b1, b2, b3, b4;
  nn::ReLU<S> r1, r2, r3, r4;
  nn::MaxPool2<S> p1, p2, p3, p4;
  nn::GlobalAvgPool<S> gap;
  nn::Linear<S> proj;  // widths[3] -> 512
  nn::Linear<S> head;  // 512 -> 3
  bool frozen = false;

  CropEncoder() = default;
  CropEncoder(int in_h_, int in_w_, Rng& rng, std::array<int, 4> widths_ = {16, 32, 64, 128})
      : in_h(in_h_),
        in_w(in_w_),
        widths(widths_),
        c1(1, widths_[0], 3, rng),
        c2(widths_[0], widths_[1], 3, rng),
        c3(widths_[1], widths_[2], 3, rng),
        c4(widths_[2], widths_[3], 3, rng),
        b1(widths_[0]),
        b2(widths_[1]),
        b3(widths_[2]),
        b4(widths_[3]),
        proj(widths_[3], kEmbedDim, rng),
        head(kEmbedDim, kNumGrades, rng) {
    if (in_h_ % 16 != 0 || in_w_ % 16 != 0)
      fail(ErrorCode::BadShape, "encoder input must divide by 16");
  }

  // (B,1,h,w) -> (B,512)
  Mat<S> encode(const nn::Tensor4<S>& x, bool train) {
    if (x.c != 1 || x.h != in_h || x.w != in_w)
      fail(ErrorCode::BadShape, "encoder input shape mismatch");
    auto a = b1.forward(c1.forward(x), train);
    a.m = r1.forward(a.m);
    a = p1.forward(a);
    a = b2.forward(c2.forward(a), train);
    a.m = r2.forward(a.m);
    a = p2.forward(a);
    a = b3.forward(c3.forward(a), train);
    a.m = r3.forward(a.m);
    a = p3.forward(a);
    a = b4.forward(c4.forward(a), train);
    a.m = r4.forward(a.m);
    a = p4.forward(a);
    return proj.forward(gap.forward(a));
  }

  Mat<S> forward_logits(const nn::Tensor4<S>& x, bool train) {
    return head.forward(encode(x, train));
  }

  void backward_logits(const Mat<S>& dlogits) {
    backward_embedding(head.backward(dlogits));
  }

  void backward_embedding(const Mat<S>& demb) {
    nn::Tensor4<S> t = gap.backward(proj.backward(demb));
    t = p4.backward(t);
    t.m = r4.backward(t.m);
    t = c4.backward(b4.backward(t));
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

  void params(nn::ParamList<S>& out, const std::string& prefix = "encoder") {
    c1.params(prefix + ".c1", out);
    b1.params(prefix + ".b1", out);
    c2.params(prefix + ".c2", out);
    b2.params(prefix + ".b2", out);
    c3.params(prefix + ".c3", out);
    b3.params(prefix + ".b3", out);
    c4.params(prefix + ".c4", out);
    b4.params(prefix + ".b4", out);
    proj.params(prefix + ".proj", out);
    head.params(prefix + ".head", out);
  }
};

// Supervised pretraining on 3-class crop labels with the weighted loss.
template <typename S>
TrainLog pretrain_encoder(CropEncoder<S>& net, const std::vector<Mat<S>>& crops,
                          const std::vector<int>& labels, const Vec<S>& class_weights,
                          const FitConfig& cfg, Rng& rng) {
  if (crops.empty()) fail(ErrorCode::EmptyDataset, "no crops");
  if (crops.size() != labels.size()) fail(ErrorCode::BadShape, "crop/label mismatch");

  nn::ParamList<S> params;
  net.params(params);
  nn::AdamW<S> opt(cfg.lr, cfg.weight_decay);
  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices<S>(crops.size(), rng);
    double epoch_loss = 0.0;
    size_t correct = 0, seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Mat<S>> batch;
      std::vector<int> y;
      for (size_t i = start; i < stop; ++i) {
        batch.push_back(crops[order[i]]);
        y.push_back(labels[order[i]]);
      }
      nn::zero_grads(params);
      const Mat<S> logits =
          net.forward_logits(nn::Tensor4<S>::from_images(batch), true);
      const auto res = nn::weighted_cross_entropy(logits, y, class_weights);
      net.backward_logits(res.dlogits);
      nn::clip_grad_norm(params, cfg.grad_clip);
      opt.step(params);
      epoch_loss += static_cast<double>(res.loss) * static_cast<double>(stop - start);
      for (size_t i = 0; i < y.size(); ++i) {
        Eigen::Index pred;
        logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
        if (static_cast<int>(pred) == y[i]) ++correct;
      }
      seen += stop - start;
    }
    log.loss.push_back(epoch_loss / static_cast<double>(seen));
    log.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(seen));
  }
  return log;
}

}  // namespace mscan
