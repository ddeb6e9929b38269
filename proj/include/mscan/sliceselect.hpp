#pragma once

#include <array>
#include <vector>

#include "mscan/localization.hpp"
#include "mscan/nn/adamw.hpp"
#include "mscan/nn/layers.hpp"
#include "mscan/nn/loss.hpp"
#include "mscan/preprocess.hpp"
#include "mscan/studyio.hpp"

namespace mscan {

// N x 5 per-slice, per-level scores in [0,1]; rows need not sum to one.
using LevelProbabilityMatrix = Mat<double>;

// Whole-slice level scorer: three conv stages, flatten (position matters for
// telling levels apart), linear head to five sigmoid scores.
template <typename S>
struct SliceScorerNet {
  int in_h = 32, in_w = 32;
  nn::Conv2d<S> c1, c2, c3;
  nn::BatchNorm2d<S> b1, b2, b3;
  nn::ReLU<S> r1, r2, r3;
  nn::MaxPool2<S> p1, p2, p3;
  nn::Flatten<S> flat;
  nn::Linear<S> fc;
  nn::Sigmoid<S> sig;

  SliceScorerNet() = default;
  SliceScorerNet(int in_h_, int in_w_, Rng& rng)
      : in_h(in_h_),
        in_w(in_w_),
        c1(1, 8, 3, rng),
        c2(8, 16, 3, rng),
        c3(16, 32, 3, rng),
        b1(8),
        b2(16),
        b3(32),
        fc(32 * (in_h_ / 8) * (in_w_ / 8), kNumLevels, rng) {
    if (in_h_ % 8 != 0 || in_w_ % 8 != 0)
      fail(ErrorCode::BadShape, "scorer input must divide by 8");
  }

  // (B,1,h,w) -> (B,5) scores in [0,1].
  Mat<S> forward(const nn::Tensor4<S>& x, bool train) {
    if (x.c != 1 || x.h != in_h || x.w != in_w)
      fail(ErrorCode::BadShape, "scorer input shape mismatch");
    auto a = b1.forward(c1.forward(x), train);
    a.m = r1.forward(a.m);
    a = p1.forward(a);
    a = b2.forward(c2.forward(a), train);
    a.m = r2.forward(a.m);
    a = p2.forward(a);
    a = b3.forward(c3.forward(a), train);
    a.m = r3.forward(a.m);
    a = p3.forward(a);
    return sig.forward(fc.forward(flat.forward(a)));
  }

  // dlogits is the gradient w.r.t. the pre-sigmoid activations.
  void backward_logits(const Mat<S>& dlogits) {
    nn::Tensor4<S> t = flat.backward(fc.backward(dlogits));
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

  void params(nn::ParamList<S>& out, const std::string& prefix = "scorer") {
    c1.params(prefix + ".c1", out);
    b1.params(prefix + ".b1", out);
    c2.params(prefix + ".c2", out);
    b2.params(prefix + ".b2", out);
    c3.params(prefix + ".c3", out);
    b3.params(prefix + ".b3", out);
    fc.params(prefix + ".fc", out);
  }
};

// Downscale + normalize one whole sagittal slice for the scorer.
template <typename S>
Mat<S> scorer_input(const Image16& slice, int in_h, int in_w) {
  const ImageF f = resize_bilinear(slice.cast<float>(), in_h, in_w);
  return normalize(f).template cast<S>();
}

// Per-slice, per-level probabilities for a whole study.
template <typename S>
LevelProbabilityMatrix score_slices(SliceScorerNet<S>& scorer, const Study& study) {
  if (study.n_sagittal() < 1) fail(ErrorCode::EmptySeries, "no sagittal slices");
  std::vector<Mat<S>> inputs;
  inputs.reserve(study.manifest.sagittal_slices.size());
  for (const auto& rec : study.manifest.sagittal_slices)
    inputs.push_back(scorer_input<S>(load_pixels(rec), scorer.in_h, scorer.in_w));
  const Mat<S> probs = scorer.forward(nn::Tensor4<S>::from_images(inputs), false);
  return probs.template cast<double>();
}

// argmax_i p[i][j] per level j; ties resolve to the lowest slice index.
inline std::array<int, kNumLevels> select_slices(const LevelProbabilityMatrix& P) {
  if (P.rows() < 1 || P.cols() != kNumLevels)
    fail(ErrorCode::BadShape, "probability matrix must be N x 5 with N >= 1");
  std::array<int, kNumLevels> out{};
  for (int j = 0; j < kNumLevels; ++j) {
    int best = 0;
    for (Eigen::Index i = 1; i < P.rows(); ++i)
      if (P(i, j) > P(best, j)) best = static_cast<int>(i);
    out[j] = best;
  }
  return out;
}

// BCE fit against soft per-slice level targets.
template <typename S>
TrainLog train_scorer(SliceScorerNet<S>& net, const std::vector<Mat<S>>& slices,
                      const Mat<S>& targets, const FitConfig& cfg, Rng& rng) {
  if (slices.empty()) fail(ErrorCode::EmptyDataset, "no slices");
  nn::ParamList<S> params;
  net.params(params);
  nn::AdamW<S> opt(cfg.lr, cfg.weight_decay);
  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices<S>(slices.size(), rng);
    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<Mat<S>> batch;
      Mat<S> y(stop - start, kNumLevels);
      for (size_t i = start; i < stop; ++i) {
        batch.push_back(slices[order[i]]);
        y.row(static_cast<Eigen::Index>(i - start)) =
            targets.row(static_cast<Eigen::Index>(order[i]));
      }
      nn::zero_grads(params);
      const Mat<S> probs = net.forward(nn::Tensor4<S>::from_images(batch), true);
      const auto res = nn::bce_with_probs(probs, y);
      net.backward_logits(res.dlogits);
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
