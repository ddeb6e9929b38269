#pragma once

#include <array>
#include <vector>

#include "mscan/localization.hpp"
#include "mscan/nn/adamw.hpp"
#include "mscan/nn/attention.hpp"
#include "mscan/nn/loss.hpp"
#include "mscan/nn/rnn.hpp"

namespace mscan {

// Frozen-encoder features for a batch: sagittal[t] is (B, dim) for level t,
// axial[t][s] is (B, dim) for slice s (ascending z) of level t.
template <typename S>
struct FeatureBundle {
  nn::Seq<S> sagittal;                                        // T x (B, dim)
  std::vector<std::array<Mat<S>, kSlicesPerLevel>> axial;     // T x 3 x (B, dim)

  int batch() const { return sagittal.empty() ? 0 : static_cast<int>(sagittal[0].rows()); }
};

// Gradient of the class-weighted loss w.r.t. per-level logits.
template <typename S>
struct SeqLossResult {
  S loss = 0;
  nn::Seq<S> dlogits;
};

// Mean over batch and levels of w[grade] * -log softmax(logits)[grade].
template <typename S>
SeqLossResult<S> wce_loss(const nn::Seq<S>& logits, const Eigen::MatrixXi& grades,
                          const Vec<S>& weights) {
  const int T = static_cast<int>(logits.size());
  if (T == 0) fail(ErrorCode::BadShape, "empty logits");
  const int B = static_cast<int>(logits[0].rows());
  if (grades.rows() != B || grades.cols() != T)
    fail(ErrorCode::BadShape, "grade matrix must be (B, T)");

  Mat<S> flat(static_cast<Eigen::Index>(T) * B, logits[0].cols());
  std::vector<int> labels(static_cast<size_t>(T) * B);
  for (int t = 0; t < T; ++t) {
    flat.middleRows(static_cast<Eigen::Index>(t) * B, B) = logits[t];
    for (int b = 0; b < B; ++b)
      labels[static_cast<size_t>(t) * B + b] = grades(b, t);
  }
  const auto res = nn::weighted_cross_entropy(flat, labels, weights);
  SeqLossResult<S> out;
  out.loss = res.loss;
  out.dlogits.resize(T);
  for (int t = 0; t < T; ++t)
    out.dlogits[t] = res.dlogits.middleRows(static_cast<Eigen::Index>(t) * B, B);
  return out;
}

// ---------------------------------------------------------------------------
// Multi-view sequence classifier over the five levels: sagittal Bi-GRU, a
// shared per-level LSTM over the three axial slices, an axial Bi-GRU,
// bidirectional cross-attention between the two streams, channel dropout,
// concatenation, a shared projection, and one classifier head per level.
// ---------------------------------------------------------------------------
template <typename S>
struct MscanNet {
  int dim = 512;
  int heads = 4;
  double dropout_rate = 0.1;

  nn::BiGru<S> sag_rnn;                 // dim -> 2*(dim/2)
  nn::LstmLastState<S> axial_lstm;      // dim -> dim, shared across levels
  nn::BiGru<S> axial_rnn;
  nn::MultiHeadAttention<S> attn_ax_q;  // Q = axial stream, K/V = sagittal
  nn::MultiHeadAttention<S> attn_sag_q; // Q = sagittal stream, K/V = axial
  nn::Linear<S> proj;                   // 2*dim -> dim
  nn::ReLU<S> proj_relu;
  std::array<nn::Linear<S>, kNumLevels> level_heads;

  // caches
  int batch_ = 0;
  nn::Seq<S> o_sag_, o_ax_;
  Mat<S> mask1_, mask2_;

  MscanNet() = default;
  MscanNet(int dim_, int heads_, Rng& rng, double dropout = 0.1)
      : dim(dim_),
        heads(heads_),
        dropout_rate(dropout),
        sag_rnn(dim_, dim_ / 2, rng),
        axial_lstm(dim_, dim_, rng),
        axial_rnn(dim_, dim_ / 2, rng),
        attn_ax_q(dim_, heads_, rng),
        attn_sag_q(dim_, heads_, rng),
        proj(2 * dim_, dim_, rng) {
    if (dim_ % 2 != 0) fail(ErrorCode::BadShape, "model width must be even");
    for (auto& h : level_heads) h = nn::Linear<S>(dim_, kNumGrades, rng);
  }

  // Level-axis bidirectional recurrence over sagittal embeddings.
  nn::Seq<S> sagittal_rnn(const nn::Seq<S>& e_s) { return sag_rnn.forward(e_s); }

  // Shared LSTM over the 3-slice axis; final hidden state per level.
  nn::Seq<S> axial_level_rnn(
      const std::vector<std::array<Mat<S>, kSlicesPerLevel>>& e_a) {
    const int T = static_cast<int>(e_a.size());
    if (T == 0) fail(ErrorCode::BadShape, "empty axial features");
    const Eigen::Index B = e_a[0][0].rows();
    nn::Seq<S> steps(kSlicesPerLevel);
    for (int s = 0; s < kSlicesPerLevel; ++s) {
      steps[s].resize(static_cast<Eigen::Index>(T) * B, dim);
      for (int t = 0; t < T; ++t) {
        if (e_a[t][s].rows() != B || e_a[t][s].cols() != dim)
          fail(ErrorCode::BadShape, "axial feature shape mismatch");
        steps[s].middleRows(static_cast<Eigen::Index>(t) * B, B) = e_a[t][s];
      }
    }
    const Mat<S> last = axial_lstm.forward(steps);
    nn::Seq<S> h_a(T);
    for (int t = 0; t < T; ++t)
      h_a[t] = last.middleRows(static_cast<Eigen::Index>(t) * B, B);
    return h_a;
  }

  // Level-axis bidirectional recurrence over per-level axial summaries.
  nn::Seq<S> axial_rnn_pass(const nn::Seq<S>& h_a) { return axial_rnn.forward(h_a); }

  // Cross-attention both ways, channel dropout, concat, shared projection,
  // per-level heads. rng is only consulted when train && dropout_rate > 0.
  nn::Seq<S> fuse_and_classify(const nn::Seq<S>& o_s, const nn::Seq<S>& o_ax,
                               bool train, Rng* rng) {
    const int T = static_cast<int>(o_s.size());
    const int B = static_cast<int>(o_s[0].rows());
    batch_ = B;
    nn::Seq<S> o1 = attn_ax_q.forward(o_ax, o_s, o_s);
    nn::Seq<S> o2 = attn_sag_q.forward(o_s, o_ax, o_ax);

    if (train && dropout_rate > 0.0 && rng) {
      const S scale = static_cast<S>(1.0 / (1.0 - dropout_rate));
      auto make_mask = [&]() {
        Mat<S> m(B, dim);
        for (int b = 0; b < B; ++b)
          for (int d = 0; d < dim; ++d)
            m(b, d) = rng->uniform() < dropout_rate ? S(0) : scale;
        return m;
      };
      mask1_ = make_mask();
      mask2_ = make_mask();
    } else {
      mask1_ = Mat<S>::Ones(B, dim);
      mask2_ = Mat<S>::Ones(B, dim);
    }
    for (int t = 0; t < T; ++t) {
      o1[t] = o1[t].cwiseProduct(mask1_);  // whole channels drop across levels
      o2[t] = o2[t].cwiseProduct(mask2_);
    }

    Mat<S> fused(static_cast<Eigen::Index>(T) * B, 2 * dim);
    for (int t = 0; t < T; ++t) {
      fused.block(static_cast<Eigen::Index>(t) * B, 0, B, dim) = o1[t];
      fused.block(static_cast<Eigen::Index>(t) * B, dim, B, dim) = o2[t];
    }
    const Mat<S> p = proj_relu.forward(proj.forward(fused));
    nn::Seq<S> logits(T);
    for (int t = 0; t < T; ++t)
      logits[t] =
          level_heads[t].forward(p.middleRows(static_cast<Eigen::Index>(t) * B, B));
    return logits;
  }

  // Full data flow: sagittal Bi-GRU, per-level LSTM, axial Bi-GRU, fusion.
  nn::Seq<S> forward(const FeatureBundle<S>& bundle, bool train, Rng* rng) {
    if (static_cast<int>(bundle.sagittal.size()) != kNumLevels ||
        static_cast<int>(bundle.axial.size()) != kNumLevels)
      fail(ErrorCode::BadShape, "bundle must carry exactly 5 levels");
    for (const auto& e : bundle.sagittal)
      if (e.cols() != dim) fail(ErrorCode::BadShape, "sagittal feature width mismatch");
    o_sag_ = sagittal_rnn(bundle.sagittal);
    const nn::Seq<S> h_a = axial_level_rnn(bundle.axial);
    o_ax_ = axial_rnn_pass(h_a);
    return fuse_and_classify(o_sag_, o_ax_, train, rng);
  }

  // Backward through the whole net; returns gradients w.r.t. the bundle.
  FeatureBundle<S> backward(const nn::Seq<S>& dlogits) {
    const int T = static_cast<int>(dlogits.size());
    const int B = batch_;
    Mat<S> dp(static_cast<Eigen::Index>(T) * B, dim);
    for (int t = 0; t < T; ++t)
      dp.middleRows(static_cast<Eigen::Index>(t) * B, B) =
          level_heads[t].backward(dlogits[t]);
    const Mat<S> dfused = proj.backward(proj_relu.backward(dp));

    nn::Seq<S> do1(T), do2(T);
    for (int t = 0; t < T; ++t) {
      do1[t] = dfused.block(static_cast<Eigen::Index>(t) * B, 0, B, dim)
                   .cwiseProduct(mask1_);
      do2[t] = dfused.block(static_cast<Eigen::Index>(t) * B, dim, B, dim)
                   .cwiseProduct(mask2_);
    }
    attn_ax_q.backward(do1);
    attn_sag_q.backward(do2);

    nn::Seq<S> do_sag(T), do_ax(T);
    for (int t = 0; t < T; ++t) {
      do_sag[t] = attn_ax_q.dk_out[t] + attn_ax_q.dv_out[t] + attn_sag_q.dq_out[t];
      do_ax[t] = attn_ax_q.dq_out[t] + attn_sag_q.dk_out[t] + attn_sag_q.dv_out[t];
    }

    const nn::Seq<S> dh_a = axial_rnn.backward(do_ax);
    Mat<S> dlast(static_cast<Eigen::Index>(T) * B, dim);
    for (int t = 0; t < T; ++t)
      dlast.middleRows(static_cast<Eigen::Index>(t) * B, B) = dh_a[t];
    const nn::Seq<S> dsteps = axial_lstm.backward(dlast);

    FeatureBundle<S> grad;
    grad.axial.resize(T);
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < kSlicesPerLevel; ++s)
        grad.axial[t][s] = dsteps[s].middleRows(static_cast<Eigen::Index>(t) * B, B);
    grad.sagittal = sag_rnn.backward(do_sag);
    return grad;
  }

  void params(nn::ParamList<S>& out, const std::string& prefix = "mscan") {
    sag_rnn.params(prefix + ".sag_rnn", out);
    axial_lstm.cell.params(prefix + ".axial_lstm", out);
    axial_rnn.params(prefix + ".axial_rnn", out);
    attn_ax_q.params(prefix + ".attn_ax_q", out);
    attn_sag_q.params(prefix + ".attn_sag_q", out);
    proj.params(prefix + ".proj", out);
    for (int t = 0; t < kNumLevels; ++t)
      level_heads[t].params(prefix + ".head" + std::to_string(t), out);
  }
};

// Stacks per-study bundles (each B=1) into one batched bundle.
template <typename S>
FeatureBundle<S> stack_bundles(const std::vector<const FeatureBundle<S>*>& parts) {
  if (parts.empty()) fail(ErrorCode::EmptyDataset, "no feature bundles");
  const int B = static_cast<int>(parts.size());
  const Eigen::Index dim = parts[0]->sagittal[0].cols();
  FeatureBundle<S> out;
  out.sagittal.assign(kNumLevels, Mat<S>(B, dim));
  out.axial.resize(kNumLevels);
  for (int t = 0; t < kNumLevels; ++t)
    for (int s = 0; s < kSlicesPerLevel; ++s) out.axial[t][s].resize(B, dim);
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < kNumLevels; ++t) {
      out.sagittal[t].row(b) = parts[b]->sagittal[t].row(0);
      for (int s = 0; s < kSlicesPerLevel; ++s)
        out.axial[t][s].row(b) = parts[b]->axial[t][s].row(0);
    }
  return out;
}

// Stage-3 fit over cached frozen-encoder features.
template <typename S>
TrainLog train_mscan(MscanNet<S>& net, const std::vector<FeatureBundle<S>>& bundles,
                     const std::vector<std::array<int, kNumLevels>>& grades,
                     const Vec<S>& class_weights, const FitConfig& cfg, Rng& rng) {
  if (bundles.empty()) fail(ErrorCode::EmptyDataset, "no feature bundles");
  if (bundles.size() != grades.size())
    fail(ErrorCode::BadShape, "bundle/grade count mismatch");

  nn::ParamList<S> params;
  net.params(params);
  nn::AdamW<S> opt(cfg.lr, cfg.weight_decay);
  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices<S>(bundles.size(), rng);
    double epoch_loss = 0.0;
    size_t correct = 0, seen = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const FeatureBundle<S>*> parts;
      Eigen::MatrixXi y(static_cast<Eigen::Index>(stop - start), kNumLevels);
      for (size_t i = start; i < stop; ++i) {
        parts.push_back(&bundles[order[i]]);
        for (int t = 0; t < kNumLevels; ++t)
          y(static_cast<Eigen::Index>(i - start), t) = grades[order[i]][t];
      }
      const FeatureBundle<S> batch = stack_bundles<S>(parts);
      nn::zero_grads(params);
      const nn::Seq<S> logits = net.forward(batch, true, &rng);
      const auto res = wce_loss(logits, y, class_weights);
      net.backward(res.dlogits);
      nn::clip_grad_norm(params, cfg.grad_clip);
      opt.step(params);
      epoch_loss += static_cast<double>(res.loss) * static_cast<double>(stop - start);
      for (size_t i = 0; i < parts.size(); ++i)
        for (int t = 0; t < kNumLevels; ++t) {
          Eigen::Index pred;
          logits[t].row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
          if (static_cast<int>(pred) == y(static_cast<Eigen::Index>(i), t)) ++correct;
        }
      seen += (stop - start) * kNumLevels;
    }
    log.loss.push_back(epoch_loss / static_cast<double>(seen / kNumLevels));
    log.accuracy.push_back(static_cast<double>(correct) / static_cast<double>(seen));
  }
  return log;
}

}  // namespace mscan
