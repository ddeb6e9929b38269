#pragma once

#include <cmath>
#include <vector>

#include "mscan/nn/layers.hpp"

namespace mscan::nn {

// Class-weighted cross entropy on raw logits (N, C): softmax probabilities
// are clamped to >= 1e-12 before the log; the loss is the mean over rows of
// w[label] * -log(p[label]).
template <typename S>
struct WeightedCeResult {
  S loss = 0;
  Mat<S> dlogits;
};

template <typename S>
WeightedCeResult<S> weighted_cross_entropy(const Mat<S>& logits,
                                           const std::vector<int>& labels,
                                           const Vec<S>& weights) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    fail(ErrorCode::BadShape, "label count mismatch");
  if (weights.size() != c) fail(ErrorCode::BadShape, "weight count mismatch");

  const Mat<S> p = softmax_rows(logits);
  WeightedCeResult<S> out;
  out.dlogits = Mat<S>::Zero(n, c);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c) fail(ErrorCode::BadLabel, "label out of range");
    const double py =
        std::max(static_cast<double>(p(i, y)), 1e-12);
    const double w = static_cast<double>(weights(y));
    loss += w * -std::log(py);
    out.dlogits.row(i) = (p.row(i) * static_cast<S>(w / static_cast<double>(n)));
    out.dlogits(i, y) -= static_cast<S>(w / static_cast<double>(n));
  }
  out.loss = static_cast<S>(loss / static_cast<double>(n));
  return out;
}

// Binary cross entropy on sigmoid probabilities against (possibly soft)
// targets; gradient is taken w.r.t. the pre-sigmoid logits.
template <typename S>
struct BceResult {
  S loss = 0;
  Mat<S> dlogits;
};

template <typename S>
BceResult<S> bce_with_probs(const Mat<S>& probs, const Mat<S>& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols())
    fail(ErrorCode::BadShape, "bce shape mismatch");
  const double n = static_cast<double>(probs.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      const double p = std::clamp(static_cast<double>(probs(i, j)), 1e-12, 1.0 - 1e-12);
      const double y = static_cast<double>(targets(i, j));
      loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
  BceResult<S> out;
  out.loss = static_cast<S>(loss / n);
  out.dlogits = (probs - targets) / static_cast<S>(n);
  return out;
}

// Mean squared error; gradient w.r.t. predictions.
template <typename S>
struct MseResult {
  S loss = 0;
  Mat<S> dpred;
};

template <typename S>
MseResult<S> mse(const Mat<S>& pred, const Mat<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    fail(ErrorCode::BadShape, "mse shape mismatch");
  MseResult<S> out;
  const Mat<S> diff = pred - target;
  out.loss = static_cast<S>(diff.squaredNorm() / static_cast<double>(diff.size()));
  out.dpred = diff * static_cast<S>(2.0 / static_cast<double>(diff.size()));
  return out;
}

}  // namespace mscan::nn
