#pragma once

#include <cmath>
#include <vector>

#include "mscan/nn/params.hpp"

namespace mscan::nn {

// Clips the global gradient norm over all trainable params; returns the norm.
template <typename S>
double clip_grad_norm(ParamList<S>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.trainable)
      sq += Eigen::Map<const Vec<S>>(p.grad, p.size).template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    for (auto& p : params)
      if (p.trainable) Eigen::Map<Vec<S>>(p.grad, p.size) *= scale;
  }
  return norm;
}

// Adaptive moments with decoupled weight decay.
template <typename S>
class AdamW {
 public:
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 1e-2;

  AdamW() = default;
  AdamW(double lr_, double weight_decay_) : lr(lr_), weight_decay(weight_decay_) {}

  void step(ParamList<S>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.trainable ? Vec<S>::Zero(p.size) : Vec<S>());
        v_.emplace_back(p.trainable ? Vec<S>::Zero(p.size) : Vec<S>());
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.trainable) continue;
      Eigen::Map<Vec<S>> w(p.value, p.size);
      Eigen::Map<const Vec<S>> g(p.grad, p.size);
      m_[i] = static_cast<S>(beta1) * m_[i] + static_cast<S>(1.0 - beta1) * g;
      v_[i] = (static_cast<S>(beta2) * v_[i].array() +
               static_cast<S>(1.0 - beta2) * g.array().square())
                  .matrix();
      w -= static_cast<S>(lr * weight_decay) * w;
      w.array() -= static_cast<S>(lr) * (m_[i].array() / static_cast<S>(bc1)) /
                   ((v_[i].array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(eps));
    }
  }

 private:
  long t_ = 0;
  std::vector<Vec<S>> m_, v_;
};

}  // namespace mscan::nn
