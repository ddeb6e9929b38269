#include <doctest.h>

#include <functional>

#include "mscan/nn/adamw.hpp"
#include "mscan/nn/attention.hpp"
#include "mscan/nn/checkpoint.hpp"
#include "mscan/nn/layers.hpp"
#include "mscan/nn/loss.hpp"
#include "mscan/nn/rnn.hpp"

using namespace mscan;
using namespace mscan::nn;

namespace {

// Central finite differences over every trainable parameter. Relative error
// uses a denominator floor of 1e-4 (the gradient scale of an O(1) loss) so
// roundoff on near-zero gradients does not register as disagreement.
double max_rel_grad_error(ParamList<double>& params,
                          const std::function<double()>& loss_fn, double h = 1e-5) {
  double worst = 0.0;
  for (auto& p : params) {
    if (!p.trainable) continue;
    for (Eigen::Index i = 0; i < p.size; ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double lp = loss_fn();
      p.value[i] = saved - h;
      const double lm = loss_fn();
      p.value[i] = saved;
      const double fd = (lp - lm) / (2 * h);
      const double an = p.grad[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

Mat<double> random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat<double> m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

Tensor4<double> random_tensor(Rng& rng, int n, int c, int h, int w) {
  Tensor4<double> t(n, c, h, w);
  for (Eigen::Index i = 0; i < t.m.rows(); ++i)
    for (Eigen::Index j = 0; j < t.m.cols(); ++j) t.m(i, j) = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("linear layer gradient matches finite differences") {
  Rng rng(1);
  Linear<double> lin(4, 3, rng);
  ParamList<double> params;
  lin.params("lin", params);
  const Mat<double> x = random_mat(rng, 5, 4);
  const Mat<double> target = random_mat(rng, 5, 3);

  auto loss_fn = [&]() { return mse(lin.forward(x, false), target).loss; };
  zero_grads(params);
  const auto res = mse(lin.forward(x), target);
  lin.backward(res.dpred);
  CHECK(max_rel_grad_error(params, loss_fn) < 1e-5);
}

TEST_CASE("conv layer gradient matches finite differences") {
  Rng rng(2);
  for (int k : {1, 3}) {
    Conv2d<double> conv(2, 3, k, rng);
    ParamList<double> params;
    conv.params("conv", params);
    const Tensor4<double> x = random_tensor(rng, 2, 2, 6, 5);
    Tensor4<double> target = random_tensor(rng, 2, 3, 6, 5);

    auto loss_fn = [&]() {
      Conv2d<double> c2 = conv;
      return mse(c2.forward(x, false).m, target.m).loss;
    };
    zero_grads(params);
    auto out = conv.forward(x);
    const auto res = mse(out.m, target.m);
    Tensor4<double> dy = out;
    dy.m = res.dpred;
    conv.backward(dy);
    CHECK(max_rel_grad_error(params, loss_fn) < 1e-5);
  }
}

TEST_CASE("conv input gradient matches finite differences") {
  Rng rng(3);
  Conv2d<double> conv(1, 2, 3, rng);
  Tensor4<double> x = random_tensor(rng, 1, 1, 5, 5);
  Tensor4<double> target = random_tensor(rng, 1, 2, 5, 5);

  auto out = conv.forward(x);
  const auto res = mse(out.m, target.m);
  Tensor4<double> dy = out;
  dy.m = res.dpred;
  const Tensor4<double> dx = conv.backward(dy);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.m.size(); ++i) {
    const double saved = x.m.data()[i];
    x.m.data()[i] = saved + h;
    const double lp = mse(conv.forward(x, false).m, target.m).loss;
    x.m.data()[i] = saved - h;
    const double lm = mse(conv.forward(x, false).m, target.m).loss;
    x.m.data()[i] = saved;
    const double fd = (lp - lm) / (2 * h);
    CHECK(std::abs(fd - dx.m.data()[i]) < 1e-6);
  }
}

TEST_CASE("batchnorm train-mode gradient matches finite differences") {
  Rng rng(4);
  BatchNorm2d<double> bn(3);
  ParamList<double> params;
  bn.params("bn", params);
  const Tensor4<double> x = random_tensor(rng, 2, 3, 4, 4);
  Tensor4<double> target = random_tensor(rng, 2, 3, 4, 4);

  auto loss_fn = [&]() {
    BatchNorm2d<double> b2 = bn;  // keep running stats out of the picture
    return mse(b2.forward(x, true).m, target.m).loss;
  };
  zero_grads(params);
  BatchNorm2d<double> work = bn;
  auto out = work.forward(x, true);
  const auto res = mse(out.m, target.m);
  Tensor4<double> dy = out;
  dy.m = res.dpred;
  work.backward(dy);
  // copy grads back into the registry view of `bn`
  bn.ggamma = work.ggamma;
  bn.gbeta = work.gbeta;
  CHECK(max_rel_grad_error(params, loss_fn) < 1e-5);
}

TEST_CASE("pool, upsample, activations backprop correctly through a stack") {
  Rng rng(5);
  Conv2d<double> conv(1, 2, 3, rng);
  MaxPool2<double> pool;
  UpsampleNearest2<double> up;
  Softplus<double> act;

  Tensor4<double> x = random_tensor(rng, 1, 1, 6, 6);
  Tensor4<double> target = random_tensor(rng, 1, 2, 6, 6);
  ParamList<double> params;
  conv.params("conv", params);

  auto forward = [&](bool cache) {
    Conv2d<double> c = conv;
    MaxPool2<double> p;
    UpsampleNearest2<double> u;
    Softplus<double> a;
    auto t = c.forward(x, cache);
    t = p.forward(t);
    t = u.forward(t);
    t.m = a.forward(t.m);
    return t;
  };
  auto loss_fn = [&]() { return mse(forward(false).m, target.m).loss; };

  zero_grads(params);
  auto t = conv.forward(x);
  t = pool.forward(t);
  t = up.forward(t);
  t.m = act.forward(t.m);
  const auto res = mse(t.m, target.m);
  Tensor4<double> dy = t;
  dy.m = act.backward(res.dpred);
  dy = up.backward(dy);
  dy = pool.backward(dy);
  conv.backward(dy);
  CHECK(max_rel_grad_error(params, loss_fn) < 1e-5);
}

TEST_CASE("GRU gradient matches finite differences") {
  Rng rng(6);
  GruDirection<double> gru(3, 4, rng);
  ParamList<double> params;
  gru.cell.params("gru", params);

  Seq<double> x(4);
  for (auto& step : x) step = random_mat(rng, 2, 3);
  Seq<double> target(4);
  for (auto& step : target) step = random_mat(rng, 2, 4);

  auto loss_fn = [&]() {
    GruDirection<double> g = gru;
    const Seq<double> out = g.forward(x);
    double loss = 0;
    for (size_t t = 0; t < out.size(); ++t) loss += mse(out[t], target[t]).loss;
    return loss;
  };
  zero_grads(params);
  const Seq<double> out = gru.forward(x);
  Seq<double> dout(out.size());
  for (size_t t = 0; t < out.size(); ++t) dout[t] = mse(out[t], target[t]).dpred;
  gru.backward(dout);
  CHECK(max_rel_grad_error(params, loss_fn) < 1e-5);
}

TEST_CASE("LSTM gradient matches finite differences") {
  Rng rng(7);
  LstmLastState<double> lstm(3, 4, rng);
  ParamList<double> params;
  lstm.cell.params("lstm", params);

  Seq<double> x(3);
  for (auto& step : x) step = random_mat(rng, 2, 3);
  const Mat<double> target = random_mat(rng, 2, 4);

  auto loss_fn = [&]() {
    LstmLastState<double> l = lstm;
    return mse(l.forward(x), target).loss;
  };
  zero_grads(params);
  const Mat<double> out = lstm.forward(x);
  lstm.backward(mse(out, target).dpred);
  CHECK(max_rel_grad_error(params, loss_fn) < 1e-5);
}

TEST_CASE("attention gradient matches finite differences") {
  Rng rng(8);
  MultiHeadAttention<double> attn(6, 2, rng);
  ParamList<double> params;
  attn.params("attn", params);

  Seq<double> q(3), k(3), v(3), target(3);
  for (int t = 0; t < 3; ++t) {
    q[t] = random_mat(rng, 2, 6);
    k[t] = random_mat(rng, 2, 6);
    v[t] = random_mat(rng, 2, 6);
    target[t] = random_mat(rng, 2, 6);
  }

  auto loss_fn = [&]() {
    MultiHeadAttention<double> a = attn;
    const Seq<double> out = a.forward(q, k, v);
    double loss = 0;
    for (size_t t = 0; t < out.size(); ++t) loss += mse(out[t], target[t]).loss;
    return loss;
  };
  zero_grads(params);
  const Seq<double> out = attn.forward(q, k, v);
  Seq<double> dout(out.size());
  for (size_t t = 0; t < out.size(); ++t) dout[t] = mse(out[t], target[t]).dpred;
  attn.backward(dout);
  CHECK(max_rel_grad_error(params, loss_fn) < 1e-5);
}

TEST_CASE("weighted cross entropy gradient matches finite differences") {
  Rng rng(9);
  Mat<double> logits = random_mat(rng, 6, 3, 2.0);
  const std::vector<int> labels{0, 1, 2, 2, 1, 0};
  Vec<double> w(3);
  w << 1, 2, 4;

  const auto res = weighted_cross_entropy(logits, labels, w);
  const double h = 1e-7;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double saved = logits.data()[i];
    logits.data()[i] = saved + h;
    const double lp = weighted_cross_entropy(logits, labels, w).loss;
    logits.data()[i] = saved - h;
    const double lm = weighted_cross_entropy(logits, labels, w).loss;
    logits.data()[i] = saved;
    CHECK(std::abs((lp - lm) / (2 * h) - res.dlogits.data()[i]) < 1e-6);
  }
}

TEST_CASE("adamw minimizes a quadratic and clipping bounds the global norm") {
  Mat<double> w = Mat<double>::Constant(1, 4, 5.0);
  Mat<double> g = Mat<double>::Zero(1, 4);
  ParamList<double> params;
  add_param(params, "w", w, g);

  AdamW<double> opt(0.05, 0.0);
  for (int it = 0; it < 2000; ++it) {
    g = 2.0 * w;  // d/dw of |w|^2
    const double norm = clip_grad_norm(params, 1.0);
    if (it == 0) CHECK(norm == doctest::Approx(2.0 * 10.0));
    CHECK(Eigen::Map<Vec<double>>(g.data(), 4).norm() <= 1.0 + 1e-12);
    opt.step(params);
  }
  CHECK(w.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("checkpoint save/load round-trips parameters by name") {
  Rng rng(10);
  Linear<double> a(3, 2, rng), b(3, 2, rng);
  ParamList<double> pa, pb;
  a.params("lin", pa);
  b.params("lin", pb);
  CHECK(param_hash(pa) != param_hash(pb));

  const auto path = std::filesystem::temp_directory_path() / "mscan_ckpt_test.ckpt";
  save_checkpoint(path, "{\"note\":\"test\"}", pa);
  std::string cfg;
  load_checkpoint(path, pb, &cfg);
  CHECK(cfg == "{\"note\":\"test\"}");
  // double -> f32 -> double keeps f32-representable values exact
  for (Eigen::Index i = 0; i < pa[0].size; ++i)
    CHECK(static_cast<float>(pa[0].value[i]) == static_cast<float>(pb[0].value[i]));

  SUBCASE("missing parameter fails") {
    ParamList<double> extra = pb;
    Mat<double> other = Mat<double>::Zero(2, 2), gother = other;
    add_param(extra, "lin.extra", other, gother);
    CHECK_THROWS_AS(load_checkpoint(path, extra), Error);
  }
}
