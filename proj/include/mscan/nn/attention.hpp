#pragma once

#include <string>
#include <vector>

#include "mscan/nn/layers.hpp"
#include "mscan/nn/params.hpp"
#include "mscan/nn/tensor.hpp"

namespace mscan::nn {

// Multi-head scaled dot-product attention over the sequence axis with learned
// query/key/value/output projections. softmax(Q K^T / sqrt(head_dim)) V per
// head and sample; heads concatenate back to the model width.
template <typename S>
struct MultiHeadAttention {
  int dim = 0, heads = 1, head_dim = 0;
  Mat<S> Wq, Wk, Wv, Wo, gWq, gWk, gWv, gWo;
  Vec<S> bq, bk, bv, bo, gbq, gbk, gbv, gbo;

  // caches
  Seq<S> q_in, k_in, v_in;        // inputs
  Seq<S> qp, kp, vp, ctx;         // projections and pre-output context
  std::vector<Mat<S>> attn;       // (B*heads) softmax matrices, each T x T

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim_, int heads_, Rng& rng) : dim(dim_), heads(heads_) {
    if (dim % heads != 0) fail(ErrorCode::BadShape, "dim must divide into heads");
    head_dim = dim / heads;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    auto mk = [&](Mat<S>& w, Mat<S>& g) {
      w.resize(dim, dim);
      g = Mat<S>::Zero(dim, dim);
      init_uniform(w, rng, bound);
    };
    mk(Wq, gWq);
    mk(Wk, gWk);
    mk(Wv, gWv);
    mk(Wo, gWo);
    auto mkb = [&](Vec<S>& b, Vec<S>& g) {
      b = Vec<S>::Zero(dim);
      g = Vec<S>::Zero(dim);
    };
    mkb(bq, gbq);
    mkb(bk, gbk);
    mkb(bv, gbv);
    mkb(bo, gbo);
  }

  static Seq<S> project(const Seq<S>& x, const Mat<S>& W, const Vec<S>& b) {
    Seq<S> out(x.size());
    for (size_t t = 0; t < x.size(); ++t) {
      out[t] = x[t] * W.transpose();
      out[t].rowwise() += b.transpose();
    }
    return out;
  }

  Seq<S> forward(const Seq<S>& q, const Seq<S>& k, const Seq<S>& v) {
    check_seq(q, "attention query");
    check_seq(k, "attention key");
    check_seq(v, "attention value");
    if (q.size() != k.size() || k.size() != v.size() || q[0].cols() != dim ||
        k[0].cols() != dim || v[0].cols() != dim ||
        q[0].rows() != k[0].rows() || k[0].rows() != v[0].rows())
      fail(ErrorCode::BadShape, "attention inputs must share (B, T, dim)");

    q_in = q;
    k_in = k;
    v_in = v;
    qp = project(q, Wq, bq);
    kp = project(k, Wk, bk);
    vp = project(v, Wv, bv);

    const int T = static_cast<int>(q.size());
    const int B = static_cast<int>(q[0].rows());
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(head_dim)));

    attn.assign(static_cast<size_t>(B) * heads, {});
    ctx.assign(T, Mat<S>::Zero(B, dim));
    Mat<S> Qh(T, head_dim), Kh(T, head_dim), Vh(T, head_dim);
    for (int b = 0; b < B; ++b) {
      for (int hd = 0; hd < heads; ++hd) {
        for (int t = 0; t < T; ++t) {
          Qh.row(t) = qp[t].row(b).segment(hd * head_dim, head_dim);
          Kh.row(t) = kp[t].row(b).segment(hd * head_dim, head_dim);
          Vh.row(t) = vp[t].row(b).segment(hd * head_dim, head_dim);
        }
        Mat<S> scores = Qh * Kh.transpose() * scale;
        Mat<S> A = softmax_rows(scores);
        attn[static_cast<size_t>(b) * heads + hd] = A;
        const Mat<S> Oh = A * Vh;
        for (int t = 0; t < T; ++t)
          ctx[t].row(b).segment(hd * head_dim, head_dim) = Oh.row(t);
      }
    }
    return project(ctx, Wo, bo);
  }

  Seq<S> backward(const Seq<S>& dout) {
    const int T = static_cast<int>(dout.size());
    const int B = static_cast<int>(dout[0].rows());
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(head_dim)));

    // output projection
    Seq<S> dctx(T);
    for (int t = 0; t < T; ++t) {
      gWo.noalias() += dout[t].transpose() * ctx[t];
      gbo.noalias() += dout[t].colwise().sum().transpose();
      dctx[t] = dout[t] * Wo;
    }

    Seq<S> dqp(T), dkp(T), dvp(T);
    for (int t = 0; t < T; ++t) {
      dqp[t] = Mat<S>::Zero(B, dim);
      dkp[t] = Mat<S>::Zero(B, dim);
      dvp[t] = Mat<S>::Zero(B, dim);
    }

    Mat<S> Qh(T, head_dim), Kh(T, head_dim), Vh(T, head_dim), dOh(T, head_dim);
    for (int b = 0; b < B; ++b) {
      for (int hd = 0; hd < heads; ++hd) {
        for (int t = 0; t < T; ++t) {
          Qh.row(t) = qp[t].row(b).segment(hd * head_dim, head_dim);
          Kh.row(t) = kp[t].row(b).segment(hd * head_dim, head_dim);
          Vh.row(t) = vp[t].row(b).segment(hd * head_dim, head_dim);
          dOh.row(t) = dctx[t].row(b).segment(hd * head_dim, head_dim);
        }
        const Mat<S>& A = attn[static_cast<size_t>(b) * heads + hd];
        const Mat<S> dA = dOh * Vh.transpose();
        const Mat<S> dVh = A.transpose() * dOh;
        // softmax backward per row: dS = A .* (dA - rowsum(dA .* A))
        Mat<S> dS(T, T);
        for (int t = 0; t < T; ++t) {
          const S dot = dA.row(t).cwiseProduct(A.row(t)).sum();
          dS.row(t) = (A.row(t).array() * (dA.row(t).array() - dot)).matrix();
        }
        const Mat<S> dQh = dS * Kh * scale;
        const Mat<S> dKh = dS.transpose() * Qh * scale;
        for (int t = 0; t < T; ++t) {
          dqp[t].row(b).segment(hd * head_dim, head_dim) = dQh.row(t);
          dkp[t].row(b).segment(hd * head_dim, head_dim) = dKh.row(t);
          dvp[t].row(b).segment(hd * head_dim, head_dim) = dVh.row(t);
        }
      }
    }

    Seq<S> dq(T), dk(T), dv(T);
    for (int t = 0; t < T; ++t) {
      gWq.noalias() += dqp[t].transpose() * q_in[t];
      gbq.noalias() += dqp[t].colwise().sum().transpose();
      dq[t] = dqp[t] * Wq;
      gWk.noalias() += dkp[t].transpose() * k_in[t];
      gbk.noalias() += dkp[t].colwise().sum().transpose();
      dk[t] = dkp[t] * Wk;
      gWv.noalias() += dvp[t].transpose() * v_in[t];
      gbv.noalias() += dvp[t].colwise().sum().transpose();
      dv[t] = dvp[t] * Wv;
    }
    dq_out = dq;
    dk_out = dk;
    dv_out = dv;
    return dq;
  }

  // backward() fills these; callers needing all three read them directly.
  Seq<S> dq_out, dk_out, dv_out;

  void params(const std::string& p, ParamList<S>& out) {
    add_param(out, p + ".Wq", Wq, gWq);
    add_param(out, p + ".Wk", Wk, gWk);
    add_param(out, p + ".Wv", Wv, gWv);
    add_param(out, p + ".Wo", Wo, gWo);
    add_param(out, p + ".bq", bq, gbq);
    add_param(out, p + ".bk", bk, gbk);
    add_param(out, p + ".bv", bv, gbv);
    add_param(out, p + ".bo", bo, gbo);
  }
};

}  // namespace mscan::nn
