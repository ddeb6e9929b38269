#pragma once

#include <string>
#include <vector>

#include "mscan/nn/layers.hpp"
#include "mscan/nn/params.hpp"
#include "mscan/nn/tensor.hpp"

namespace mscan::nn {

// ---------------------------------------------------------------------------
// Gated recurrent unit.
//   r = sig(x Wr^T + h Ur^T + bir + bhr)
//   z = sig(x Wz^T + h Uz^T + biz + bhz)
//   n = tanh(x Wn^T + bin + r .* (h Un^T + bhn))
//   h' = (1 - z) .* n + z .* h
// With zero input, zero biases and zero initial state every step stays zero.
// ---------------------------------------------------------------------------
template <typename S>
struct GruCell {
  int in = 0, hidden = 0;
  Mat<S> Wr, Wz, Wn, Ur, Uz, Un;
  Mat<S> gWr, gWz, gWn, gUr, gUz, gUn;
  Vec<S> bir, bhr, biz, bhz, bin, bhn;
  Vec<S> gbir, gbhr, gbiz, gbhz, gbin, gbhn;

  struct Cache {
    Mat<S> x, h, r, z, n, a;  // a = h Un^T + bhn
  };

  GruCell() = default;
  GruCell(int in_, int hidden_, Rng& rng) : in(in_), hidden(hidden_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto mk = [&](Mat<S>& w, Mat<S>& g, int r_, int c_) {
      w.resize(r_, c_);
      g = Mat<S>::Zero(r_, c_);
      init_uniform(w, rng, bound);
    };
    mk(Wr, gWr, hidden, in);
    mk(Wz, gWz, hidden, in);
    mk(Wn, gWn, hidden, in);
    mk(Ur, gUr, hidden, hidden);
    mk(Uz, gUz, hidden, hidden);
    mk(Un, gUn, hidden, hidden);
    auto mkb = [&](Vec<S>& b, Vec<S>& g) {
      b.resize(hidden);
      g = Vec<S>::Zero(hidden);
      init_uniform(b, rng, bound);
    };
    mkb(bir, gbir);
    mkb(bhr, gbhr);
    mkb(biz, gbiz);
    mkb(bhz, gbhz);
    mkb(bin, gbin);
    mkb(bhn, gbhn);
  }

  Mat<S> step(const Mat<S>& x, const Mat<S>& h, Cache& cache) const {
    Mat<S> r = x * Wr.transpose() + h * Ur.transpose();
    r.rowwise() += (bir + bhr).transpose();
    r = sigmoid(r);
    Mat<S> z = x * Wz.transpose() + h * Uz.transpose();
    z.rowwise() += (biz + bhz).transpose();
    z = sigmoid(z);
    Mat<S> a = h * Un.transpose();
    a.rowwise() += bhn.transpose();
    Mat<S> n = x * Wn.transpose();
    n.rowwise() += bin.transpose();
    n = (n + r.cwiseProduct(a)).array().tanh().matrix();
    Mat<S> h_next =
        (Mat<S>::Ones(z.rows(), z.cols()) - z).cwiseProduct(n) + z.cwiseProduct(h);
    cache = {x, h, r, z, n, a};
    return h_next;
  }

  // Returns dx; adds state gradient into dh (in/out).
  Mat<S> backward_step(const Mat<S>& dh_next, Mat<S>& dh, const Cache& c) {
    const Mat<S> dz_pre = dh_next.cwiseProduct(c.h - c.n)
                              .cwiseProduct(c.z)
                              .cwiseProduct(Mat<S>::Ones(c.z.rows(), c.z.cols()) - c.z);
    const Mat<S> dn = dh_next.cwiseProduct(Mat<S>::Ones(c.z.rows(), c.z.cols()) - c.z);
    const Mat<S> dn_pre =
        dn.cwiseProduct(Mat<S>::Ones(c.n.rows(), c.n.cols()) - c.n.cwiseProduct(c.n));
    dh = dh_next.cwiseProduct(c.z);

    const Mat<S> dr = dn_pre.cwiseProduct(c.a);
    const Mat<S> da = dn_pre.cwiseProduct(c.r);
    const Mat<S> dr_pre = dr.cwiseProduct(c.r).cwiseProduct(
        Mat<S>::Ones(c.r.rows(), c.r.cols()) - c.r);

    gWn.noalias() += dn_pre.transpose() * c.x;
    gbin.noalias() += dn_pre.colwise().sum().transpose();
    Mat<S> dx = dn_pre * Wn;

    gUn.noalias() += da.transpose() * c.h;
    gbhn.noalias() += da.colwise().sum().transpose();
    dh.noalias() += da * Un;

    gWr.noalias() += dr_pre.transpose() * c.x;
    gUr.noalias() += dr_pre.transpose() * c.h;
    gbir.noalias() += dr_pre.colwise().sum().transpose();
    gbhr.noalias() += dr_pre.colwise().sum().transpose();
    dx.noalias() += dr_pre * Wr;
    dh.noalias() += dr_pre * Ur;

    gWz.noalias() += dz_pre.transpose() * c.x;
    gUz.noalias() += dz_pre.transpose() * c.h;
    gbiz.noalias() += dz_pre.colwise().sum().transpose();
    gbhz.noalias() += dz_pre.colwise().sum().transpose();
    dx.noalias() += dz_pre * Wz;
    dh.noalias() += dz_pre * Uz;
    return dx;
  }

  void params(const std::string& p, ParamList<S>& out) {
    add_param(out, p + ".Wr", Wr, gWr);
    add_param(out, p + ".Wz", Wz, gWz);
    add_param(out, p + ".Wn", Wn, gWn);
    add_param(out, p + ".Ur", Ur, gUr);
    add_param(out, p + ".Uz", Uz, gUz);
    add_param(out, p + ".Un", Un, gUn);
    add_param(out, p + ".bir", bir, gbir);
    add_param(out, p + ".bhr", bhr, gbhr);
    add_param(out, p + ".biz", biz, gbiz);
    add_param(out, p + ".bhz", bhz, gbhz);
    add_param(out, p + ".bin", bin, gbin);
    add_param(out, p + ".bhn", bhn, gbhn);
  }
};

// One direction of a GRU over a (T, B, D) sequence, initial state zero.
template <typename S>
struct GruDirection {
  GruCell<S> cell;
  std::vector<typename GruCell<S>::Cache> caches;

  GruDirection() = default;
  GruDirection(int in, int hidden, Rng& rng) : cell(in, hidden, rng) {}

  Seq<S> forward(const Seq<S>& x) {
    const int T = static_cast<int>(x.size());
    const Eigen::Index B = x[0].rows();
    caches.assign(T, {});
    Seq<S> out(T);
    Mat<S> h = Mat<S>::Zero(B, cell.hidden);
    for (int t = 0; t < T; ++t) {
      h = cell.step(x[t], h, caches[t]);
      out[t] = h;
    }
    return out;
  }

  Seq<S> backward(const Seq<S>& dout) {
    const int T = static_cast<int>(dout.size());
    const Eigen::Index B = dout[0].rows();
    Seq<S> dx(T);
    Mat<S> dh = Mat<S>::Zero(B, cell.hidden);
    for (int t = T - 1; t >= 0; --t) {
      const Mat<S> dh_total = dout[t] + dh;
      dx[t] = cell.backward_step(dh_total, dh, caches[t]);
    }
    return dx;
  }
};

// Bidirectional GRU: forward and reverse passes with separate cells, outputs
// concatenated per step to width 2*hidden.
template <typename S>
struct BiGru {
  GruDirection<S> fwd, bwd;
  int hidden = 0;

  BiGru() = default;
  BiGru(int in, int hidden_, Rng& rng)
      : fwd(in, hidden_, rng), bwd(in, hidden_, rng), hidden(hidden_) {}

  Seq<S> forward(const Seq<S>& x) {
    check_seq(x, "bigru");
    const int T = static_cast<int>(x.size());
    Seq<S> xr(x.rbegin(), x.rend());
    const Seq<S> hf = fwd.forward(x);
    const Seq<S> hb = bwd.forward(xr);
    Seq<S> out(T);
    for (int t = 0; t < T; ++t) {
      out[t].resize(x[t].rows(), 2 * hidden);
      out[t].leftCols(hidden) = hf[t];
      out[t].rightCols(hidden) = hb[T - 1 - t];
    }
    return out;
  }

  Seq<S> backward(const Seq<S>& dout) {
    const int T = static_cast<int>(dout.size());
    Seq<S> df(T), db(T);
    for (int t = 0; t < T; ++t) {
      df[t] = dout[t].leftCols(hidden);
      db[T - 1 - t] = dout[t].rightCols(hidden);
    }
    const Seq<S> dxf = fwd.backward(df);
    const Seq<S> dxb = bwd.backward(db);
    Seq<S> dx(T);
    for (int t = 0; t < T; ++t) dx[t] = dxf[t] + dxb[T - 1 - t];
    return dx;
  }

  void params(const std::string& p, ParamList<S>& out) {
    fwd.cell.params(p + ".fwd", out);
    bwd.cell.params(p + ".bwd", out);
  }
};

// ---------------------------------------------------------------------------
// LSTM cell (single bias per gate).
// ---------------------------------------------------------------------------
template <typename S>
struct LstmCell {
  int in = 0, hidden = 0;
  Mat<S> Wi, Wf, Wg, Wo, Ui, Uf, Ug, Uo;
  Mat<S> gWi, gWf, gWg, gWo, gUi, gUf, gUg, gUo;
  Vec<S> bi, bf, bg, bo;
  Vec<S> gbi, gbf, gbg, gbo;

  struct Cache {
    Mat<S> x, h, c, i, f, g, o, c_next;
  };

  LstmCell() = default;
  LstmCell(int in_, int hidden_, Rng& rng) : in(in_), hidden(hidden_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    auto mk = [&](Mat<S>& w, Mat<S>& g, int r_, int c_) {
      w.resize(r_, c_);
      g = Mat<S>::Zero(r_, c_);
      init_uniform(w, rng, bound);
    };
    mk(Wi, gWi, hidden, in);
    mk(Wf, gWf, hidden, in);
    mk(Wg, gWg, hidden, in);
    mk(Wo, gWo, hidden, in);
    mk(Ui, gUi, hidden, hidden);
    mk(Uf, gUf, hidden, hidden);
    mk(Ug, gUg, hidden, hidden);
    mk(Uo, gUo, hidden, hidden);
    auto mkb = [&](Vec<S>& b, Vec<S>& g) {
      b.resize(hidden);
      g = Vec<S>::Zero(hidden);
      init_uniform(b, rng, bound);
    };
    mkb(bi, gbi);
    mkb(bf, gbf);
    mkb(bg, gbg);
    mkb(bo, gbo);
  }

  void step(const Mat<S>& x, const Mat<S>& h, const Mat<S>& c, Mat<S>& h_next,
            Mat<S>& c_next, Cache& cache) const {
    auto gate = [&](const Mat<S>& W, const Mat<S>& U, const Vec<S>& b) {
      Mat<S> v = x * W.transpose() + h * U.transpose();
      v.rowwise() += b.transpose();
      return v;
    };
    const Mat<S> i = sigmoid(gate(Wi, Ui, bi));
    const Mat<S> f = sigmoid(gate(Wf, Uf, bf));
    const Mat<S> g = gate(Wg, Ug, bg).array().tanh().matrix();
    const Mat<S> o = sigmoid(gate(Wo, Uo, bo));
    c_next = f.cwiseProduct(c) + i.cwiseProduct(g);
    h_next = o.cwiseProduct(c_next.array().tanh().matrix());
    cache = {x, h, c, i, f, g, o, c_next};
  }

  // Consumes dh_next/dc_next, emits dx and the gradients w.r.t. previous h, c.
  Mat<S> backward_step(const Mat<S>& dh_next, const Mat<S>& dc_next, Mat<S>& dh,
                       Mat<S>& dc, const Cache& cc) {
    const Mat<S> tc = cc.c_next.array().tanh().matrix();
    const Mat<S> ones = Mat<S>::Ones(dh_next.rows(), dh_next.cols());
    const Mat<S> do_pre = dh_next.cwiseProduct(tc).cwiseProduct(cc.o).cwiseProduct(
        ones - cc.o);
    const Mat<S> dc_total =
        dc_next + dh_next.cwiseProduct(cc.o).cwiseProduct(ones - tc.cwiseProduct(tc));
    const Mat<S> df_pre = dc_total.cwiseProduct(cc.c).cwiseProduct(cc.f).cwiseProduct(
        ones - cc.f);
    const Mat<S> di_pre = dc_total.cwiseProduct(cc.g).cwiseProduct(cc.i).cwiseProduct(
        ones - cc.i);
    const Mat<S> dg_pre = dc_total.cwiseProduct(cc.i).cwiseProduct(
        ones - cc.g.cwiseProduct(cc.g));
    dc = dc_total.cwiseProduct(cc.f);

    Mat<S> dx = di_pre * Wi + df_pre * Wf + dg_pre * Wg + do_pre * Wo;
    dh = di_pre * Ui + df_pre * Uf + dg_pre * Ug + do_pre * Uo;

    gWi.noalias() += di_pre.transpose() * cc.x;
    gWf.noalias() += df_pre.transpose() * cc.x;
    gWg.noalias() += dg_pre.transpose() * cc.x;
    gWo.noalias() += do_pre.transpose() * cc.x;
    gUi.noalias() += di_pre.transpose() * cc.h;
    gUf.noalias() += df_pre.transpose() * cc.h;
    gUg.noalias() += dg_pre.transpose() * cc.h;
    gUo.noalias() += do_pre.transpose() * cc.h;
    gbi.noalias() += di_pre.colwise().sum().transpose();
    gbf.noalias() += df_pre.colwise().sum().transpose();
    gbg.noalias() += dg_pre.colwise().sum().transpose();
    gbo.noalias() += do_pre.colwise().sum().transpose();
    return dx;
  }

  void params(const std::string& p, ParamList<S>& out) {
    add_param(out, p + ".Wi", Wi, gWi);
    add_param(out, p + ".Wf", Wf, gWf);
    add_param(out, p + ".Wg", Wg, gWg);
    add_param(out, p + ".Wo", Wo, gWo);
    add_param(out, p + ".Ui", Ui, gUi);
    add_param(out, p + ".Uf", Uf, gUf);
    add_param(out, p + ".Ug", Ug, gUg);
    add_param(out, p + ".Uo", Uo, gUo);
    add_param(out, p + ".bi", bi, gbi);
    add_param(out, p + ".bf", bf, gbf);
    add_param(out, p + ".bg", bg, gbg);
    add_param(out, p + ".bo", bo, gbo);
  }
};

// Runs an LSTM over a short sequence and returns only the final hidden state.
template <typename S>
struct LstmLastState {
  LstmCell<S> cell;
  std::vector<typename LstmCell<S>::Cache> caches;

  LstmLastState() = default;
  LstmLastState(int in, int hidden, Rng& rng) : cell(in, hidden, rng) {}

  Mat<S> forward(const Seq<S>& x) {
    check_seq(x, "lstm");
    const int T = static_cast<int>(x.size());
    const Eigen::Index B = x[0].rows();
    caches.assign(T, {});
    Mat<S> h = Mat<S>::Zero(B, cell.hidden);
    Mat<S> c = Mat<S>::Zero(B, cell.hidden);
    for (int t = 0; t < T; ++t) {
      Mat<S> hn, cn;
      cell.step(x[t], h, c, hn, cn, caches[t]);
      h = hn;
      c = cn;
    }
    return h;
  }

  Seq<S> backward(const Mat<S>& dh_last) {
    const int T = static_cast<int>(caches.size());
    Seq<S> dx(T);
    Mat<S> dh = dh_last;
    Mat<S> dc = Mat<S>::Zero(dh_last.rows(), dh_last.cols());
    for (int t = T - 1; t >= 0; --t) {
      Mat<S> dh_prev, dc_prev;
      dx[t] = cell.backward_step(dh, dc, dh_prev, dc_prev, caches[t]);
      dh = dh_prev;
      dc = dc_prev;
    }
    return dx;
  }
};

}  // namespace mscan::nn
