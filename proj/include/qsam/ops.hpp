#pragma once

#include "qsam/autodiff.hpp"
#include "qsam/conv.hpp"
#include "qsam/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>

namespace qsam {

namespace detail {

template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
  check(a.valid() && b.valid() && a.tape == b.tape,
        "operands recorded on different tapes");
  return *a.tape;
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b);
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& bv = t.value(b);
  check(av.same_shape(bv), "add: shape mismatch " + av.shape_str() + " vs " +
                               bv.shape_str());
  Tensor<T> y = av;
  y.data += bv.data;
  return t.record("add", std::move(y),
                  [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                    t.accum(a, g.data);
                    t.accum(b, g.data);
                  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape(a, b);
  const Tensor<T>& av = t.value(a);
  const Tensor<T>& bv = t.value(b);
  check(av.same_shape(bv), "mul: shape mismatch " + av.shape_str() + " vs " +
                               bv.shape_str());
  Tensor<T> y = av;
  y.data *= bv.data;
  return t.record("mul", std::move(y),
                  [a, b](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                    t.accum(a, g.data * t.value(b).data);
                    t.accum(b, g.data * t.value(a).data);
                  });
}

/// Sum of all entries, as a (1,1,1,1) scalar tensor. Accumulates in double.
template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x);
  const double s = xv.data.template cast<double>().sum();
  return t.record("sum", Tensor<T>::scalar(T(s)),
                  [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                    t.accum(x, ArrayX<T>::Constant(t.value(x).numel(),
                                                   g.data[0]));
                  });
}

/// Mean squared error over all entries, as a (1,1,1,1) scalar tensor.
/// The reduction runs in double regardless of T.
template <typename T>
Var<T> mse(Var<T> x, Var<T> target) {
  Tape<T>& t = detail::same_tape(x, target);
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& tv = t.value(target);
  check(xv.same_shape(tv), "mse: shape mismatch " + xv.shape_str() + " vs " +
                               tv.shape_str());
  const double m = (xv.data.template cast<double>() -
                    tv.data.template cast<double>())
                       .square()
                       .sum() /
                   double(xv.numel());
  return t.record(
      "mse", Tensor<T>::scalar(T(m)),
      [x, target](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& tv = t.value(target);
        const T coef = T(2) * g.data[0] / T(xv.numel());
        t.accum(x, coef * (xv.data - tv.data));
        t.accum(target, coef * (tv.data - xv.data));
      });
}

/// LeakyReLU applied independently to every real component plane.
template <typename T>
Var<T> leaky_relu_split(Var<T> x, T slope) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x);
  t.note_kink_margin(double(xv.data.abs().minCoeff()));
  Tensor<T> y = xv;
  y.data = (xv.data > T(0)).select(xv.data, slope * xv.data);
  return t.record("leaky_relu_split", std::move(y),
                  [x, slope](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
                    const Tensor<T>& xv = t.value(x);
                    t.accum(x, (xv.data > T(0)).select(g.data, slope * g.data));
                  });
}

/// Logistic sigmoid applied independently to every real component plane.
template <typename T>
Var<T> sigmoid_split(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x);
  Tensor<T> y = xv;
  y.data = T(1) / (T(1) + (-xv.data).exp());
  return t.record("sigmoid_split", std::move(y),
                  [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
                    // d/dx sigmoid = y (1 - y); reuse the saved output.
                    t.accum(x, g.data * y.data * (T(1) - y.data));
                  });
}

/// Nearest-neighbour 2x spatial upsampling.
template <typename T>
Var<T> upsample_nearest2x(Var<T> x) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = t.value(x);
  Tensor<T> y = Tensor<T>::zeros(xv.n, xv.c, 2 * xv.h, 2 * xv.w);
  for (int n = 0; n < xv.n; ++n)
    for (int c = 0; c < xv.c; ++c) {
      ConstPlaneMap<T> xp = xv.plane(n, c);
      PlaneMap<T> yp = y.plane(n, c);
      for (int i = 0; i < xv.h; ++i)
        for (int j = 0; j < xv.w; ++j) {
          const T v = xp(i, j);
          yp(2 * i, 2 * j) = v;
          yp(2 * i, 2 * j + 1) = v;
          yp(2 * i + 1, 2 * j) = v;
          yp(2 * i + 1, 2 * j + 1) = v;
        }
    }
  return t.record(
      "upsample_nearest2x", std::move(y),
      [x](Tape<T>& t, const Tensor<T>& g, const Tensor<T>&) {
        const Tensor<T>& xv = t.value(x);
        Tensor<T> gx = Tensor<T>::zeros_like(xv);
        for (int n = 0; n < xv.n; ++n)
          for (int c = 0; c < xv.c; ++c) {
            ConstPlaneMap<T> gp = g.plane(n, c);
            PlaneMap<T> gxp = gx.plane(n, c);
            for (int i = 0; i < xv.h; ++i)
              for (int j = 0; j < xv.w; ++j)
                gxp(i, j) = gp(2 * i, 2 * j) + gp(2 * i, 2 * j + 1) +
                            gp(2 * i + 1, 2 * j) + gp(2 * i + 1, 2 * j + 1);
          }
        t.accum(x, gx.data);
      });
}

/// Quaternion convolution. x is (N, 4*Ci, H, W) component-planar, w is
/// (Co, 4*Ci, k, k) holding the four kernel banks, bias is (1, 4*Co, 1, 1).
/// Implemented as a grouped real convolution with the structured block
/// weight matrix; the block matrix is rebuilt (not stored) in backward.
template <typename T>
Var<T> qconv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  Tape<T>& t = detail::same_tape(x, w);
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& wv = t.value(w);
  const Tensor<T>& bv = t.value(b);
  check(xv.c == wv.c, "qconv2d: input has " + std::to_string(xv.c) +
                          " real channels, kernel expects " +
                          std::to_string(wv.c));
  check(bv.n == 1 && bv.c == 4 * wv.n && bv.h == 1 && bv.w == 1,
        "qconv2d: bias shape " + bv.shape_str());
  const int k = wv.h;
  RowMatrix<T> wmat = quaternion_block_matrix(wv);
  Tensor<T> y = conv2d_forward(xv, wmat, bv, k, stride, pad);
  return t.record(
      "qconv2d", std::move(y),
      [x, w, b, k, stride, pad](Tape<T>& t, const Tensor<T>& g,
                                const Tensor<T>&) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& wv = t.value(w);
        RowMatrix<T> wmat = quaternion_block_matrix(wv);
        ConvGrads<T> gr =
            conv2d_backward(g, xv, wmat, k, stride, pad, t.wants_grad(x));
        if (t.wants_grad(x)) t.accum(x, gr.gx.data);
        Tensor<T> gw = Tensor<T>::zeros_like(wv);
        fold_block_matrix_grad(gr.gwmat, gw);
        t.accum(w, gw.data);
        t.accum(b, gr.gbias.data);
      });
}

/// Plain real convolution (the dense twin of qconv2d). x is (N, Ci, H, W),
/// w is (Co, Ci, k, k), bias is (1, Co, 1, 1).
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  Tape<T>& t = detail::same_tape(x, w);
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& wv = t.value(w);
  const Tensor<T>& bv = t.value(b);
  check(xv.c == wv.c, "conv2d: input has " + std::to_string(xv.c) +
                          " channels, kernel expects " + std::to_string(wv.c));
  check(bv.n == 1 && bv.c == wv.n && bv.h == 1 && bv.w == 1,
        "conv2d: bias shape " + bv.shape_str());
  const int k = wv.h;
  check(wv.h == wv.w, "conv2d: kernel must be square");
  RowMatrix<T> wmat = Eigen::Map<const RowMatrix<T>>(
      wv.data.data(), wv.n, std::int64_t(wv.c) * k * k);
  Tensor<T> y = conv2d_forward(xv, wmat, bv, k, stride, pad);
  return t.record(
      "conv2d", std::move(y),
      [x, w, b, k, stride, pad](Tape<T>& t, const Tensor<T>& g,
                                const Tensor<T>&) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& wv = t.value(w);
        RowMatrix<T> wmat = Eigen::Map<const RowMatrix<T>>(
            wv.data.data(), wv.n, std::int64_t(wv.c) * k * k);
        ConvGrads<T> gr =
            conv2d_backward(g, xv, wmat, k, stride, pad, t.wants_grad(x));
        if (t.wants_grad(x)) t.accum(x, gr.gx.data);
        t.accum(w, Eigen::Map<const ArrayX<T>>(gr.gwmat.data(),
                                               gr.gwmat.size()));
        t.accum(b, gr.gbias.data);
      });
}

/// Quaternion instance normalisation. Per item and quaternion channel the
/// four component planes share one variance; means are per component plane.
/// gamma is a real scale (1, C, 1, 1), beta a quaternion shift (1, 4C, 1, 1).
/// Statistics accumulate in double regardless of T.
template <typename T>
Var<T> qinstance_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  Tape<T>& t = detail::same_tape(x, gamma);
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& gv = t.value(gamma);
  const Tensor<T>& bv = t.value(beta);
  const int C = xv.qchannels();
  check(gv.n == 1 && gv.c == C && gv.h == 1 && gv.w == 1,
        "qinstance_norm: gamma shape " + gv.shape_str() + " for " +
            std::to_string(C) + " quaternion channels");
  check(bv.n == 1 && bv.c == 4 * C && bv.h == 1 && bv.w == 1,
        "qinstance_norm: beta shape " + bv.shape_str());
  const std::int64_t M = std::int64_t(xv.h) * xv.w;
  check(M > 0, "qinstance_norm: empty spatial extent");

  // Saved for backward: normalised activations and the per-group 1/sqrt(var).
  auto xhat = std::make_shared<Tensor<T>>(Tensor<T>::zeros_like(xv));
  auto inv = std::make_shared<Tensor<T>>(Tensor<T>::zeros(xv.n, C, 1, 1));
  Tensor<T> y = Tensor<T>::zeros_like(xv);
  for (int n = 0; n < xv.n; ++n)
    for (int qc = 0; qc < C; ++qc) {
      double mean[4];
      double var_acc = 0.0;
      for (int comp = 0; comp < 4; ++comp) {
        ConstPlaneMap<T> xp = xv.plane(n, comp * C + qc);
        mean[comp] = xp.template cast<double>().mean();
        var_acc += (xp.template cast<double>() - mean[comp]).square().sum();
      }
      const double sigma2 = var_acc / double(4 * M);
      const T invs = T(1.0 / std::sqrt(sigma2 + double(eps)));
      inv->at(n, qc, 0, 0) = invs;
      for (int comp = 0; comp < 4; ++comp) {
        const int ch = comp * C + qc;
        ConstPlaneMap<T> xp = xv.plane(n, ch);
        PlaneMap<T> hp = xhat->plane(n, ch);
        hp = (xp - T(mean[comp])) * invs;
        y.plane(n, ch) = gv.at(0, qc, 0, 0) * hp + bv.at(0, ch, 0, 0);
      }
    }

  return t.record(
      "qinstance_norm", std::move(y),
      [x, gamma, beta, xhat, inv](Tape<T>& t, const Tensor<T>& g,
                                  const Tensor<T>&) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& gv = t.value(gamma);
        const int C = xv.qchannels();
        const std::int64_t M = std::int64_t(xv.h) * xv.w;
        Tensor<T> gx = Tensor<T>::zeros_like(xv);
        Tensor<T> ggamma = Tensor<T>::zeros(1, C, 1, 1);
        Tensor<T> gbeta = Tensor<T>::zeros(1, 4 * C, 1, 1);
        for (int n = 0; n < xv.n; ++n)
          for (int qc = 0; qc < C; ++qc) {
            const T invs = inv->at(n, qc, 0, 0);
            const T gam = gv.at(0, qc, 0, 0);
            // Group-wide reductions, accumulated in double.
            double sum_gh = 0.0;   // sum of dxhat * xhat over the group
            double dgamma = 0.0;
            double dmean[4];
            for (int comp = 0; comp < 4; ++comp) {
              const int ch = comp * C + qc;
              ConstPlaneMap<T> gp = g.plane(n, ch);
              PlaneMap<T> hp = xhat->plane(n, ch);
              dgamma += (gp.template cast<double>() *
                         hp.template cast<double>())
                            .sum();
              gbeta.at(0, ch, 0, 0) += T(gp.template cast<double>().sum());
              // dxhat = g * gamma (gamma folded in below where cheaper)
              sum_gh += double(gam) * (gp.template cast<double>() *
                                       hp.template cast<double>())
                                          .sum();
              dmean[comp] =
                  -double(invs) * double(gam) *
                  gp.template cast<double>().sum();
            }
            ggamma.at(0, qc, 0, 0) += T(dgamma);
            const double dvar = -0.5 * double(invs) * double(invs) * sum_gh;
            for (int comp = 0; comp < 4; ++comp) {
              const int ch = comp * C + qc;
              ConstPlaneMap<T> gp = g.plane(n, ch);
              PlaneMap<T> hp = xhat->plane(n, ch);
              gx.plane(n, ch) =
                  gam * invs * gp +
                  T(dvar * 2.0 / double(4 * M)) * (hp / invs) +
                  T(dmean[comp] / double(M));
            }
          }
        t.accum(x, gx.data);
        t.accum(gamma, ggamma.data);
        t.accum(beta, gbeta.data);
      });
}

}  // namespace qsam
