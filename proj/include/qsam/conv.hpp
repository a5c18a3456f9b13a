#pragma once

#include "qsam/tensor.hpp"

#include <Eigen/Dense>

namespace qsam {

template <typename T>
using RowMatrix =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VectorX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ConvGeom {
  int ci = 0, co = 0;  // real channel counts
  int k = 1, stride = 1, pad = 0;
  int ho = 0, wo = 0;

  static ConvGeom make(int ci, int co, int k, int stride, int pad, int h, int w) {
    check(k >= 1 && k % 2 == 1, "convolution kernel size must be odd");
    check(stride >= 1, "convolution stride must be positive");
    check(pad >= 0, "convolution padding must be non-negative");
    check(h + 2 * pad >= k && w + 2 * pad >= k,
          "convolution input smaller than kernel");
    ConvGeom g{ci, co, k, stride, pad, 0, 0};
    g.ho = (h + 2 * pad - k) / stride + 1;
    g.wo = (w + 2 * pad - k) / stride + 1;
    return g;
  }
};

// Hamilton product q' = W (x) q as a 4x4 block structure over the component
// groups. Row = output component, column = input component; entry selects the
// kernel bank (0..3 for W0..W3) and its sign:
//
//   [ W0 -W1 -W2 -W3 ]
//   [ W1  W0 -W3  W2 ]
//   [ W2  W3  W0 -W1 ]
//   [ W3 -W2  W1  W0 ]
inline constexpr int kBlockBank[4][4] = {
    {0, 1, 2, 3}, {1, 0, 3, 2}, {2, 3, 0, 1}, {3, 2, 1, 0}};
inline constexpr int kBlockSign[4][4] = {
    {+1, -1, -1, -1}, {+1, +1, -1, +1}, {+1, +1, +1, -1}, {+1, -1, +1, +1}};

/// Expands a quaternion kernel tensor (Co, 4*Ci, k, k) holding the four banks
/// in component-planar order into the dense real weight matrix
/// (4*Co) x (4*Ci*k*k) of the equivalent grouped real convolution.
template <typename T>
RowMatrix<T> quaternion_block_matrix(const Tensor<T>& w) {
  const int co = w.n;
  const int ci = w.qchannels();
  const int k = w.h;
  check(w.h == w.w, "quaternion kernel must be square");
  const int kk = k * k;
  RowMatrix<T> m(4 * co, 4 * ci * kk);
  for (int oc = 0; oc < 4; ++oc)
    for (int icomp = 0; icomp < 4; ++icomp) {
      const int bank = kBlockBank[oc][icomp];
      const T sign = T(kBlockSign[oc][icomp]);
      for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i) {
          const T* src = w.data.data() + w.offset(o, bank * ci + i, 0, 0);
          T* dst = m.data() +
                   std::int64_t(oc * co + o) * m.cols() + (icomp * ci + i) * kk;
          for (int t = 0; t < kk; ++t) dst[t] = sign * src[t];
        }
    }
  return m;
}

/// Folds a gradient w.r.t. the block weight matrix back onto the quaternion
/// kernel banks (each bank entry appears four times in the block matrix).
template <typename T>
void fold_block_matrix_grad(const RowMatrix<T>& gm, Tensor<T>& gw) {
  const int co = gw.n;
  const int ci = gw.qchannels();
  const int kk = gw.h * gw.w;
  for (int oc = 0; oc < 4; ++oc)
    for (int icomp = 0; icomp < 4; ++icomp) {
      const int bank = kBlockBank[oc][icomp];
      const T sign = T(kBlockSign[oc][icomp]);
      for (int o = 0; o < co; ++o)
        for (int i = 0; i < ci; ++i) {
          const T* src = gm.data() +
                         std::int64_t(oc * co + o) * gm.cols() +
                         (icomp * ci + i) * kk;
          T* dst = gw.data.data() + gw.offset(o, bank * ci + i, 0, 0);
          for (int t = 0; t < kk; ++t) dst[t] += sign * src[t];
        }
    }
}

/// Gathers the receptive fields of batch item `item` into a
/// (ci*k*k) x (ho*wo) row-major matrix with zero padding.
template <typename T>
void im2col(const Tensor<T>& x, int item, const ConvGeom& g, RowMatrix<T>& cols) {
  cols.setZero(g.ci * g.k * g.k, std::int64_t(g.ho) * g.wo);
  for (int ic = 0; ic < g.ci; ++ic)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = cols.data() +
                 std::int64_t((ic * g.k + ky) * g.k + kx) * cols.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= x.h) continue;
          const T* src = x.data.data() + x.offset(item, ic, iy, 0);
          T* dst = row + std::int64_t(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < x.w) dst[ox] = src[ix];
          }
        }
      }
}

/// Scatter-adds a column-space gradient back onto the input gradient.
template <typename T>
void col2im_add(const RowMatrix<T>& cols, int item, const ConvGeom& g,
                Tensor<T>& gx) {
  for (int ic = 0; ic < g.ci; ++ic)
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = cols.data() +
                       std::int64_t((ic * g.k + ky) * g.k + kx) * cols.cols();
        for (int oy = 0; oy < g.ho; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= gx.h) continue;
          T* dst = gx.data.data() + gx.offset(item, ic, iy, 0);
          const T* src = row + std::int64_t(oy) * g.wo;
          for (int ox = 0; ox < g.wo; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix >= 0 && ix < gx.w) dst[ix] += src[ox];
          }
        }
      }
}

/// Real 2-D convolution of a (N, Ci, H, W) tensor with a (Co x Ci*k*k) weight
/// matrix; bias (if non-empty) is one value per output channel, shape
/// (1, Co, 1, 1).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const RowMatrix<T>& wmat,
                         const Tensor<T>& bias, int k, int stride, int pad) {
  const ConvGeom g =
      ConvGeom::make(x.c, int(wmat.rows()), k, stride, pad, x.h, x.w);
  check(wmat.cols() == std::int64_t(g.ci) * k * k,
        "conv2d: weight matrix does not match input channels");
  const bool with_bias = bias.numel() > 0;
  if (with_bias)
    check(bias.n == 1 && bias.c == g.co && bias.h == 1 && bias.w == 1,
          "conv2d: bias shape mismatch");

  Tensor<T> y(x.n, g.co, g.ho, g.wo);
  RowMatrix<T> cols;
  for (int item = 0; item < x.n; ++item) {
    im2col(x, item, g, cols);
    Eigen::Map<RowMatrix<T>> ym(y.data.data() + y.offset(item, 0, 0, 0), g.co,
                                std::int64_t(g.ho) * g.wo);
    ym.noalias() = wmat * cols;
    if (with_bias)
      ym.colwise() += Eigen::Map<const VectorX<T>>(bias.data.data(), g.co);
  }
  return y;
}

template <typename T>
struct ConvGrads {
  Tensor<T> gx;        // empty when not requested
  RowMatrix<T> gwmat;  // co x ci*k*k
  Tensor<T> gbias;     // (1, co, 1, 1)
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& gy, const Tensor<T>& x,
                             const RowMatrix<T>& wmat, int k, int stride,
                             int pad, bool need_gx) {
  const ConvGeom g =
      ConvGeom::make(x.c, int(wmat.rows()), k, stride, pad, x.h, x.w);
  check(gy.n == x.n && gy.c == g.co && gy.h == g.ho && gy.w == g.wo,
        "conv2d_backward: output gradient shape mismatch");

  ConvGrads<T> grads;
  grads.gwmat = RowMatrix<T>::Zero(wmat.rows(), wmat.cols());
  grads.gbias = Tensor<T>(1, g.co, 1, 1);
  if (need_gx) grads.gx = Tensor<T>::zeros_like(x);

  Eigen::Map<VectorX<T>> gb(grads.gbias.data.data(), g.co);
  RowMatrix<T> cols, gcols;
  for (int item = 0; item < x.n; ++item) {
    im2col(x, item, g, cols);
    Eigen::Map<const RowMatrix<T>> gym(
        gy.data.data() + gy.offset(item, 0, 0, 0), g.co,
        std::int64_t(g.ho) * g.wo);
    grads.gwmat.noalias() += gym * cols.transpose();
    gb += gym.rowwise().sum();
    if (need_gx) {
      gcols.noalias() = wmat.transpose() * gym;
      col2im_add(gcols, item, g, grads.gx);
    }
  }
  return grads;
}

}  // namespace qsam
