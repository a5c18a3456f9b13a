#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qsam {

template <typename T>
using ArrayX = Eigen::Array<T, Eigen::Dynamic, 1>;
template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using PlaneMap = Eigen::Map<Plane<T>>;
template <typename T>
using ConstPlaneMap = Eigen::Map<const Plane<T>>;

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Dense NCHW tensor over a real scalar, the storage type for every value in
/// the library. A feature map with C quaternion channels is stored with
/// c = 4*C real planes per item in component-planar order: the first C planes
/// hold the real (a) components, followed by the i, j and k groups. The same
/// ordering is used everywhere (encode, compute, checkpoint). Plain real
/// tensors (per-channel scalars, scalar losses) use the same type with an
/// arbitrary channel count.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  ArrayX<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(ArrayX<T>::Zero(std::int64_t(n_) * c_ * h_ * w_)) {
    check(n_ >= 0 && c_ >= 0 && h_ >= 0 && w_ >= 0, "negative tensor dim");
  }

  static Tensor zeros(int n, int c, int h, int w) { return Tensor(n, c, h, w); }
  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }
  static Tensor scalar(T v) {
    Tensor t(1, 1, 1, 1);
    t.data[0] = v;
    return t;
  }

  std::int64_t numel() const { return std::int64_t(n) * c * h * w; }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }

  /// Quaternion channel count; valid only for component-planar maps.
  int qchannels() const {
    check(c % 4 == 0, "tensor has " + std::to_string(c) +
                          " real channels, not a multiple of 4");
    return c / 4;
  }

  std::int64_t offset(int in, int ic, int iy, int ix) const {
    return ((std::int64_t(in) * c + ic) * h + iy) * w + ix;
  }
  T& at(int in, int ic, int iy, int ix) { return data[offset(in, ic, iy, ix)]; }
  T at(int in, int ic, int iy, int ix) const { return data[offset(in, ic, iy, ix)]; }

  PlaneMap<T> plane(int in, int ic) {
    return PlaneMap<T>(data.data() + offset(in, ic, 0, 0), h, w);
  }
  ConstPlaneMap<T> plane(int in, int ic) const {
    return ConstPlaneMap<T>(data.data() + offset(in, ic, 0, 0), h, w);
  }

  T scalar_value() const {
    check(numel() == 1, "tensor " + shape_str() + " is not a scalar");
    return data[0];
  }
};

/// Assembles a component-planar tensor from the four component groups, each
/// given as a (B, C, H, W) real tensor.
template <typename T>
Tensor<T> pack_components(const Tensor<T>& a, const Tensor<T>& b,
                          const Tensor<T>& c, const Tensor<T>& d) {
  check(a.same_shape(b) && a.same_shape(c) && a.same_shape(d),
        "pack_components: component shapes differ");
  Tensor<T> out(a.n, 4 * a.c, a.h, a.w);
  const Tensor<T>* comps[4] = {&a, &b, &c, &d};
  const std::int64_t group = std::int64_t(a.c) * a.h * a.w;
  for (int in = 0; in < a.n; ++in)
    for (int k = 0; k < 4; ++k)
      out.data.segment(out.offset(in, k * a.c, 0, 0), group) =
          comps[k]->data.segment(comps[k]->offset(in, 0, 0, 0), group);
  return out;
}

/// Splits a component-planar tensor back into its four component groups.
template <typename T>
std::array<Tensor<T>, 4> unpack_components(const Tensor<T>& t) {
  const int qc = t.qchannels();
  std::array<Tensor<T>, 4> out{Tensor<T>(t.n, qc, t.h, t.w),
                               Tensor<T>(t.n, qc, t.h, t.w),
                               Tensor<T>(t.n, qc, t.h, t.w),
                               Tensor<T>(t.n, qc, t.h, t.w)};
  const std::int64_t group = std::int64_t(qc) * t.h * t.w;
  for (int in = 0; in < t.n; ++in)
    for (int k = 0; k < 4; ++k)
      out[k].data.segment(out[k].offset(in, 0, 0, 0), group) =
          t.data.segment(t.offset(in, k * qc, 0, 0), group);
  return out;
}

}  // namespace qsam
