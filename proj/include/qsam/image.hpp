#pragma once

#include "qsam/tensor.hpp"

#include <algorithm>

namespace qsam {

// Single luma convention for the whole library (BT.601 full range); used both
// for the luminosity component of the quaternion encoding and for the Y
// channel the metrics operate on.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// Planar RGB image with values in [0, 1].
template <typename T>
struct Rgb {
  Plane<T> r, g, b;

  Rgb() = default;
  Rgb(int h, int w)
      : r(Plane<T>::Zero(h, w)), g(Plane<T>::Zero(h, w)),
        b(Plane<T>::Zero(h, w)) {}

  int height() const { return int(r.rows()); }
  int width() const { return int(r.cols()); }
  bool same_shape(const Rgb& o) const {
    return r.rows() == o.r.rows() && r.cols() == o.r.cols();
  }
};

template <typename T>
bool in_unit_range(const Rgb<T>& img) {
  auto ok = [](const Plane<T>& p) {
    return (p >= T(0)).all() && (p <= T(1)).all();
  };
  return ok(img.r) && ok(img.g) && ok(img.b);
}

/// Encodes an RGB image as a 1-quaternion-channel tensor: per pixel the
/// quaternion (L, R, G, B) with L the BT.601 luma. Values must be in [0, 1].
template <typename T>
Tensor<T> encode_image(const Rgb<T>& img) {
  check(img.height() > 0 && img.width() > 0, "encode_image: empty image");
  check(in_unit_range(img), "encode_image: values outside [0, 1]");
  Tensor<T> q(1, 4, img.height(), img.width());
  q.plane(0, 0) = T(kLumaR) * img.r + T(kLumaG) * img.g + T(kLumaB) * img.b;
  q.plane(0, 1) = img.r;
  q.plane(0, 2) = img.g;
  q.plane(0, 3) = img.b;
  return q;
}

/// Encodes a batch of equally sized RGB images into a (B, 1q, H, W) tensor.
template <typename T>
Tensor<T> encode_batch(const std::vector<Rgb<T>>& imgs) {
  check(!imgs.empty(), "encode_batch: empty batch");
  Tensor<T> q(int(imgs.size()), 4, imgs[0].height(), imgs[0].width());
  for (size_t i = 0; i < imgs.size(); ++i) {
    check(imgs[i].same_shape(imgs[0]), "encode_batch: mixed image sizes");
    Tensor<T> one = encode_image(imgs[i]);
    q.data.segment(q.offset(int(i), 0, 0, 0), one.numel()) = one.data;
  }
  return q;
}

/// Extracts the RGB image of batch item `item` from a 1-quaternion-channel
/// tensor, clamping each component to [0, 1]. The luminosity component is
/// discarded.
template <typename T>
Rgb<T> decode_image(const Tensor<T>& q, int item = 0) {
  check(q.c == 4, "decode_image: expected a 1-quaternion-channel tensor, got " +
                      q.shape_str());
  check(item >= 0 && item < q.n, "decode_image: item out of range");
  Rgb<T> img(q.h, q.w);
  img.r = q.plane(item, 1).max(T(0)).min(T(1));
  img.g = q.plane(item, 2).max(T(0)).min(T(1));
  img.b = q.plane(item, 3).max(T(0)).min(T(1));
  return img;
}

}  // namespace qsam
