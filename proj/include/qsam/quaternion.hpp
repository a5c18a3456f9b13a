#pragma once

#include <cmath>

namespace qsam {

/// Quaternion scalar q = a + b i + c j + d k with i^2 = j^2 = k^2 = ijk = -1.
template <typename T>
struct Quaternion {
  T a{}, b{}, c{}, d{};

  Quaternion() = default;
  Quaternion(T a_, T b_, T c_, T d_) : a(a_), b(b_), c(c_), d(d_) {}

  Quaternion operator+(const Quaternion& o) const {
    return {a + o.a, b + o.b, c + o.c, d + o.d};
  }
  Quaternion operator-(const Quaternion& o) const {
    return {a - o.a, b - o.b, c - o.c, d - o.d};
  }
  Quaternion operator*(T s) const { return {a * s, b * s, c * s, d * s}; }
};

/// Hamilton product x*y (non-commutative).
template <typename T>
Quaternion<T> hamilton(const Quaternion<T>& x, const Quaternion<T>& y) {
  return {x.a * y.a - x.b * y.b - x.c * y.c - x.d * y.d,
          x.a * y.b + x.b * y.a + x.c * y.d - x.d * y.c,
          x.a * y.c - x.b * y.d + x.c * y.a + x.d * y.b,
          x.a * y.d + x.b * y.c - x.c * y.b + x.d * y.a};
}

template <typename T>
Quaternion<T> conjugate(const Quaternion<T>& q) {
  return {q.a, -q.b, -q.c, -q.d};
}

template <typename T>
T modulus(const Quaternion<T>& q) {
  return std::sqrt(q.a * q.a + q.b * q.b + q.c * q.c + q.d * q.d);
}

}  // namespace qsam
