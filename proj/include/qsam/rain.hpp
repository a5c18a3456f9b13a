#pragma once

#include "qsam/png_io.hpp"
#include "qsam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace qsam {

/// Parameters of the synthetic rain model. Streaks are anti-aliased bright
/// capsules (line segments with round caps) composited additively onto the
/// clean image; the streak layer is optionally Gaussian-blurred before
/// compositing. Intensities must be non-negative so the streak layer only
/// ever brightens: rainy = clip(clean + streaks).
struct RainParams {
  double streaks_per_mpx = 1200.0;  // expected streak count per megapixel
  double len_min = 15.0, len_max = 45.0;         // pixels
  double width_min = 1.0, width_max = 3.0;       // full width, pixels
  double angle_range_deg = 20.0;                 // tilt from vertical, +/- range
  double intensity_min = 0.15, intensity_max = 0.6;
  double blur_sigma = 0.7;                       // 0 disables the blur
  std::uint64_t seed = 0;

  void validate() const {
    check(streaks_per_mpx >= 0, "rain params: negative streak density");
    check(len_min > 0 && len_min <= len_max, "rain params: bad length range");
    check(width_min > 0 && width_min <= width_max, "rain params: bad width range");
    check(angle_range_deg >= 0 && angle_range_deg <= 90,
          "rain params: angle range must lie in [0, 90] degrees");
    check(intensity_min >= 0 && intensity_min <= intensity_max && intensity_max <= 1,
          "rain params: intensities must lie in [0, 1] with min <= max");
    check(blur_sigma >= 0, "rain params: negative blur sigma");
  }
};

template <typename T>
struct RainResult {
  Rgb<T> rainy;
  Plane<T> streaks;  // exactly the layer added before clipping
};

namespace detail {

inline double point_segment_dist(double px, double py, double ax, double ay,
                                 double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double wx = px - ax, wy = py - ay;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = wx - t * vx, dy = wy - t * vy;
  return std::sqrt(dx * dx + dy * dy);
}

/// Zero-padded separable Gaussian blur; kernel radius ceil(3*sigma).
inline Plane<double> gaussian_blur(const Plane<double>& p, double sigma) {
  if (sigma <= 0) return p;
  const int rad = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> g(std::size_t(2 * rad + 1));
  double s = 0;
  for (int i = -rad; i <= rad; ++i) {
    g[std::size_t(i + rad)] = std::exp(-(double(i) * i) / (2.0 * sigma * sigma));
    s += g[std::size_t(i + rad)];
  }
  for (double& v : g) v /= s;

  const int h = int(p.rows()), w = int(p.cols());
  Plane<double> tmp = Plane<double>::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -rad; k <= rad; ++k) {
        const int sx = x + k;
        if (sx >= 0 && sx < w) acc += g[std::size_t(k + rad)] * p(y, sx);
      }
      tmp(y, x) = acc;
    }
  Plane<double> out = Plane<double>::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int k = -rad; k <= rad; ++k) {
        const int sy = y + k;
        if (sy >= 0 && sy < h) acc += g[std::size_t(k + rad)] * tmp(sy, x);
      }
      out(y, x) = acc;
    }
  return out;
}

}  // namespace detail

/// Renders the streak layer for an HxW image. The number of streaks is
/// round(streaks_per_mpx * H*W / 1e6); per streak the draw order is fixed:
/// center x, center y, length, width, angle, intensity. Coverage of a pixel
/// (sampled at its center) is clamp(0.5 + width/2 - distance_to_segment, 0, 1),
/// scaled by the streak's intensity and accumulated additively. All internal
/// arithmetic is double, so the layer is identical regardless of T.
inline Plane<double> render_streaks(int h, int w, const RainParams& p) {
  p.validate();
  check(h > 0 && w > 0, "render_streaks: empty image");
  Plane<double> s = Plane<double>::Zero(h, w);
  const long long count =
      std::llround(p.streaks_per_mpx * (double(h) * double(w)) / 1e6);
  std::mt19937_64 rng(p.seed);
  for (long long i = 0; i < count; ++i) {
    const double cx = uniform<double>(rng, 0.0, double(w));
    const double cy = uniform<double>(rng, 0.0, double(h));
    const double len = uniform<double>(rng, p.len_min, p.len_max);
    const double width = uniform<double>(rng, p.width_min, p.width_max);
    const double angle =
        uniform<double>(rng, -p.angle_range_deg, p.angle_range_deg) * std::numbers::pi / 180.0;
    const double alpha = uniform<double>(rng, p.intensity_min, p.intensity_max);

    // angle 0 points straight down; positive angles tilt clockwise
    const double dx = std::sin(angle), dy = std::cos(angle);
    const double ax = cx - dx * len / 2, ay = cy - dy * len / 2;
    const double bx = cx + dx * len / 2, by = cy + dy * len / 2;
    const double halfw = width / 2;

    const int x0 = std::max(0, int(std::floor(std::min(ax, bx) - halfw - 1)));
    const int x1 = std::min(w - 1, int(std::ceil(std::max(ax, bx) + halfw + 1)));
    const int y0 = std::max(0, int(std::floor(std::min(ay, by) - halfw - 1)));
    const int y1 = std::min(h - 1, int(std::ceil(std::max(ay, by) + halfw + 1)));
    for (int r = y0; r <= y1; ++r)
      for (int c = x0; c <= x1; ++c) {
        const double dist =
            detail::point_segment_dist(c + 0.5, r + 0.5, ax, ay, bx, by);
        const double cov = std::clamp(0.5 + halfw - dist, 0.0, 1.0);
        if (cov > 0) s(r, c) += alpha * cov;
      }
  }
  return detail::gaussian_blur(s, p.blur_sigma);
}

/// rainy = clip(clean + streaks, 0, 1), the same (non-negative) streak layer
/// added to all three channels. Returns the layer alongside the image so
/// additivity before the clip is exactly reconstructable.
template <typename T>
RainResult<T> synthesize(const Rgb<T>& clean, const RainParams& p) {
  check(in_unit_range(clean), "synthesize: clean image values outside [0, 1]");
  const Plane<double> s = render_streaks(clean.height(), clean.width(), p);
  RainResult<T> out;
  out.streaks = s.cast<T>();
  out.rainy = Rgb<T>(clean.height(), clean.width());
  out.rainy.r = (clean.r + out.streaks).max(T(0)).min(T(1));
  out.rainy.g = (clean.g + out.streaks).max(T(0)).min(T(1));
  out.rainy.b = (clean.b + out.streaks).max(T(0)).min(T(1));
  return out;
}

/// Builds a paired dataset under out_root (rainy/ + clean/, matching
/// zero-padded filenames) from the PNGs in clean_dir, cycling through them in
/// sorted order. Pair i uses an independent stream seeded with
/// derive_seed(params.seed, i), so outputs are byte-identical across runs of
/// the same seed and unaffected by n_pairs. n_pairs = 0 yields the empty (but
/// valid) layout. Returns the number of pairs written.
inline int make_dataset(const std::filesystem::path& clean_dir, const RainParams& params,
                        int n_pairs, const std::filesystem::path& out_root) {
  namespace fs = std::filesystem;
  params.validate();
  check(n_pairs >= 0, "make_dataset: negative pair count");
  if (!fs::is_directory(clean_dir))
    throw std::runtime_error("make_dataset: missing clean directory " + clean_dir.string());

  std::vector<fs::path> sources;
  for (const auto& entry : fs::directory_iterator(clean_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      sources.push_back(entry.path());
  std::sort(sources.begin(), sources.end());

  fs::create_directories(out_root / "rainy");
  fs::create_directories(out_root / "clean");
  if (n_pairs == 0) return 0;
  if (sources.empty())
    throw std::runtime_error("make_dataset: no PNG images in " + clean_dir.string());

  for (int i = 0; i < n_pairs; ++i) {
    const Rgb<float> clean = load_image<float>(sources[std::size_t(i) % sources.size()]);
    RainParams p = params;
    p.seed = derive_seed(params.seed, std::uint64_t(i));
    const RainResult<float> res = synthesize(clean, p);
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", i);
    save_image(out_root / "rainy" / name, res.rainy);
    save_image(out_root / "clean" / name, clean);
  }
  return n_pairs;
}

}  // namespace qsam
