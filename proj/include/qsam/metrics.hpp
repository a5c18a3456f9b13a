#pragma once

#include "qsam/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace qsam {

/// BT.601 luma of an RGB image in [0, 1], computed in double. Rejects inputs
/// outside [0, 1].
template <typename T>
Plane<double> rgb_to_y(const Rgb<T>& img) {
  if (!in_unit_range(img))
    throw std::invalid_argument("rgb_to_y: values outside [0, 1]");
  return kLumaR * img.r.template cast<double>() +
         kLumaG * img.g.template cast<double>() +
         kLumaB * img.b.template cast<double>();
}

/// PSNR in dB between two equally sized planes, capped at 99 dB (identical
/// images included). All arithmetic in double.
inline double psnr(const Plane<double>& x, const Plane<double>& y, double peak = 1.0) {
  check(x.rows() == y.rows() && x.cols() == y.cols(), "psnr: shape mismatch");
  check(x.size() > 0, "psnr: empty image");
  check(peak > 0, "psnr: peak must be positive");
  const double mse = (x - y).square().sum() / double(x.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / mse));
}

namespace detail {

inline const std::vector<double>& gaussian11() {
  static const std::vector<double> taps = [] {
    const double sigma = 1.5;
    std::vector<double> g(11);
    double s = 0;
    for (int i = 0; i < 11; ++i) {
      const double d = double(i - 5);
      g[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
      s += g[i];
    }
    for (double& v : g) v /= s;
    return g;
  }();
  return taps;
}

/// Separable valid-mode filtering: output is (H-10) x (W-10).
inline Plane<double> filter_valid11(const Plane<double>& p) {
  const auto& g = gaussian11();
  const int h = int(p.rows()), w = int(p.cols());
  Plane<double> tmp = Plane<double>::Zero(h, w - 10);
  for (int k = 0; k < 11; ++k) tmp += g[k] * p.block(0, k, h, w - 10);
  Plane<double> out = Plane<double>::Zero(h - 10, w - 10);
  for (int k = 0; k < 11; ++k) out += g[k] * tmp.block(k, 0, h - 10, w - 10);
  return out;
}

}  // namespace detail

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, K1 = 0.01,
/// K2 = 0.03, dynamic range 1). Requires both dimensions >= 11. Identical
/// inputs score exactly 1: with x == y every numerator/denominator pair below
/// is built from bitwise-identical subexpressions.
inline double ssim(const Plane<double>& x, const Plane<double>& y) {
  check(x.rows() == y.rows() && x.cols() == y.cols(), "ssim: shape mismatch");
  if (x.rows() < 11 || x.cols() < 11)
    throw std::invalid_argument("ssim: image must be at least 11x11");

  const double c1 = (0.01) * (0.01);  // (K1*L)^2 with L = 1
  const double c2 = (0.03) * (0.03);

  const Plane<double> mx = detail::filter_valid11(x);
  const Plane<double> my = detail::filter_valid11(y);
  const Plane<double> mxx = detail::filter_valid11(x * x);
  const Plane<double> myy = detail::filter_valid11(y * y);
  const Plane<double> mxy = detail::filter_valid11(x * y);

  double acc = 0;
  const int h = int(mx.rows()), w = int(mx.cols());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double vx = mxx(r, c) - mx(r, c) * mx(r, c);
      const double vy = myy(r, c) - my(r, c) * my(r, c);
      const double cxy = mxy(r, c) - mx(r, c) * my(r, c);
      const double num = (2.0 * mx(r, c) * my(r, c) + c1) * (2.0 * cxy + c2);
      const double den =
          (mx(r, c) * mx(r, c) + my(r, c) * my(r, c) + c1) * (vx + vy + c2);
      acc += num / den;
    }
  return acc / double(h * w);
}

struct EvalRow {
  std::string name;
  double psnr_db = 0;
  double ssim_val = 0;
  std::string error;  // non-empty if this pair could not be scored
  bool ok() const { return error.empty(); }
};

struct EvalResult {
  std::vector<EvalRow> rows;
  double mean_psnr = 0;
  double mean_ssim = 0;
  int scored = 0;
};

/// Scores every PNG in restored_dir against the same-named file in clean_dir
/// on the luma plane. Per-file problems (missing partner, size mismatch,
/// too-small image) mark that row with an error and are skipped by the means;
/// they never abort the run.
inline EvalResult evaluate_dirs(const std::filesystem::path& restored_dir,
                                const std::filesystem::path& clean_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(restored_dir))
    throw std::runtime_error("evaluate: missing directory " + restored_dir.string());
  if (!fs::is_directory(clean_dir))
    throw std::runtime_error("evaluate: missing directory " + clean_dir.string());

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(restored_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());

  EvalResult res;
  double psnr_acc = 0, ssim_acc = 0;
  for (const std::string& name : names) {
    EvalRow row;
    row.name = name;
    try {
      if (!fs::exists(clean_dir / name))
        throw std::runtime_error("no matching clean image");
      Rgb<double> restored = load_image<double>(restored_dir / name);
      Rgb<double> clean = load_image<double>(clean_dir / name);
      if (!restored.same_shape(clean))
        throw std::runtime_error("restored/clean dimensions differ");
      const Plane<double> yr = rgb_to_y(restored);
      const Plane<double> yc = rgb_to_y(clean);
      row.psnr_db = psnr(yr, yc);
      row.ssim_val = ssim(yr, yc);
      psnr_acc += row.psnr_db;
      ssim_acc += row.ssim_val;
      ++res.scored;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    res.rows.push_back(std::move(row));
  }
  if (res.scored > 0) {
    res.mean_psnr = psnr_acc / res.scored;
    res.mean_ssim = ssim_acc / res.scored;
  }
  return res;
}

/// CSV with columns filename,psnr_db,ssim; one row per scored file and a
/// final MEAN row. Errored rows are omitted here (the caller reports them).
inline void write_eval_csv(const std::filesystem::path& path, const EvalResult& res) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("evaluate: cannot open csv for writing: " + path.string());
  f << "filename,psnr_db,ssim\n" << std::setprecision(10);
  for (const EvalRow& r : res.rows)
    if (r.ok()) f << r.name << ',' << r.psnr_db << ',' << r.ssim_val << '\n';
  f << "MEAN," << res.mean_psnr << ',' << res.mean_ssim << '\n';
  if (!f) throw std::runtime_error("evaluate: failed writing csv: " + path.string());
}

}  // namespace qsam
