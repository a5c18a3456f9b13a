#pragma once

#include "qsam/png_io.hpp"
#include "qsam/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace qsam {

/// Maps an out-of-range row/column index back into [0, n) by symmetric
/// reflection (edge pixel included): for n = 4 the extension reads
/// ... 1 0 | 0 1 2 3 | 3 2 ...
inline int reflect_index(int i, int n) {
  check(n > 0, "reflect_index: empty axis");
  int m = i % (2 * n);
  if (m < 0) m += 2 * n;
  return m < n ? m : 2 * n - 1 - m;
}

/// Grows an image to at least (minh, minw) by reflecting rows/columns past
/// the bottom/right edges. The original content stays at the top-left, so a
/// later crop back to the original size is exact.
template <typename T>
Rgb<T> reflect_pad(const Rgb<T>& img, int minh, int minw) {
  const int h = img.height(), w = img.width();
  const int oh = std::max(h, minh), ow = std::max(w, minw);
  if (oh == h && ow == w) return img;
  Rgb<T> out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    const int sy = reflect_index(y, h);
    for (int x = 0; x < ow; ++x) {
      const int sx = reflect_index(x, w);
      out.r(y, x) = img.r(sy, sx);
      out.g(y, x) = img.g(sy, sx);
      out.b(y, x) = img.b(sy, sx);
    }
  }
  return out;
}

template <typename T>
Rgb<T> crop(const Rgb<T>& img, int oy, int ox, int h, int w) {
  check(oy >= 0 && ox >= 0 && oy + h <= img.height() && ox + w <= img.width(),
        "crop: window outside image");
  Rgb<T> out(h, w);
  out.r = img.r.block(oy, ox, h, w);
  out.g = img.g.block(oy, ox, h, w);
  out.b = img.b.block(oy, ox, h, w);
  return out;
}

template <typename T>
Rgb<T> hflip(const Rgb<T>& img) {
  Rgb<T> out(img.height(), img.width());
  out.r = img.r.rowwise().reverse();
  out.g = img.g.rowwise().reverse();
  out.b = img.b.rowwise().reverse();
  return out;
}

/// A directory of rainy/clean PNG pairs:
///   root/rainy/NAME.png  +  root/clean/NAME.png
/// Pairs are matched by filename; files in clean/ without a rainy partner are
/// ignored. An empty rainy/ directory is a valid (empty) dataset.
template <typename T>
struct PairedDataset {
  std::filesystem::path root;
  std::vector<std::string> names;  // sorted for a deterministic index order

  static PairedDataset open(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    const fs::path rainy = root / "rainy";
    const fs::path clean = root / "clean";
    if (!fs::is_directory(rainy))
      throw std::runtime_error("dataset: missing directory " + rainy.string());
    if (!fs::is_directory(clean))
      throw std::runtime_error("dataset: missing directory " + clean.string());
    PairedDataset ds;
    ds.root = root;
    for (const auto& entry : fs::directory_iterator(rainy)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
      const std::string name = entry.path().filename().string();
      if (!fs::exists(clean / name))
        throw std::runtime_error("dataset: rainy image '" + name +
                                 "' has no clean partner");
      ds.names.push_back(name);
    }
    std::sort(ds.names.begin(), ds.names.end());
    return ds;
  }

  std::size_t size() const { return names.size(); }

  /// Returns (rainy, clean); both images must have identical dimensions.
  std::pair<Rgb<T>, Rgb<T>> load_pair(std::size_t i) const {
    check(i < names.size(), "dataset: pair index out of range");
    Rgb<T> rainy = load_image<T>(root / "rainy" / names[i]);
    Rgb<T> clean = load_image<T>(root / "clean" / names[i]);
    if (!rainy.same_shape(clean))
      throw std::runtime_error("dataset: pair '" + names[i] +
                               "' has mismatched rainy/clean dimensions");
    return {std::move(rainy), std::move(clean)};
  }
};

/// Draws an aligned patch pair: one shared crop offset and one shared
/// horizontal-flip decision applied to both images. Images smaller than the
/// patch are reflect-padded first. Draw order is fixed (row offset, column
/// offset, flip coin) so a seed fully determines the sample.
template <typename T>
std::pair<Rgb<T>, Rgb<T>> sample_patch(const Rgb<T>& rainy, const Rgb<T>& clean,
                                       int patch, std::mt19937_64& rng) {
  check(patch > 0, "sample_patch: patch size must be positive");
  check(rainy.same_shape(clean), "sample_patch: rainy/clean dimensions differ");
  Rgb<T> rp = reflect_pad(rainy, patch, patch);
  Rgb<T> cp = reflect_pad(clean, patch, patch);
  const int oy = uniform_int(rng, 0, rp.height() - patch);
  const int ox = uniform_int(rng, 0, rp.width() - patch);
  const bool flip = coin_flip(rng);
  Rgb<T> rc = crop(rp, oy, ox, patch, patch);
  Rgb<T> cc = crop(cp, oy, ox, patch, patch);
  if (flip) {
    rc = hflip(rc);
    cc = hflip(cc);
  }
  return {std::move(rc), std::move(cc)};
}

}  // namespace qsam
