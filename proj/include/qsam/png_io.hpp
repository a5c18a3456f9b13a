#pragma once

#include "qsam/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace qsam {

/// 8-bit interleaved RGB buffer as read from / written to disk.
struct RgbU8 {
  int h = 0, w = 0;
  std::vector<std::uint8_t> pixels;  // h*w*3, row-major RGB
};

RgbU8 load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const RgbU8& img);

/// Loads an 8-bit PNG and maps samples linearly to [0, 1] via v/255.
/// Alpha is ignored; palette and grayscale images are expanded to RGB.
template <typename T>
Rgb<T> load_image(const std::filesystem::path& path) {
  RgbU8 raw = load_png(path);
  Rgb<T> img(raw.h, raw.w);
  const std::uint8_t* p = raw.pixels.data();
  for (int y = 0; y < raw.h; ++y)
    for (int x = 0; x < raw.w; ++x) {
      img.r(y, x) = T(*p++) / T(255);
      img.g(y, x) = T(*p++) / T(255);
      img.b(y, x) = T(*p++) / T(255);
    }
  return img;
}

template <typename T>
void save_image(const std::filesystem::path& path, const Rgb<T>& img) {
  RgbU8 raw;
  raw.h = img.height();
  raw.w = img.width();
  raw.pixels.resize(size_t(raw.h) * raw.w * 3);
  std::uint8_t* p = raw.pixels.data();
  auto to8 = [](T v) {
    T c = std::clamp(v, T(0), T(1));
    return std::uint8_t(std::lround(double(c) * 255.0));
  };
  for (int y = 0; y < raw.h; ++y)
    for (int x = 0; x < raw.w; ++x) {
      *p++ = to8(img.r(y, x));
      *p++ = to8(img.g(y, x));
      *p++ = to8(img.b(y, x));
    }
  save_png(path, raw);
}

}  // namespace qsam
