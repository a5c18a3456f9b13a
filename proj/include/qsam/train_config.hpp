#pragma once

#include "qsam/tensor.hpp"

#include <cstdint>

namespace qsam {

/// Training-loop hyperparameters. Architecture hyperparameters (widths,
/// LeakyReLU slope, norm epsilon) live in NetConfig; a checkpoint stores
/// both together.
struct TrainConfig {
  int patch = 256;
  int batch = 2;
  std::int64_t iters = 0;
  double lr_start = 2e-4;
  double lr_end = 1e-7;
  std::uint64_t seed = 0;
  std::int64_t ckpt_interval = 1000;

  void validate() const {
    check(patch > 0 && patch % 16 == 0,
          "train config: patch size must be a positive multiple of 16");
    check(batch >= 1, "train config: batch size must be >= 1");
    check(iters >= 0, "train config: negative iteration count");
    check(lr_end < lr_start, "train config: lr_end must be below lr_start");
    check(ckpt_interval > 0, "train config: checkpoint interval must be > 0");
  }
};

}  // namespace qsam
