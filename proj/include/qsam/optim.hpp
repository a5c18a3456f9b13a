#pragma once

#include "qsam/autodiff.hpp"
#include "qsam/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace qsam {

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cosine decay from lr_start to lr_end over `total` steps; `step` counts
/// from 0 (first update). Steps past the end clamp to lr_end.
inline double cosine_lr(std::int64_t step, std::int64_t total,
                        double lr_start, double lr_end) {
  check(total > 0, "cosine_lr: total steps must be positive");
  check(step >= 0, "cosine_lr: negative step");
  if (step >= total) return lr_end;
  const double t = double(step) / double(total);
  return lr_end +
         (lr_start - lr_end) * 0.5 * (1.0 + std::cos(t * std::numbers::pi));
}

/// Adam with bias correction. Moment buffers are keyed by parameter order,
/// which must stay stable across steps (and across save/load).
template <typename T>
class Adam {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  Adam() = default;
  explicit Adam(const std::vector<Parameter<T>*>& params, double beta1_ = 0.9,
                double beta2_ = 0.999, double eps_ = 1e-8)
      : beta1(beta1_), beta2(beta2_), eps(eps_) {
    for (const Parameter<T>* p : params) {
      m_.push_back(Tensor<T>::zeros_like(p->value));
      v_.push_back(Tensor<T>::zeros_like(p->value));
    }
  }

  std::int64_t step_count() const { return t_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  /// One update from the gradients currently held in the parameters.
  /// Throws NonFiniteGradient before touching any state if a gradient
  /// contains a NaN or infinity.
  void step(const std::vector<Parameter<T>*>& params, double lr) {
    check(params.size() == m_.size(),
          "adam: parameter list does not match optimiser state");
    for (size_t i = 0; i < params.size(); ++i) {
      check(params[i]->grad.numel() == m_[i].numel(),
            "adam: gradient shape changed for " + params[i]->name);
      if (!params[i]->grad.data.isFinite().all())
        throw NonFiniteGradient("non-finite gradient in parameter '" +
                                params[i]->name + "'");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, double(t_));
    const double bc2 = 1.0 - std::pow(beta2, double(t_));
    for (size_t i = 0; i < params.size(); ++i) {
      Parameter<T>& p = *params[i];
      ArrayX<T>& m = m_[i].data;
      ArrayX<T>& v = v_[i].data;
      m = T(beta1) * m + T(1.0 - beta1) * p.grad.data;
      v = T(beta2) * v + T(1.0 - beta2) * p.grad.data.square();
      p.value.data -= T(lr) * (m / T(bc1)) /
                      ((v / T(bc2)).sqrt() + T(eps));
    }
  }

 private:
  std::vector<Tensor<T>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace qsam
