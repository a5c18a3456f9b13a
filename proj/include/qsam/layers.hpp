#pragma once

#include "qsam/autodiff.hpp"
#include "qsam/ops.hpp"
#include "qsam/rng.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace qsam {

enum class Algebra { quaternion, real };

inline const char* algebra_name(Algebra a) {
  return a == Algebra::quaternion ? "quaternion" : "real";
}

/// Convolution layer over component-planar feature maps. Channel counts are
/// given in quaternion channels; the tensors flowing through carry 4*in_q
/// and 4*out_q real planes for both algebras, so the two variants are
/// drop-in replacements for each other. The quaternion variant's kernel has
/// four banks (one weight matrix per quaternion component); the real variant
/// has a dense kernel over all real planes and therefore exactly 4x the
/// weights of its quaternion twin.
template <typename T>
struct Conv2d {
  Algebra algebra = Algebra::quaternion;
  int in_q = 0, out_q = 0, k = 3, stride = 1, pad = 1;
  Parameter<T> weight;
  Parameter<T> bias;

  Conv2d() = default;
  Conv2d(const std::string& name, Algebra alg, int in_q_, int out_q_, int k_,
         int stride_, int pad_)
      : algebra(alg), in_q(in_q_), out_q(out_q_), k(k_), stride(stride_),
        pad(pad_) {
    check(in_q > 0 && out_q > 0 && k > 0, "conv layer: bad channel counts");
    const int co_banks = algebra == Algebra::quaternion ? out_q : 4 * out_q;
    weight = Parameter<T>(name + ".W",
                          Tensor<T>::zeros(co_banks, 4 * in_q, k, k));
    bias = Parameter<T>(name + ".b", Tensor<T>::zeros(1, 4 * out_q, 1, 1));
  }

  /// Uniform init over +-sqrt(6 / (fan_in + fan_out)) with fans counted in
  /// real channels, identical for both algebras so the twins start from the
  /// same distribution. The fan_out term keeps output variance from growing
  /// across the many non-residual convolutions in the network (heads,
  /// resampling, bridges); fan-in-only gain compounds to divergence at this
  /// depth. Bias starts at zero.
  void init(std::mt19937_64& rng) {
    const double bound =
        std::sqrt(6.0 / (double(4 * in_q) * k * k + double(4 * out_q) * k * k));
    for (std::int64_t i = 0; i < weight.value.numel(); ++i)
      weight.value.data[i] = uniform<T>(rng, T(-bound), T(bound));
    bias.value.data.setZero();
    weight.zero_grad();
    bias.zero_grad();
  }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    Var<T> w = t.leaf(weight);
    Var<T> b = t.leaf(bias);
    return algebra == Algebra::quaternion ? qconv2d(x, w, b, stride, pad)
                                          : conv2d(x, w, b, stride, pad);
  }

  std::int64_t param_count() const {
    return weight.value.numel() + bias.value.numel();
  }
  std::int64_t weight_count() const { return weight.value.numel(); }

  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

/// Quaternion instance norm parameters: real scale per quaternion channel,
/// quaternion shift per channel.
template <typename T>
struct InstanceNorm {
  int channels = 0;
  T eps = T(1e-5);
  Parameter<T> gamma;
  Parameter<T> beta;

  InstanceNorm() = default;
  InstanceNorm(const std::string& name, int channels_, T eps_)
      : channels(channels_), eps(eps_) {
    gamma = Parameter<T>(name + ".gamma", Tensor<T>::zeros(1, channels, 1, 1));
    beta = Parameter<T>(name + ".beta",
                        Tensor<T>::zeros(1, 4 * channels, 1, 1));
    gamma.value.data.setConstant(T(1));
  }

  void init() {
    gamma.value.data.setConstant(T(1));
    beta.value.data.setZero();
    gamma.zero_grad();
    beta.zero_grad();
  }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    return qinstance_norm(x, t.leaf(gamma), t.leaf(beta), eps);
  }

  std::int64_t param_count() const {
    return gamma.value.numel() + beta.value.numel();
  }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

/// conv -> norm -> LeakyReLU -> conv -> norm with an additive skip.
template <typename T>
struct ResidualBlock {
  Conv2d<T> conv1, conv2;
  InstanceNorm<T> norm1, norm2;
  T leaky = T(0.2);

  ResidualBlock() = default;
  ResidualBlock(const std::string& name, Algebra alg, int channels, int k,
                T leaky_, T eps)
      : conv1(name + ".conv1", alg, channels, channels, k, 1, k / 2),
        conv2(name + ".conv2", alg, channels, channels, k, 1, k / 2),
        norm1(name + ".norm1", channels, eps),
        norm2(name + ".norm2", channels, eps), leaky(leaky_) {}

  void init(std::mt19937_64& rng) {
    conv1.init(rng);
    conv2.init(rng);
    norm1.init();
    norm2.init();
  }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    Var<T> h = conv1.forward(t, x);
    h = norm1.forward(t, h);
    h = leaky_relu_split(h, leaky);
    h = conv2.forward(t, h);
    h = norm2.forward(t, h);
    return add(x, h);
  }

  std::int64_t param_count() const {
    return conv1.param_count() + conv2.param_count() + norm1.param_count() +
           norm2.param_count();
  }
  void collect(std::vector<Parameter<T>*>& out) {
    conv1.collect(out);
    norm1.collect(out);
    conv2.collect(out);
    norm2.collect(out);
  }
  void collect_convs(std::vector<Conv2d<T>*>& out) {
    out.push_back(&conv1);
    out.push_back(&conv2);
  }
};

/// Strided conv halving the spatial extent and doubling the channel count.
/// Odd inputs are rejected so that the matching upsample restores the exact
/// shape.
template <typename T>
struct Downsample {
  Conv2d<T> conv;

  Downsample() = default;
  Downsample(const std::string& name, Algebra alg, int channels, int k)
      : conv(name + ".conv", alg, channels, 2 * channels, k, 2, k / 2) {}

  void init(std::mt19937_64& rng) { conv.init(rng); }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    const Tensor<T>& xv = t.value(x);
    check(xv.h % 2 == 0 && xv.w % 2 == 0,
          "downsample requires even spatial dims, got " + xv.shape_str());
    return conv.forward(t, x);
  }

  std::int64_t param_count() const { return conv.param_count(); }
  void collect(std::vector<Parameter<T>*>& out) { conv.collect(out); }
  void collect_convs(std::vector<Conv2d<T>*>& out) { out.push_back(&conv); }
};

/// Nearest-neighbour 2x upsample followed by a conv halving the channels.
template <typename T>
struct UpsampleLayer {
  Conv2d<T> conv;

  UpsampleLayer() = default;
  UpsampleLayer(const std::string& name, Algebra alg, int channels, int k)
      : conv(name + ".conv", alg, channels, channels / 2, k, 1, k / 2) {
    check(channels % 2 == 0, "upsample requires an even channel count");
  }

  void init(std::mt19937_64& rng) { conv.init(rng); }

  Var<T> forward(Tape<T>& t, Var<T> x) {
    return conv.forward(t, upsample_nearest2x(x));
  }

  std::int64_t param_count() const { return conv.param_count(); }
  void collect(std::vector<Parameter<T>*>& out) { conv.collect(out); }
  void collect_convs(std::vector<Conv2d<T>*>& out) { out.push_back(&conv); }
};

}  // namespace qsam
