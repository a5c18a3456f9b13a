#pragma once

#include "qsam/layers.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace qsam {

/// Architecture hyperparameters shared by both stages. Widths are quaternion
/// channel counts per scale and must double from one scale to the next so
/// the down/upsampling layers line up.
struct NetConfig {
  std::vector<int> widths{16, 32, 64, 128, 256};
  int blocks_per_scale = 2;
  int kernel = 3;
  double leaky_slope = 0.2;
  double norm_eps = 1e-5;
  Algebra algebra = Algebra::quaternion;

  int scales() const { return int(widths.size()); }
  /// Input H and W must be divisible by this.
  int spatial_divisor() const { return 1 << (scales() - 1); }

  void validate() const {
    check(!widths.empty(), "config: widths must be non-empty");
    for (size_t s = 0; s < widths.size(); ++s) {
      check(widths[s] > 0, "config: widths must be positive");
      if (s + 1 < widths.size())
        check(widths[s + 1] == 2 * widths[s],
              "config: widths must double per scale");
    }
    check(blocks_per_scale >= 1, "config: blocks_per_scale must be >= 1");
    check(kernel >= 1 && kernel % 2 == 1, "config: kernel must be odd");
    check(norm_eps > 0.0, "config: norm_eps must be positive");
    check(leaky_slope >= 0.0 && leaky_slope < 1.0,
          "config: leaky_slope must be in [0, 1)");
  }
};

/// Same architecture with dense real convolutions in place of quaternion
/// ones — the comparison baseline with ~4x the convolution weights.
inline NetConfig twin_config(NetConfig cfg) {
  cfg.algebra = Algebra::real;
  return cfg;
}

/// U-Net encoder half: per scale a stack of residual blocks, then a strided
/// downsample to the next scale. Optionally receives cross-stage features
/// (both pyramids of stage 1) injected through per-scale convolutions before
/// each scale's blocks.
template <typename T>
struct CsffBridge {
  std::vector<Conv2d<T>> conv_enc;  // one per scale
  std::vector<Conv2d<T>> conv_dec;

  CsffBridge() = default;
  CsffBridge(const std::string& name, const NetConfig& cfg) {
    for (int s = 0; s < cfg.scales(); ++s) {
      const std::string base = name + ".scale" + std::to_string(s);
      conv_enc.emplace_back(base + ".enc", cfg.algebra, cfg.widths[s],
                            cfg.widths[s], cfg.kernel, 1, cfg.kernel / 2);
      conv_dec.emplace_back(base + ".dec", cfg.algebra, cfg.widths[s],
                            cfg.widths[s], cfg.kernel, 1, cfg.kernel / 2);
    }
  }

  void init(std::mt19937_64& rng) {
    for (auto& c : conv_enc) c.init(rng);
    for (auto& c : conv_dec) c.init(rng);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    for (size_t s = 0; s < conv_enc.size(); ++s) {
      conv_enc[s].collect(out);
      conv_dec[s].collect(out);
    }
  }
  void collect_convs(std::vector<Conv2d<T>*>& out) {
    for (size_t s = 0; s < conv_enc.size(); ++s) {
      out.push_back(&conv_enc[s]);
      out.push_back(&conv_dec[s]);
    }
  }
};

template <typename T>
struct Encoder {
  std::vector<std::vector<ResidualBlock<T>>> blocks;  // [scale][block]
  std::vector<Downsample<T>> downs;                   // scales-1 of them

  Encoder() = default;
  Encoder(const std::string& name, const NetConfig& cfg) {
    for (int s = 0; s < cfg.scales(); ++s) {
      std::vector<ResidualBlock<T>> stack;
      for (int b = 0; b < cfg.blocks_per_scale; ++b)
        stack.emplace_back(name + ".scale" + std::to_string(s) + ".block" +
                               std::to_string(b),
                           cfg.algebra, cfg.widths[s], cfg.kernel,
                           T(cfg.leaky_slope), T(cfg.norm_eps));
      blocks.push_back(std::move(stack));
      if (s + 1 < cfg.scales())
        downs.emplace_back(name + ".down" + std::to_string(s), cfg.algebra,
                           cfg.widths[s], cfg.kernel);
    }
  }

  /// Returns the per-scale feature pyramid (after each scale's blocks).
  /// When `bridge` is given, stage-1 encoder and decoder pyramids are
  /// injected additively at the matching scale before the blocks.
  std::vector<Var<T>> forward(Tape<T>& t, Var<T> x, CsffBridge<T>* bridge,
                              const std::vector<Var<T>>* enc1,
                              const std::vector<Var<T>>* dec1) {
    const int S = int(blocks.size());
    std::vector<Var<T>> pyramid;
    pyramid.reserve(S);
    for (int s = 0; s < S; ++s) {
      if (bridge) {
        check(enc1 && dec1 && int(enc1->size()) == S &&
                  int(dec1->size()) == S,
              "encoder: cross-stage pyramids missing or wrong depth");
        x = add(x, add(bridge->conv_enc[s].forward(t, (*enc1)[s]),
                       bridge->conv_dec[s].forward(t, (*dec1)[s])));
      }
      for (auto& blk : blocks[s]) x = blk.forward(t, x);
      pyramid.push_back(x);
      if (s + 1 < S) x = downs[s].forward(t, x);
    }
    return pyramid;
  }

  void init(std::mt19937_64& rng) {
    for (size_t s = 0; s < blocks.size(); ++s) {
      for (auto& blk : blocks[s]) blk.init(rng);
      if (s < downs.size()) downs[s].init(rng);
    }
  }
  void collect(std::vector<Parameter<T>*>& out) {
    for (size_t s = 0; s < blocks.size(); ++s) {
      for (auto& blk : blocks[s]) blk.collect(out);
      if (s < downs.size()) downs[s].collect(out);
    }
  }
  void collect_convs(std::vector<Conv2d<T>*>& out) {
    for (size_t s = 0; s < blocks.size(); ++s) {
      for (auto& blk : blocks[s]) blk.collect_convs(out);
      if (s < downs.size()) downs[s].collect_convs(out);
    }
  }
};

template <typename T>
struct Decoder {
  std::vector<std::vector<ResidualBlock<T>>> blocks;  // [scale][block]
  std::vector<UpsampleLayer<T>> ups;                  // ups[s]: s+1 -> s

  Decoder() = default;
  Decoder(const std::string& name, const NetConfig& cfg) {
    for (int s = 0; s < cfg.scales(); ++s) {
      std::vector<ResidualBlock<T>> stack;
      for (int b = 0; b < cfg.blocks_per_scale; ++b)
        stack.emplace_back(name + ".scale" + std::to_string(s) + ".block" +
                               std::to_string(b),
                           cfg.algebra, cfg.widths[s], cfg.kernel,
                           T(cfg.leaky_slope), T(cfg.norm_eps));
      blocks.push_back(std::move(stack));
      if (s + 1 < cfg.scales())
        ups.emplace_back(name + ".up" + std::to_string(s), cfg.algebra,
                         2 * cfg.widths[s], cfg.kernel);
    }
  }

  struct Result {
    Var<T> top;                // full-resolution decoded features
    std::vector<Var<T>> pyramid;  // per-scale decoded features
  };

  /// Consumes the encoder pyramid: the deepest scale is refined directly,
  /// then each shallower scale fuses the upsampled decode with the encoder
  /// skip before its blocks.
  Result forward(Tape<T>& t, const std::vector<Var<T>>& enc) {
    const int S = int(blocks.size());
    check(int(enc.size()) == S, "decoder: pyramid depth mismatch");
    std::vector<Var<T>> pyramid;
    pyramid.resize(size_t(S));
    Var<T> d = enc[size_t(S) - 1];
    for (auto& blk : blocks[size_t(S) - 1]) d = blk.forward(t, d);
    pyramid[size_t(S) - 1] = d;
    for (int s = S - 2; s >= 0; --s) {
      Var<T> u = ups[size_t(s)].forward(t, d);
      d = add(u, enc[size_t(s)]);
      for (auto& blk : blocks[size_t(s)]) d = blk.forward(t, d);
      pyramid[size_t(s)] = d;
    }
    return {d, std::move(pyramid)};
  }

  void init(std::mt19937_64& rng) {
    for (size_t s = 0; s < blocks.size(); ++s) {
      for (auto& blk : blocks[s]) blk.init(rng);
      if (s < ups.size()) ups[s].init(rng);
    }
  }
  void collect(std::vector<Parameter<T>*>& out) {
    for (size_t s = 0; s < blocks.size(); ++s) {
      for (auto& blk : blocks[s]) blk.collect(out);
      if (s < ups.size()) ups[s].collect(out);
    }
  }
  void collect_convs(std::vector<Conv2d<T>*>& out) {
    for (size_t s = 0; s < blocks.size(); ++s) {
      for (auto& blk : blocks[s]) blk.collect_convs(out);
      if (s < ups.size()) ups[s].collect_convs(out);
    }
  }
};

/// Supervised attention between the stages. From stage-1 features F and the
/// network input I it produces the stage-1 restored image X1 = I + conv2(F)
/// and re-weights the features with an attention mask derived from X1:
/// A = conv1(F) * sigmoid(conv3(X1)) + F.
template <typename T>
struct QsamModule {
  Conv2d<T> conv1;  // C -> C feature transform
  Conv2d<T> conv2;  // C -> 1 residual image head
  Conv2d<T> conv3;  // 1 -> C mask from the restored image

  QsamModule() = default;
  QsamModule(const std::string& name, const NetConfig& cfg)
      : conv1(name + ".conv1", cfg.algebra, cfg.widths[0], cfg.widths[0],
              cfg.kernel, 1, cfg.kernel / 2),
        conv2(name + ".conv2", cfg.algebra, cfg.widths[0], 1, cfg.kernel, 1,
              cfg.kernel / 2),
        conv3(name + ".conv3", cfg.algebra, 1, cfg.widths[0], cfg.kernel, 1,
              cfg.kernel / 2) {}

  struct Result {
    Var<T> attended;  // feature input to stage 2
    Var<T> x1;        // stage-1 restored image
  };

  Result forward(Tape<T>& t, Var<T> features, Var<T> image) {
    const Tensor<T>& fv = t.value(features);
    const Tensor<T>& iv = t.value(image);
    check(fv.n == iv.n && fv.h == iv.h && fv.w == iv.w,
          "attention: feature/image spatial mismatch " + fv.shape_str() +
              " vs " + iv.shape_str());
    Var<T> e = conv1.forward(t, features);
    Var<T> r1 = conv2.forward(t, features);
    Var<T> x1 = add(image, r1);
    Var<T> mask = sigmoid_split(conv3.forward(t, x1));
    Var<T> attended = add(mul(e, mask), features);
    return {attended, x1};
  }

  void init(std::mt19937_64& rng) {
    conv1.init(rng);
    conv2.init(rng);
    conv3.init(rng);
  }
  void collect(std::vector<Parameter<T>*>& out) {
    conv1.collect(out);
    conv2.collect(out);
    conv3.collect(out);
  }
  void collect_convs(std::vector<Conv2d<T>*>& out) {
    out.push_back(&conv1);
    out.push_back(&conv2);
    out.push_back(&conv3);
  }
};

/// Two-stage rain removal network. Each stage is an encoder-decoder over
/// `cfg.widths`; the supervised attention module links them and the
/// cross-stage bridge feeds stage-1 pyramids into the stage-2 encoder.
/// Input and outputs are (N, 4, H, W) encoded images.
template <typename T>
struct QSAMNet {
  NetConfig cfg;
  Conv2d<T> head1, head2, tail2;
  Encoder<T> enc1, enc2;
  Decoder<T> dec1, dec2;
  QsamModule<T> qsam;
  CsffBridge<T> csff;

  explicit QSAMNet(const NetConfig& cfg_) : cfg(cfg_) {
    cfg.validate();
    const int C0 = cfg.widths[0];
    head1 = Conv2d<T>("stage1.head", cfg.algebra, 1, C0, cfg.kernel, 1,
                      cfg.kernel / 2);
    head2 = Conv2d<T>("stage2.head", cfg.algebra, 1, C0, cfg.kernel, 1,
                      cfg.kernel / 2);
    tail2 = Conv2d<T>("stage2.tail", cfg.algebra, C0, 1, cfg.kernel, 1,
                      cfg.kernel / 2);
    enc1 = Encoder<T>("stage1.enc", cfg);
    enc2 = Encoder<T>("stage2.enc", cfg);
    dec1 = Decoder<T>("stage1.dec", cfg);
    dec2 = Decoder<T>("stage2.dec", cfg);
    qsam = QsamModule<T>("attention", cfg);
    csff = CsffBridge<T>("bridge", cfg);
  }

  struct Outputs {
    Var<T> x1;  // stage-1 restored image
    Var<T> x2;  // stage-2 (final) restored image
  };

  Outputs forward(Tape<T>& t, Var<T> image) {
    const Tensor<T>& iv = t.value(image);
    check(iv.c == 4, "network input must have one quaternion channel, got " +
                         iv.shape_str());
    const int div = cfg.spatial_divisor();
    check(iv.h % div == 0 && iv.w % div == 0,
          "network input spatial dims must be divisible by " +
              std::to_string(div) + ", got " + iv.shape_str());

    Var<T> f1 = head1.forward(t, image);
    std::vector<Var<T>> p1 =
        enc1.forward(t, f1, nullptr, nullptr, nullptr);
    typename Decoder<T>::Result d1 = dec1.forward(t, p1);
    typename QsamModule<T>::Result att = qsam.forward(t, d1.top, image);

    Var<T> f2 = add(head2.forward(t, image), att.attended);
    std::vector<Var<T>> p2 = enc2.forward(t, f2, &csff, &p1, &d1.pyramid);
    typename Decoder<T>::Result d2 = dec2.forward(t, p2);
    Var<T> x2 = add(image, tail2.forward(t, d2.top));
    return {att.x1, x2};
  }

  /// Seeds every trainable tensor; identical seeds give identical networks.
  /// The two image-space heads (the attention module's residual projection
  /// and the stage-two tail) start at zero, so a freshly initialised network
  /// is the exact identity map: x1 == x2 == input. Training then learns the
  /// rain residual from a stable starting point instead of an amplified
  /// random field.
  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    head1.init(rng);
    enc1.init(rng);
    dec1.init(rng);
    qsam.init(rng);
    head2.init(rng);
    csff.init(rng);
    enc2.init(rng);
    dec2.init(rng);
    tail2.init(rng);
    qsam.conv2.weight.value.data.setZero();
    qsam.conv2.bias.value.data.setZero();
    tail2.weight.value.data.setZero();
    tail2.bias.value.data.setZero();
  }

  /// All parameters in a fixed, name-stable order.
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    head1.collect(out);
    enc1.collect(out);
    dec1.collect(out);
    qsam.collect(out);
    head2.collect(out);
    csff.collect(out);
    enc2.collect(out);
    dec2.collect(out);
    tail2.collect(out);
    return out;
  }

  /// All convolution layers, structurally ordered; quaternion and real twins
  /// of the same config pair up index by index.
  std::vector<Conv2d<T>*> conv_layers() {
    std::vector<Conv2d<T>*> out;
    out.push_back(&head1);
    enc1.collect_convs(out);
    dec1.collect_convs(out);
    qsam.collect_convs(out);
    out.push_back(&head2);
    csff.collect_convs(out);
    enc2.collect_convs(out);
    dec2.collect_convs(out);
    out.push_back(&tail2);
    return out;
  }

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (Parameter<T>* p : parameters()) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (Parameter<T>* p : parameters()) p->zero_grad();
  }
};

}  // namespace qsam
