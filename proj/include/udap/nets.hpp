#pragma once

#include <string>
#include <utility>
#include <vector>

#include "udap/rng.hpp"
#include "udap/tensor.hpp"

namespace udap {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

/// Conv weights + optional bias with fixed stride/padding. He-initialized
/// unless an explicit stddev is given.
struct Conv2dLayer {
  Tensor w;  // [OC,IC,K,K]
  Tensor b;  // [OC] or undefined
  int stride = 1;
  int pad = 1;

  Conv2dLayer() = default;
  Conv2dLayer(int in_c, int out_c, int k, int stride, int pad,
              SplitMix64& rng, bool bias = true, float w_stddev = -1.0f);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out);
};

/// Two-conv encoder to a 4-channel latent at 1/4 spatial resolution, and the
/// mirrored upsample+conv decoder ending in a sigmoid. Identity mode passes
/// images through untouched for pixel-space ablations.
class AutoEncoder {
 public:
  enum class Mode { Conv, Identity };
  static constexpr int kLatentChannels = 4;
  static constexpr int kHidden = 16;

  AutoEncoder() = default;
  /// image_shape is [C,H,W] with H, W divisible by 4.
  static AutoEncoder make_conv(Shape image_shape, uint64_t seed);
  static AutoEncoder make_identity(Shape image_shape);

  /// [N,C,H,W] -> [N,4,H/4,W/4] (Conv) or the input itself (Identity).
  Tensor encode(const Tensor& x) const;
  /// Inverse spatial mapping; Conv mode output passes through a sigmoid so
  /// decoded pixels land in (0,1).
  Tensor decode(const Tensor& z) const;

  Mode mode() const { return mode_; }
  const Shape& image_shape() const { return image_shape_; }
  const Shape& latent_shape() const { return latent_shape_; }

  int epochs_trained = 0;
  /// A codec an encoder attack can meaningfully target.
  bool attackable() const {
    return mode_ == Mode::Conv && epochs_trained > 0;
  }

  std::vector<Tensor> params();
  NamedParams named_params();

 private:
  Mode mode_ = Mode::Identity;
  Shape image_shape_;
  Shape latent_shape_;
  Conv2dLayer enc1_, enc2_, dec1_, dec2_;

  void check_batch(const char* where, const Tensor& t,
                   const Shape& expect) const;
};

/// Noise predictor: stem conv, three residual blocks at widths 16/32/16 with
/// a per-block projection of the sinusoidal timestep embedding, and a
/// small-initialized head conv back to the latent channel count. Null and
/// Constant modes stand in for ε_θ in algebraic tests.
class Denoiser {
 public:
  enum class Mode { Network, Null, Constant };
  static constexpr int kEmbedDim = 32;

  Denoiser() = default;
  static Denoiser make_network(int in_channels, uint64_t seed);
  static Denoiser make_null();
  static Denoiser make_constant(float value);

  /// z [N,C,H,W], t [N] of schedule-position labels -> predicted noise with
  /// z's shape.
  Tensor operator()(const Tensor& z, const Tensor& t) const;
  /// Same label for the whole batch.
  Tensor operator()(const Tensor& z, int t_label) const;

  Mode mode() const { return mode_; }
  int in_channels() const { return in_channels_; }
  float constant_value() const { return const_value_; }

  int steps_trained = 0;
  /// Schedule length the denoiser was trained against (0 when untrained).
  int trained_total_steps = 0;
  bool trained() const { return mode_ == Mode::Network && steps_trained > 0; }

  std::vector<Tensor> params();
  NamedParams named_params();

 private:
  struct ResBlock {
    Conv2dLayer conv_a, conv_b, skip;
    Tensor w_time;  // [kEmbedDim, out_c]
    bool has_skip = false;
    Tensor apply(const Tensor& x, const Tensor& emb) const;
    void collect(const std::string& prefix, NamedParams& out);
  };

  Mode mode_ = Mode::Null;
  int in_channels_ = 0;
  float const_value_ = 0.0f;
  Conv2dLayer stem_, head_;
  ResBlock b1_, b2_, b3_;
};

}  // namespace udap
