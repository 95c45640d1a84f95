#include "udap/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "udap/ops.hpp"

namespace udap {

Conv2dLayer::Conv2dLayer(int in_c, int out_c, int k, int stride, int pad,
                         SplitMix64& rng, bool bias, float w_stddev)
    : stride(stride), pad(pad) {
  const float stddev =
      w_stddev > 0.0f
          ? w_stddev
          : std::sqrt(2.0f / (static_cast<float>(in_c) * k * k));
  w = Tensor::randn({out_c, in_c, k, k}, rng, stddev);
  if (bias) b = Tensor::zeros({out_c});
}

Tensor Conv2dLayer::operator()(const Tensor& x) const {
  return conv2d(x, w, b, stride, pad);
}

void Conv2dLayer::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + ".w", w);
  if (b.defined()) out.emplace_back(prefix + ".b", b);
}

AutoEncoder AutoEncoder::make_conv(Shape image_shape, uint64_t seed) {
  if (image_shape.size() != 3) {
    throw std::invalid_argument("autoencoder: image shape must be [C,H,W], got " +
                                shape_str(image_shape));
  }
  const int c = image_shape[0], h = image_shape[1], w = image_shape[2];
  if (h % 4 != 0 || w % 4 != 0 || h < 4 || w < 4) {
    throw std::invalid_argument(
        "autoencoder: spatial dims must be positive multiples of 4, got " +
        shape_str(image_shape));
  }
  SplitMix64 rng(seed);
  AutoEncoder ae;
  ae.mode_ = Mode::Conv;
  ae.image_shape_ = image_shape;
  ae.latent_shape_ = {kLatentChannels, h / 4, w / 4};
  ae.enc1_ = Conv2dLayer(c, kHidden, 3, 2, 1, rng);
  ae.enc2_ = Conv2dLayer(kHidden, kLatentChannels, 3, 2, 1, rng);
  ae.dec1_ = Conv2dLayer(kLatentChannels, kHidden, 3, 1, 1, rng);
  ae.dec2_ = Conv2dLayer(kHidden, c, 3, 1, 1, rng);
  return ae;
}

AutoEncoder AutoEncoder::make_identity(Shape image_shape) {
  if (image_shape.size() != 3) {
    throw std::invalid_argument("autoencoder: image shape must be [C,H,W], got " +
                                shape_str(image_shape));
  }
  AutoEncoder ae;
  ae.mode_ = Mode::Identity;
  ae.image_shape_ = image_shape;
  ae.latent_shape_ = image_shape;
  return ae;
}

void AutoEncoder::check_batch(const char* where, const Tensor& t,
                              const Shape& expect) const {
  if (t.shape().size() != 4 || Shape(t.shape().begin() + 1, t.shape().end()) != expect) {
    throw std::invalid_argument(std::string(where) + ": expected [N," +
                                shape_str(expect).substr(1) + ", got " +
                                shape_str(t.shape()));
  }
}

Tensor AutoEncoder::encode(const Tensor& x) const {
  check_batch("encode", x, image_shape_);
  if (mode_ == Mode::Identity) return x;
  Tensor h = relu(enc1_(x));
  return enc2_(h);
}

Tensor AutoEncoder::decode(const Tensor& z) const {
  check_batch("decode", z, latent_shape_);
  if (mode_ == Mode::Identity) return z;
  Tensor h = relu(dec1_(upsample2x(z)));
  return sigmoid(dec2_(upsample2x(h)));
}

std::vector<Tensor> AutoEncoder::params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

NamedParams AutoEncoder::named_params() {
  NamedParams out;
  if (mode_ == Mode::Identity) return out;
  enc1_.collect("enc1", out);
  enc2_.collect("enc2", out);
  dec1_.collect("dec1", out);
  dec2_.collect("dec2", out);
  return out;
}

Tensor Denoiser::ResBlock::apply(const Tensor& x, const Tensor& emb) const {
  Tensor h = conv_a(x);
  h = time_bias(h, matmul(emb, w_time));
  h = relu(h);
  h = conv_b(h);
  Tensor s = has_skip ? skip(x) : x;
  return relu(add(h, s));
}

void Denoiser::ResBlock::collect(const std::string& prefix, NamedParams& out) {
  conv_a.collect(prefix + ".a", out);
  conv_b.collect(prefix + ".b", out);
  out.emplace_back(prefix + ".t", w_time);
  if (has_skip) skip.collect(prefix + ".s", out);
}

Denoiser Denoiser::make_network(int in_channels, uint64_t seed) {
  if (in_channels < 1) {
    throw std::invalid_argument("denoiser: in_channels must be positive");
  }
  SplitMix64 rng(seed);
  Denoiser d;
  d.mode_ = Mode::Network;
  d.in_channels_ = in_channels;
  d.stem_ = Conv2dLayer(in_channels, 16, 3, 1, 1, rng);

  auto make_block = [&rng](int in_c, int out_c) {
    ResBlock blk;
    blk.conv_a = Conv2dLayer(in_c, out_c, 3, 1, 1, rng);
    blk.conv_b = Conv2dLayer(out_c, out_c, 3, 1, 1, rng);
    blk.w_time = Tensor::randn({kEmbedDim, out_c}, rng,
                               1.0f / std::sqrt(static_cast<float>(kEmbedDim)));
    blk.has_skip = in_c != out_c;
    if (blk.has_skip) {
      blk.skip = Conv2dLayer(in_c, out_c, 1, 1, 0, rng, /*bias=*/false);
    }
    return blk;
  };
  d.b1_ = make_block(16, 16);
  d.b2_ = make_block(16, 32);
  d.b3_ = make_block(32, 16);
  // Small head so the untrained predictor is near-null.
  d.head_ = Conv2dLayer(16, in_channels, 3, 1, 1, rng, /*bias=*/true, 0.01f);
  return d;
}

Denoiser Denoiser::make_null() {
  Denoiser d;
  d.mode_ = Mode::Null;
  return d;
}

Denoiser Denoiser::make_constant(float value) {
  if (!std::isfinite(value)) {
    throw std::invalid_argument("denoiser: constant must be finite");
  }
  Denoiser d;
  d.mode_ = Mode::Constant;
  d.const_value_ = value;
  return d;
}

Tensor Denoiser::operator()(const Tensor& z, const Tensor& t) const {
  // The algebraic stand-ins are shape-agnostic; only the network needs the
  // conv layout.
  if (mode_ == Mode::Null) return Tensor::zeros(z.shape());
  if (mode_ == Mode::Constant) return Tensor::full(z.shape(), const_value_);
  if (z.shape().size() != 4) {
    throw std::invalid_argument("denoiser: latent must be [N,C,H,W], got " +
                                shape_str(z.shape()));
  }
  if (z.shape()[1] != in_channels_) {
    throw std::invalid_argument("denoiser: expected " +
                                std::to_string(in_channels_) +
                                " channels, got " + shape_str(z.shape()));
  }
  if (t.shape() != Shape{z.shape()[0]}) {
    throw std::invalid_argument("denoiser: timestep tensor " +
                                shape_str(t.shape()) +
                                " must be [N] matching the batch");
  }
  Tensor emb = sin_embed(t, kEmbedDim);
  Tensor h = relu(stem_(z));
  h = b1_.apply(h, emb);
  h = b2_.apply(h, emb);
  h = b3_.apply(h, emb);
  return head_(h);
}

Tensor Denoiser::operator()(const Tensor& z, int t_label) const {
  const int batch = z.shape().size() == 4 ? z.shape()[0] : 1;
  Tensor t = Tensor::full({batch}, static_cast<float>(t_label));
  return (*this)(z, t);
}

std::vector<Tensor> Denoiser::params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

NamedParams Denoiser::named_params() {
  NamedParams out;
  if (mode_ != Mode::Network) return out;
  stem_.collect("stem", out);
  b1_.collect("b1", out);
  b2_.collect("b2", out);
  b3_.collect("b3", out);
  head_.collect("head", out);
  return out;
}

}  // namespace udap
