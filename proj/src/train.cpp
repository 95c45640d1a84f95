#include "udap/train.hpp"

#include <stdexcept>
#include <string>

#include "udap/graph.hpp"
#include "udap/ops.hpp"
#include "udap/optim.hpp"

namespace udap {

namespace {

// Deterministic 90/10 split; a single-image set doubles as its own holdout.
void split_indices(int n, std::vector<int>& train, std::vector<int>& val) {
  if (n == 1) {
    train = {0};
    val = {0};
    return;
  }
  const int n_val = std::max(1, n / 10);
  for (int i = 0; i < n - n_val; ++i) train.push_back(i);
  for (int i = n - n_val; i < n; ++i) val.push_back(i);
}

void shuffle(std::vector<int>& v, SplitMix64& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    std::swap(v[i], v[static_cast<size_t>(rng.uniform_int(0, i))]);
  }
}

Tensor stack_latents(const std::vector<Tensor>& latents,
                     const std::vector<int>& idx) {
  Shape one = latents.front().shape();  // [1,C,H,W]
  Shape s = one;
  s[0] = static_cast<int>(idx.size());
  Tensor out = Tensor::zeros(s);
  const int64_t stride = shape_numel(one);
  for (size_t i = 0; i < idx.size(); ++i) {
    out.values().segment(static_cast<int64_t>(i) * stride, stride) =
        latents[static_cast<size_t>(idx[i])].values();
  }
  return out;
}

}  // namespace

AutoEncoder train_autoencoder(const ImageSet& data, int epochs, uint64_t seed,
                              const AeTrainOptions& opts, TrainStats* stats) {
  if (data.empty()) {
    throw std::invalid_argument("train_autoencoder: empty dataset");
  }
  if (epochs < 0 || opts.batch_size < 1) {
    throw std::invalid_argument("train_autoencoder: bad epochs/batch_size");
  }
  data.validate();
  AutoEncoder codec = opts.identity
                          ? AutoEncoder::make_identity(data.image_shape())
                          : AutoEncoder::make_conv(data.image_shape(), seed);

  std::vector<int> train_idx, val_idx;
  split_indices(static_cast<int>(data.size()), train_idx, val_idx);

  TrainStats local;
  TrainStats& st = stats ? *stats : local;
  st = TrainStats{};

  if (codec.mode() == AutoEncoder::Mode::Conv && epochs > 0) {
    SplitMix64 rng = SplitMix64::fork(seed, 0xAE);
    std::vector<Tensor> params = codec.params();
    for (auto& p : params) p.set_requires_grad(true);
    Adam opt(params, opts.lr);
    for (int epoch = 0; epoch < epochs; ++epoch) {
      shuffle(train_idx, rng);
      double epoch_loss = 0.0;
      int batches = 0;
      for (size_t at = 0; at < train_idx.size();
           at += static_cast<size_t>(opts.batch_size)) {
        const size_t end =
            std::min(at + static_cast<size_t>(opts.batch_size),
                     train_idx.size());
        std::vector<int> chunk(train_idx.begin() + at, train_idx.begin() + end);
        Tensor xb = stack_images(data, chunk);
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = mse(codec.decode(codec.encode(xb)), xb);
        tape.backward(loss);
        opt.step();
        epoch_loss += loss.scalar_value();
        ++batches;
      }
      st.loss_curve.push_back(static_cast<float>(epoch_loss / batches));
    }
    for (auto& p : params) p.set_requires_grad(false);
    codec.epochs_trained = epochs;
  }

  double holdout = 0.0;
  for (int idx : val_idx) {
    Tensor x = batch_of_one(data.images[static_cast<size_t>(idx)]);
    holdout += mse(codec.decode(codec.encode(x)), x).scalar_value();
  }
  st.holdout_mse = static_cast<float>(holdout / val_idx.size());
  st.final_loss = st.loss_curve.empty() ? st.holdout_mse : st.loss_curve.back();
  return codec;
}

Denoiser train_denoiser(const AutoEncoder& codec, const NoiseSchedule& schedule,
                        const ImageSet& data, int steps, uint64_t seed,
                        const DenoiserTrainOptions& opts, TrainStats* stats) {
  if (data.empty()) {
    throw std::invalid_argument("train_denoiser: empty dataset");
  }
  if (steps < 0 || opts.batch_size < 1) {
    throw std::invalid_argument("train_denoiser: bad steps/batch_size");
  }
  schedule.validate();
  data.validate();
  if (data.image_shape() != codec.image_shape()) {
    throw std::invalid_argument("train_denoiser: dataset images " +
                                shape_str(data.image_shape()) +
                                " do not match the codec's " +
                                shape_str(codec.image_shape()));
  }

  // Latents are fixed during denoiser training; encode once.
  std::vector<Tensor> latents;
  latents.reserve(data.size());
  for (const Tensor& img : data.images) {
    latents.push_back(codec.encode(batch_of_one(img)));
  }

  Denoiser den = Denoiser::make_network(codec.latent_shape()[0], seed);
  std::vector<int> train_idx, val_idx;
  split_indices(static_cast<int>(data.size()), train_idx, val_idx);

  TrainStats local;
  TrainStats& st = stats ? *stats : local;
  st = TrainStats{};

  if (steps > 0) {
    SplitMix64 rng = SplitMix64::fork(seed, 0xDE);
    std::vector<Tensor> params = den.params();
    for (auto& p : params) p.set_requires_grad(true);
    Adam opt(params, opts.lr);

    // Frozen sample for the overfit mode: one latent, one (t, ε) pair.
    const int fixed_pos = rng.uniform_int(1, schedule.total_steps);
    const Tensor fixed_eps = Tensor::randn(latents.front().shape(), rng);

    for (int step = 0; step < steps; ++step) {
      Tensor zb;
      Tensor eps;
      int pos;
      if (opts.overfit_single) {
        zb = latents.front();
        eps = fixed_eps;
        pos = fixed_pos;
      } else {
        std::vector<int> chunk(static_cast<size_t>(opts.batch_size));
        for (int& c : chunk) {
          c = train_idx[static_cast<size_t>(
              rng.uniform_int(0, static_cast<int>(train_idx.size()) - 1))];
        }
        zb = stack_latents(latents, chunk);
        pos = rng.uniform_int(1, schedule.total_steps);
        eps = Tensor::randn(zb.shape(), rng);
      }
      Tensor z_t = perturb_forward(zb, pos - 1, eps, schedule);
      Tape tape;
      Tape::Scope scope(tape);
      Tensor loss = mse(den(z_t, pos), eps);
      tape.backward(loss);
      opt.step();
      st.loss_curve.push_back(loss.scalar_value());
    }
    for (auto& p : params) p.set_requires_grad(false);
    den.steps_trained = steps;
    den.trained_total_steps = schedule.total_steps;
  }

  ImageSet val;
  for (int idx : val_idx) {
    val.add(data.images[static_cast<size_t>(idx)],
            data.labels[static_cast<size_t>(idx)]);
  }
  st.holdout_mse = denoiser_validation_loss(den, codec, schedule, val, seed);
  st.final_loss = st.loss_curve.empty() ? st.holdout_mse : st.loss_curve.back();
  return den;
}

float denoiser_validation_loss(const Denoiser& denoiser,
                               const AutoEncoder& codec,
                               const NoiseSchedule& schedule,
                               const ImageSet& val, uint64_t seed) {
  if (val.empty()) {
    throw std::invalid_argument("denoiser_validation_loss: empty set");
  }
  SplitMix64 rng = SplitMix64::fork(seed, 0x7A1);
  double total = 0.0;
  for (const Tensor& img : val.images) {
    Tensor z = codec.encode(batch_of_one(img));
    const int pos = rng.uniform_int(1, schedule.total_steps);
    Tensor eps = Tensor::randn(z.shape(), rng);
    Tensor z_t = perturb_forward(z, pos - 1, eps, schedule);
    total += mse(denoiser(z_t, pos), eps).scalar_value();
  }
  return static_cast<float>(total / val.size());
}

}  // namespace udap
