#pragma once

#include <cstdint>
#include <vector>

#include "udap/imageset.hpp"
#include "udap/nets.hpp"
#include "udap/schedule.hpp"

namespace udap {

struct TrainStats {
  std::vector<float> loss_curve;  // one entry per epoch (AE) or step (denoiser)
  float final_loss = 0.0f;
  float holdout_mse = 0.0f;  // held-out reconstruction / validation MSE
};

struct AeTrainOptions {
  int batch_size = 8;
  float lr = 2e-3f;
  bool identity = false;  // pixel-space ablation: no training happens
};

/// Seed-deterministic reconstruction training with a 10% holdout (at least
/// one image; the training set doubles as holdout when the dataset has a
/// single image). epochs == 0 returns the randomly initialized codec with
/// its holdout MSE still reported.
AutoEncoder train_autoencoder(const ImageSet& data, int epochs, uint64_t seed,
                              const AeTrainOptions& opts = {},
                              TrainStats* stats = nullptr);

struct DenoiserTrainOptions {
  int batch_size = 8;
  float lr = 1e-3f;
  /// Memorize a single (latent, t, ε) triple instead of sampling fresh
  /// draws per step; the overfit sanity mode.
  bool overfit_single = false;
};

/// Standard DDPM objective: sample a schedule position and a Gaussian ε,
/// form z_t = perturb_forward(z0), regress ε_θ(z_t, t) onto ε. One position
/// is drawn per step (shared across the batch). Validation draws are fixed
/// by the seed so trained/untrained losses are comparable.
Denoiser train_denoiser(const AutoEncoder& codec, const NoiseSchedule& schedule,
                        const ImageSet& data, int steps, uint64_t seed,
                        const DenoiserTrainOptions& opts = {},
                        TrainStats* stats = nullptr);

/// Mean noise-prediction MSE over per-image draws fixed by the seed.
float denoiser_validation_loss(const Denoiser& denoiser,
                               const AutoEncoder& codec,
                               const NoiseSchedule& schedule,
                               const ImageSet& val, uint64_t seed);

}  // namespace udap
