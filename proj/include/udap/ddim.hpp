#pragma once

#include <vector>

#include "udap/bundle.hpp"
#include "udap/tensor.hpp"

namespace udap {

enum class TrajectoryDirection { Inversion, Denoise };

/// Latents indexed by chain position 0..t_max; position 0 is the clean-side
/// latent for both directions.
struct Trajectory {
  std::vector<Tensor> latents;
  TrajectoryDirection direction = TrajectoryDirection::Inversion;
  int t_max = 0;
};

/// How the t_hat chain positions map onto schedule positions: Direct uses
/// positions 0..t_hat verbatim; Strided spreads them across the full
/// schedule (requires T divisible by t_hat).
enum class StepMapping { Direct, Strided };

struct DdimOptions {
  StepMapping mapping = StepMapping::Direct;
};

/// One deterministic (η=0) DDIM move between two schedule positions:
/// z' = √(ᾱ_to/ᾱ_from)·z + (√(1−ᾱ_to) − √(ᾱ_to(1−ᾱ_from)/ᾱ_from))·ε_θ(z, from).
/// Coefficients are formed in double and narrowed once. Differentiable in z.
Tensor ddim_step(const Tensor& z, int from_pos, int to_pos,
                 const Denoiser& denoiser, const NoiseSchedule& schedule);

/// z_{t-1} from z_t; t is a schedule position in [1, T].
Tensor ddim_denoise_step(const Tensor& z_t, int t, const Denoiser& denoiser,
                         const NoiseSchedule& schedule);

/// z_{t+1} from z_t under the first-order inversion approximation
/// (ε_θ evaluated at the current latent); t in [0, T).
Tensor ddim_invert_step(const Tensor& z_t, int t, const Denoiser& denoiser,
                        const NoiseSchedule& schedule);

struct Reconstruction {
  Tensor z0_hat;
  Trajectory inversion;
  Trajectory denoise;
};

/// t_hat inversion steps followed by t_hat denoise steps, the denoise side
/// initialized with the inversion's terminal latent (shared handle). Fully
/// differentiable w.r.t. z0. Requires 1 <= t_hat <= schedule.T.
Reconstruction reconstruct(const Tensor& z0, const ModelBundle& bundle,
                           int t_hat, const DdimOptions& opts = {});

/// L_DDIM: mean squared error between decode(reconstruct(z0).z0_hat) and x.
/// Mean reduction keeps thresholds resolution-independent.
Tensor ddim_metric_loss(const Tensor& x, const Tensor& z0,
                        const ModelBundle& bundle, int t_hat,
                        const DdimOptions& opts = {});

}  // namespace udap
