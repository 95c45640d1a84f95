#pragma once

#include <vector>

#include "udap/tensor.hpp"

namespace udap {

/// Per-timestep diffusion coefficients shared by training, inversion, and
/// denoising. beta[i] is the step-(i+1) variance; alpha_bar[i] is the
/// cumulative product up to and including that step. Schedule *positions*
/// run 0..T where position 0 is the clean latent (ᾱ = 1 exactly) and
/// position p>0 carries alpha_bar[p-1].
struct NoiseSchedule {
  int total_steps = 0;  // T
  std::vector<float> beta;
  std::vector<float> alpha_bar;

  /// ᾱ at a schedule position in [0, T]; position 0 is exactly 1.
  float alpha_bar_at(int pos) const;

  void validate() const;
};

/// Linear betas inclusive of both endpoints; the cumulative products are
/// formed in double before narrowing. Requires T >= 1 and
/// 0 < beta_start <= beta_end < 1.
NoiseSchedule make_linear_schedule(int T, float beta_start, float beta_end);

/// Builds a schedule from explicit betas in [0, 1]. Degenerate values
/// (0 or 1) are admitted so tests can exercise the identity and pure-noise
/// limits; make_linear_schedule remains the strict production path.
NoiseSchedule make_schedule_from_betas(std::vector<float> beta);

/// √ᾱ_t·z0 + √(1−ᾱ_t)·eps with t in [0, T) indexing into alpha_bar, i.e.
/// the result sits at schedule position t+1. Differentiable in both tensors.
Tensor perturb_forward(const Tensor& z0, int t, const Tensor& eps,
                       const NoiseSchedule& schedule);

}  // namespace udap
