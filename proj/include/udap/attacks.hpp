#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "udap/bundle.hpp"
#include "udap/tensor.hpp"

namespace udap {

enum class AttackFamily { Encoder, Denoiser, Hybrid };

const char* family_str(AttackFamily family);
AttackFamily family_from_str(const std::string& s);

struct AttackSpec {
  AttackFamily family = AttackFamily::Encoder;
  float xi = 8.0f / 255.0f;       // L-inf budget in pixel units
  int steps = 40;                 // PGD iterations
  float step_size = 1.0f / 255.0f;
  float hybrid_weight = 0.5f;     // λ: encoder share of the hybrid objective
  uint64_t seed = 0;
  int t_hat = 10;                 // timestep sampling depth for the denoiser objective

  void validate() const;
};

struct AttackReport {
  /// Objective at every evaluated iterate: one entry per PGD step plus a
  /// final evaluation of the last iterate.
  std::vector<float> objective_curve;
  float best_objective = 0.0f;
  float final_delta_linf = 0.0f;
  /// ‖ε_θ(z_t) − ε_θ(z_t_adv)‖₂ at a seeded (t, ε) draw — the achieved
  /// noise-prediction displacement.
  float measured_gap = 0.0f;
  /// Raw (unnormalized) component objectives at the final evaluation; for
  /// pure families only the matching term is populated.
  float encoder_term = 0.0f;
  float denoiser_term = 0.0f;
};

/// Maximize ‖E(x+δ) − E(x)‖² (mean-reduced) by sign-PGD within the ξ-ball
/// intersected with [0,1]. x is a [C,H,W] image.
std::pair<Tensor, AttackReport> attack_encoder(const Tensor& x,
                                               const ModelBundle& bundle,
                                               const AttackSpec& spec);

/// Maximize the denoiser training loss ‖ε_θ(z_t(x+δ), t) − ε‖² over one
/// seeded (t, ε) draw per PGD step, t uniform in [1, t_hat].
std::pair<Tensor, AttackReport> attack_denoiser(const Tensor& x,
                                                const ModelBundle& bundle,
                                                const AttackSpec& spec);

/// PGD on λ·encoder + (1−λ)·denoiser objectives, each normalized by its
/// first-step magnitude; λ ∈ {0,1} degenerates bit-exactly to the pure
/// family with the same seed.
std::pair<Tensor, AttackReport> attack_hybrid(const Tensor& x,
                                              const ModelBundle& bundle,
                                              const AttackSpec& spec);

/// Dispatch on spec.family.
std::pair<Tensor, AttackReport> run_attack(const Tensor& x,
                                           const ModelBundle& bundle,
                                           const AttackSpec& spec);

/// Mean denoiser objective over n seeded (t, ε) draws on one image; the same
/// seed makes values comparable across clean/attacked/purified variants.
float denoiser_objective(const Tensor& x, const ModelBundle& bundle,
                         int n_samples, int t_hat, uint64_t seed);

}  // namespace udap
