#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "udap/bundle.hpp"
#include "udap/imageset.hpp"
#include "udap/tensor.hpp"

namespace udap {

enum class Termination { ThresholdMet, MaxEpochs, AlreadyClean, Aborted };

const char* termination_str(Termination t);
Termination termination_from_str(const std::string& s);

struct PurifyConfig {
  float tau = 4e-3f;     // gate threshold on L_DDIM
  int max_epochs = 100;  // K
  int t_hat = 10;
  float lr = 1e-2f;      // Adam step size on the latent
  uint64_t seed = 0;
  /// Off = fixed-epoch mode: run all K epochs regardless of the loss (the
  /// dynamic-vs-fixed efficiency baseline).
  bool gate_enabled = true;

  void validate(int schedule_total_steps) const;
};

struct PurifyTrace {
  std::vector<float> loss_curve;  // every evaluated L_DDIM, in epoch order
  int epochs_run = 0;             // optimizer steps taken
  Termination termination = Termination::MaxEpochs;
  double wall_time_ms = 0.0;
  float best_loss = 0.0f;
  float change_linf = 0.0f;  // ‖x' − x‖∞, reported, never bounded
  bool failed = false;
  std::string error;
};

/// Mean L_DDIM over each image's own encoded latent — the τ estimate.
float calibrate_tau(const ImageSet& clean, const ModelBundle& bundle,
                    int t_hat);

/// Gradient-descend the initial latent z = E(x) against L_DDIM(x, z) until
/// the τ gate fires or K epochs elapse; x' = clip(D(z), 0, 1). Each epoch
/// evaluates the loss before stepping, so an already-clean input costs one
/// reconstruction and zero steps. On max_epochs exit the best-loss iterate
/// is decoded; a non-finite loss aborts with the last finite latent.
std::pair<Tensor, PurifyTrace> purify(const Tensor& x,
                                      const ModelBundle& bundle,
                                      const PurifyConfig& cfg);

/// Elementwise purify with per-image error isolation; traces come back in
/// input order. workers > 1 fans images out across threads.
std::pair<ImageSet, std::vector<PurifyTrace>> purify_batch(
    const ImageSet& images, const ModelBundle& bundle, const PurifyConfig& cfg,
    int workers = 1);

}  // namespace udap
