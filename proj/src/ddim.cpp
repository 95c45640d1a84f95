#include "udap/ddim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "udap/ops.hpp"

namespace udap {
namespace {

int mapped(int chain_pos, int t_hat, const NoiseSchedule& schedule,
           const DdimOptions& opts) {
  if (opts.mapping == StepMapping::Direct) return chain_pos;
  return chain_pos * (schedule.total_steps / t_hat);
}

}  // namespace

Tensor ddim_step(const Tensor& z, int from_pos, int to_pos,
                 const Denoiser& denoiser, const NoiseSchedule& schedule) {
  const int total = schedule.total_steps;
  if (from_pos < 0 || from_pos > total || to_pos < 0 || to_pos > total)
    throw std::invalid_argument("ddim_step: positions " +
                                std::to_string(from_pos) + "->" +
                                std::to_string(to_pos) + " outside [0, " +
                                std::to_string(total) + "]");
  if (from_pos == to_pos)
    throw std::invalid_argument("ddim_step: from and to positions are equal");
  // alpha_bar is 1 at position 0 and stays strictly positive, so the ratios
  // below are always defined. Writing the noise coefficient via c_signal
  // makes equal-alpha_bar steps exact identities (c_signal = 1, c_noise = 0).
  const double a_from = static_cast<double>(schedule.alpha_bar_at(from_pos));
  const double a_to = static_cast<double>(schedule.alpha_bar_at(to_pos));
  const double c_signal = std::sqrt(a_to / a_from);
  const double c_noise =
      std::sqrt(1.0 - a_to) - c_signal * std::sqrt(1.0 - a_from);
  // The signal scaling uses one canonical f32 ratio per unordered position
  // pair: multiply by it going noisier, divide by it going cleaner. The two
  // directions are then exact mutual inverses up to a single rounding, so
  // invert/denoise chains cancel drift instead of accumulating it.
  const float ratio = static_cast<float>(
      std::sqrt(std::min(a_from, a_to) / std::max(a_from, a_to)));
  Tensor eps_hat = denoiser(z, from_pos);
  Tensor signal = a_to <= a_from ? scale(z, ratio) : scale_div(z, ratio);
  return add(signal, scale(eps_hat, static_cast<float>(c_noise)));
}

Tensor ddim_denoise_step(const Tensor& z_t, int t, const Denoiser& denoiser,
                         const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.total_steps)
    throw std::invalid_argument("ddim_denoise_step: t = " + std::to_string(t) +
                                " outside [1, " +
                                std::to_string(schedule.total_steps) + "]");
  return ddim_step(z_t, t, t - 1, denoiser, schedule);
}

Tensor ddim_invert_step(const Tensor& z_t, int t, const Denoiser& denoiser,
                        const NoiseSchedule& schedule) {
  if (t < 0 || t >= schedule.total_steps)
    throw std::invalid_argument("ddim_invert_step: t = " + std::to_string(t) +
                                " outside [0, " +
                                std::to_string(schedule.total_steps) + ")");
  return ddim_step(z_t, t, t + 1, denoiser, schedule);
}

Reconstruction reconstruct(const Tensor& z0, const ModelBundle& bundle,
                           int t_hat, const DdimOptions& opts) {
  const NoiseSchedule& schedule = bundle.schedule;
  if (t_hat < 1 || t_hat > schedule.total_steps)
    throw std::invalid_argument(
        "reconstruct: t_hat = " + std::to_string(t_hat) + " outside [1, " +
        std::to_string(schedule.total_steps) + "]");
  if (opts.mapping == StepMapping::Strided && schedule.total_steps % t_hat != 0)
    throw std::invalid_argument(
        "reconstruct: strided mapping needs total_steps divisible by t_hat");

  Reconstruction out;
  out.inversion.direction = TrajectoryDirection::Inversion;
  out.inversion.t_max = t_hat;
  out.inversion.latents.reserve(t_hat + 1);
  out.inversion.latents.push_back(z0);
  for (int p = 0; p < t_hat; ++p) {
    const int from = mapped(p, t_hat, schedule, opts);
    const int to = mapped(p + 1, t_hat, schedule, opts);
    out.inversion.latents.push_back(ddim_step(out.inversion.latents.back(),
                                              from, to, bundle.denoiser,
                                              schedule));
  }

  out.denoise.direction = TrajectoryDirection::Denoise;
  out.denoise.t_max = t_hat;
  out.denoise.latents.assign(t_hat + 1, Tensor());
  out.denoise.latents[t_hat] = out.inversion.latents[t_hat];
  for (int p = t_hat; p > 0; --p) {
    const int from = mapped(p, t_hat, schedule, opts);
    const int to = mapped(p - 1, t_hat, schedule, opts);
    out.denoise.latents[p - 1] =
        ddim_step(out.denoise.latents[p], from, to, bundle.denoiser, schedule);
  }
  out.z0_hat = out.denoise.latents[0];
  return out;
}

Tensor ddim_metric_loss(const Tensor& x, const Tensor& z0,
                        const ModelBundle& bundle, int t_hat,
                        const DdimOptions& opts) {
  Reconstruction recon = reconstruct(z0, bundle, t_hat, opts);
  Tensor x_hat = bundle.codec.decode(recon.z0_hat);
  return mse(x_hat, x);
}

}  // namespace udap
