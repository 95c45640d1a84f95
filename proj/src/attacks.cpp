#include "udap/attacks.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>

#include "udap/graph.hpp"
#include "udap/imageset.hpp"
#include "udap/ops.hpp"
#include "udap/rng.hpp"

namespace udap {
namespace {

constexpr uint64_t kDeltaStream = 0xA77;
constexpr uint64_t kGapStream = 0x6A9;

void check_image(const Tensor& x) {
  if (!x.defined() || x.shape().size() != 3)
    throw std::invalid_argument("attack: x must be a [C,H,W] image");
  if ((x.values() < 0.0f).any() || (x.values() > 1.0f).any())
    throw std::invalid_argument("attack: x values must lie in [0,1]");
}

void check_t_hat(int t_hat, const NoiseSchedule& schedule) {
  if (t_hat < 1 || t_hat > schedule.total_steps)
    throw std::invalid_argument("attack: t_hat = " + std::to_string(t_hat) +
                                " outside [1, " +
                                std::to_string(schedule.total_steps) + "]");
}

/// Builds the scalar objective for the current iterate; called under an
/// active tape during PGD and without one for the final bookkeeping pass.
using ObjectiveFn = std::function<Tensor(const Tensor& x_adv)>;

std::pair<Tensor, AttackReport> pgd_ascend(const Tensor& x,
                                           const AttackSpec& spec,
                                           const ObjectiveFn& objective) {
  AttackReport report;
  const Tensor xb = batch_of_one(x);

  if (spec.steps == 0 || spec.xi == 0.0f) {
    const float obj = objective(xb).scalar_value();
    report.objective_curve.push_back(obj);
    report.best_objective = obj;
    return {x, report};
  }

  SplitMix64 rng = SplitMix64::fork(spec.seed, kDeltaStream);
  ArrayXf delta =
      Tensor::uniform(xb.shape(), rng, -spec.xi, spec.xi).values();
  delta = (xb.values() + delta).cwiseMax(0.0f).cwiseMin(1.0f) - xb.values();

  float best_obj = -std::numeric_limits<float>::infinity();
  ArrayXf best_delta = delta;
  for (int k = 0; k < spec.steps; ++k) {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor d = Tensor::from_array(xb.shape(), delta).set_requires_grad(true);
    Tensor obj = objective(add(xb, d));
    const float obj_v = obj.scalar_value();
    report.objective_curve.push_back(obj_v);
    if (obj_v > best_obj) {
      best_obj = obj_v;
      best_delta = delta;
    }
    backward(obj);
    delta += spec.step_size * d.grad().sign();
    delta = delta.cwiseMax(-spec.xi).cwiseMin(spec.xi);
    delta = (xb.values() + delta).cwiseMax(0.0f).cwiseMin(1.0f) - xb.values();
  }
  {
    // The last update produced an iterate the loop never scored.
    Tensor d = Tensor::from_array(xb.shape(), delta);
    const float obj_v = objective(add(xb, d)).scalar_value();
    report.objective_curve.push_back(obj_v);
    if (obj_v > best_obj) {
      best_obj = obj_v;
      best_delta = delta;
    }
  }

  report.best_objective = best_obj;
  report.final_delta_linf = best_delta.abs().maxCoeff();
  Tensor x_adv = Tensor::from_array(
      x.shape(),
      (x.values() + best_delta).cwiseMax(0.0f).cwiseMin(1.0f));
  return {x_adv, report};
}

/// ‖ε_θ(z_t) − ε_θ(z_t_adv)‖₂ at one seeded (t, ε) draw — the attack's
/// achieved displacement of the noise prediction.
float noise_prediction_gap(const Tensor& x, const Tensor& x_adv,
                           const ModelBundle& bundle, const AttackSpec& spec) {
  SplitMix64 rng = SplitMix64::fork(spec.seed, kGapStream);
  Tensor z = bundle.codec.encode(batch_of_one(x));
  Tensor z_adv = bundle.codec.encode(batch_of_one(x_adv));
  const int pos = rng.uniform_int(1, spec.t_hat);
  Tensor eps = Tensor::randn(z.shape(), rng);
  Tensor zt = perturb_forward(z, pos - 1, eps, bundle.schedule);
  Tensor zt_adv = perturb_forward(z_adv, pos - 1, eps, bundle.schedule);
  const ArrayXf diff = bundle.denoiser(zt, pos).values() -
                       bundle.denoiser(zt_adv, pos).values();
  return static_cast<float>(
      std::sqrt(static_cast<double>((diff * diff).sum())));
}

ObjectiveFn make_encoder_objective(const ModelBundle& bundle,
                                   const Tensor& x) {
  Tensor target = bundle.codec.encode(batch_of_one(x)).detached_copy();
  return [&bundle, target](const Tensor& x_adv) {
    return mse(bundle.codec.encode(x_adv), target);
  };
}

/// One fresh (t, ε) draw per evaluation, t uniform in [1, t_hat]; the rng
/// reference threads the spec seed through successive PGD steps.
ObjectiveFn make_denoiser_objective(const ModelBundle& bundle,
                                    const AttackSpec& spec, SplitMix64& rng) {
  return [&bundle, &rng, t_hat = spec.t_hat](const Tensor& x_adv) {
    Tensor z = bundle.codec.encode(x_adv);
    const int pos = rng.uniform_int(1, t_hat);
    Tensor eps = Tensor::randn(z.shape(), rng);
    Tensor zt = perturb_forward(z, pos - 1, eps, bundle.schedule);
    return mse(bundle.denoiser(zt, pos), eps);
  };
}

void require_encoder_target(const ModelBundle& bundle) {
  if (!bundle.codec.attackable())
    throw std::invalid_argument(
        "attack: encoder objective needs a trained conv codec (identity or "
        "untrained codecs are degenerate targets)");
}

void require_denoiser_target(const ModelBundle& bundle) {
  if (!bundle.denoiser.trained())
    throw std::invalid_argument(
        "attack: denoiser objective needs a trained denoiser");
}

}  // namespace

const char* family_str(AttackFamily family) {
  switch (family) {
    case AttackFamily::Encoder: return "encoder";
    case AttackFamily::Denoiser: return "denoiser";
    case AttackFamily::Hybrid: return "hybrid";
  }
  throw std::logic_error("family_str: bad family");
}

AttackFamily family_from_str(const std::string& s) {
  if (s == "encoder") return AttackFamily::Encoder;
  if (s == "denoiser") return AttackFamily::Denoiser;
  if (s == "hybrid") return AttackFamily::Hybrid;
  throw std::invalid_argument("unknown attack family '" + s + "'");
}

void AttackSpec::validate() const {
  if (!(xi >= 0.0f) || !std::isfinite(xi))
    throw std::invalid_argument("attack spec: xi must be finite and >= 0");
  if (steps < 0)
    throw std::invalid_argument("attack spec: steps must be >= 0");
  if (steps > 0 && xi > 0.0f &&
      !(step_size > 0.0f && step_size <= xi))
    throw std::invalid_argument(
        "attack spec: need 0 < step_size <= xi when steps > 0 and xi > 0");
  if (!(hybrid_weight >= 0.0f && hybrid_weight <= 1.0f))
    throw std::invalid_argument(
        "attack spec: hybrid_weight must lie in [0,1]");
  if (t_hat < 1)
    throw std::invalid_argument("attack spec: t_hat must be >= 1");
}

std::pair<Tensor, AttackReport> attack_encoder(const Tensor& x,
                                               const ModelBundle& bundle,
                                               const AttackSpec& spec) {
  spec.validate();
  check_image(x);
  require_encoder_target(bundle);
  check_t_hat(spec.t_hat, bundle.schedule);
  auto [x_adv, report] =
      pgd_ascend(x, spec, make_encoder_objective(bundle, x));
  report.encoder_term = report.objective_curve.back();
  report.measured_gap = noise_prediction_gap(x, x_adv, bundle, spec);
  return {x_adv, report};
}

std::pair<Tensor, AttackReport> attack_denoiser(const Tensor& x,
                                                const ModelBundle& bundle,
                                                const AttackSpec& spec) {
  spec.validate();
  check_image(x);
  require_denoiser_target(bundle);
  check_t_hat(spec.t_hat, bundle.schedule);
  SplitMix64 rng = SplitMix64::fork(spec.seed, kDeltaStream + 1);
  auto [x_adv, report] =
      pgd_ascend(x, spec, make_denoiser_objective(bundle, spec, rng));
  report.denoiser_term = report.objective_curve.back();
  report.measured_gap = noise_prediction_gap(x, x_adv, bundle, spec);
  return {x_adv, report};
}

std::pair<Tensor, AttackReport> attack_hybrid(const Tensor& x,
                                              const ModelBundle& bundle,
                                              const AttackSpec& spec) {
  spec.validate();
  check_image(x);
  const float lambda = spec.hybrid_weight;
  if (lambda == 1.0f) return attack_encoder(x, bundle, spec);
  if (lambda == 0.0f) return attack_denoiser(x, bundle, spec);
  require_encoder_target(bundle);
  require_denoiser_target(bundle);
  check_t_hat(spec.t_hat, bundle.schedule);

  SplitMix64 rng = SplitMix64::fork(spec.seed, kDeltaStream + 1);
  ObjectiveFn enc = make_encoder_objective(bundle, x);
  ObjectiveFn den = make_denoiser_objective(bundle, spec, rng);

  // Component magnitudes at the first evaluation rescale both terms to
  // comparable size; the raw values at the latest evaluation are reported.
  auto state = std::make_shared<std::array<float, 4>>();
  (*state)[0] = -1.0f;  // encoder normalizer, unset
  ObjectiveFn mixed = [enc, den, lambda, state](const Tensor& x_adv) {
    Tensor e = enc(x_adv);
    Tensor d = den(x_adv);
    if ((*state)[0] < 0.0f) {
      (*state)[0] = std::max(std::abs(e.scalar_value()), 1e-12f);
      (*state)[1] = std::max(std::abs(d.scalar_value()), 1e-12f);
    }
    (*state)[2] = e.scalar_value();
    (*state)[3] = d.scalar_value();
    return add(scale(e, lambda / (*state)[0]),
               scale(d, (1.0f - lambda) / (*state)[1]));
  };

  auto [x_adv, report] = pgd_ascend(x, spec, mixed);
  report.encoder_term = (*state)[2];
  report.denoiser_term = (*state)[3];
  report.measured_gap = noise_prediction_gap(x, x_adv, bundle, spec);
  return {x_adv, report};
}

std::pair<Tensor, AttackReport> run_attack(const Tensor& x,
                                           const ModelBundle& bundle,
                                           const AttackSpec& spec) {
  switch (spec.family) {
    case AttackFamily::Encoder: return attack_encoder(x, bundle, spec);
    case AttackFamily::Denoiser: return attack_denoiser(x, bundle, spec);
    case AttackFamily::Hybrid: return attack_hybrid(x, bundle, spec);
  }
  throw std::logic_error("run_attack: bad family");
}

float denoiser_objective(const Tensor& x, const ModelBundle& bundle,
                         int n_samples, int t_hat, uint64_t seed) {
  if (n_samples < 1)
    throw std::invalid_argument("denoiser_objective: n_samples must be >= 1");
  check_image(x);
  check_t_hat(t_hat, bundle.schedule);
  SplitMix64 rng = SplitMix64::fork(seed, 0xEB);
  Tensor z = bundle.codec.encode(batch_of_one(x));
  double acc = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const int pos = rng.uniform_int(1, t_hat);
    Tensor eps = Tensor::randn(z.shape(), rng);
    Tensor zt = perturb_forward(z, pos - 1, eps, bundle.schedule);
    acc += static_cast<double>(
        mse(bundle.denoiser(zt, pos), eps).scalar_value());
  }
  return static_cast<float>(acc / n_samples);
}

}  // namespace udap
