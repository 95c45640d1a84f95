#include "udap/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "udap/ops.hpp"

namespace udap {

float NoiseSchedule::alpha_bar_at(int pos) const {
  if (pos < 0 || pos > total_steps) {
    throw std::invalid_argument("schedule: position " + std::to_string(pos) +
                                " outside [0, " + std::to_string(total_steps) +
                                "]");
  }
  return pos == 0 ? 1.0f : alpha_bar[pos - 1];
}

void NoiseSchedule::validate() const {
  if (total_steps < 1 ||
      beta.size() != static_cast<size_t>(total_steps) ||
      alpha_bar.size() != static_cast<size_t>(total_steps)) {
    throw std::invalid_argument("schedule: inconsistent sizes");
  }
  double prod = 1.0;
  for (int i = 0; i < total_steps; ++i) {
    if (!(alpha_bar[i] > 0.0f) || alpha_bar[i] > 1.0f) {
      throw std::invalid_argument("schedule: alpha_bar out of (0,1] at step " +
                                  std::to_string(i));
    }
    if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1])) {
      throw std::invalid_argument(
          "schedule: alpha_bar not strictly decreasing at step " +
          std::to_string(i));
    }
    prod *= 1.0 - static_cast<double>(beta[i]);
    if (std::abs(prod - static_cast<double>(alpha_bar[i])) > 1e-6) {
      throw std::invalid_argument(
          "schedule: alpha_bar disagrees with the beta product at step " +
          std::to_string(i));
    }
  }
}

namespace {

NoiseSchedule finish(std::vector<float> beta) {
  NoiseSchedule s;
  s.total_steps = static_cast<int>(beta.size());
  s.beta = std::move(beta);
  s.alpha_bar.resize(s.beta.size());
  double prod = 1.0;
  for (size_t i = 0; i < s.beta.size(); ++i) {
    prod *= 1.0 - static_cast<double>(s.beta[i]);
    s.alpha_bar[i] = static_cast<float>(prod);
  }
  return s;
}

}  // namespace

NoiseSchedule make_linear_schedule(int T, float beta_start, float beta_end) {
  if (T < 1) {
    throw std::invalid_argument("schedule: T must be >= 1, got " +
                                std::to_string(T));
  }
  if (!(beta_start > 0.0f) || !(beta_start <= beta_end) ||
      !(beta_end < 1.0f)) {
    throw std::invalid_argument(
        "schedule: betas must satisfy 0 < start <= end < 1, got start=" +
        std::to_string(beta_start) + " end=" + std::to_string(beta_end));
  }
  std::vector<float> beta(T);
  for (int i = 0; i < T; ++i) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
    beta[i] = static_cast<float>(beta_start +
                                 frac * (static_cast<double>(beta_end) -
                                         static_cast<double>(beta_start)));
  }
  return finish(std::move(beta));
}

NoiseSchedule make_schedule_from_betas(std::vector<float> beta) {
  if (beta.empty()) {
    throw std::invalid_argument("schedule: empty beta list");
  }
  for (float b : beta) {
    if (!(b >= 0.0f) || b > 1.0f) {
      throw std::invalid_argument("schedule: beta outside [0,1]");
    }
  }
  return finish(std::move(beta));
}

Tensor perturb_forward(const Tensor& z0, int t, const Tensor& eps,
                       const NoiseSchedule& schedule) {
  if (t < 0 || t >= schedule.total_steps) {
    throw std::invalid_argument("perturb_forward: t=" + std::to_string(t) +
                                " outside [0, " +
                                std::to_string(schedule.total_steps) + ")");
  }
  if (!same_shape(z0, eps)) {
    throw std::invalid_argument("perturb_forward: eps shape " +
                                shape_str(eps.shape()) + " does not match z0 " +
                                shape_str(z0.shape()));
  }
  const double abar = schedule.alpha_bar[t];
  const float c_signal = static_cast<float>(std::sqrt(abar));
  const float c_noise = static_cast<float>(std::sqrt(1.0 - abar));
  return add(scale(z0, c_signal), scale(eps, c_noise));
}

}  // namespace udap
