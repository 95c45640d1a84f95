#include "udap/bundle.hpp"

#include <stdexcept>
#include <string>

namespace udap {

void ModelBundle::validate() const {
  schedule.validate();
  if (codec.image_shape().empty()) {
    throw std::invalid_argument("bundle: codec not initialized");
  }
  if (denoiser.mode() == Denoiser::Mode::Network &&
      denoiser.in_channels() != codec.latent_shape()[0]) {
    throw std::invalid_argument(
        "bundle: denoiser expects " +
        std::to_string(denoiser.in_channels()) +
        " channels but the codec latent is " +
        shape_str(codec.latent_shape()));
  }
  if (denoiser.trained() &&
      denoiser.trained_total_steps != schedule.total_steps) {
    throw std::invalid_argument(
        "bundle: denoiser trained for T=" +
        std::to_string(denoiser.trained_total_steps) +
        " but the schedule has T=" + std::to_string(schedule.total_steps));
  }
}

}  // namespace udap
