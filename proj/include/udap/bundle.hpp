#pragma once

#include <cstdint>
#include <string>

#include "udap/nets.hpp"
#include "udap/schedule.hpp"

namespace udap {

struct BundleMeta {
  std::string dataset_id;
  uint64_t train_seed = 0;
  std::string version_tag = "udap-1";
};

/// The frozen machinery purification optimizes against: schedule + codec +
/// noise predictor. validate() enforces cross-component consistency before a
/// bundle is used or persisted.
struct ModelBundle {
  NoiseSchedule schedule;
  AutoEncoder codec;
  Denoiser denoiser;
  BundleMeta meta;

  void validate() const;
};

}  // namespace udap
