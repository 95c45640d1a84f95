#pragma once

#include <vector>

#include "udap/tensor.hpp"

namespace udap {

/// Adam with bias correction over a fixed parameter list. Moments are kept
/// per parameter in single precision; the bias-correction factors are
/// computed in double before casting. step() consumes and clears the
/// accumulated gradients; a parameter without a gradient is an error (it
/// means backward never reached it).
class Adam {
 public:
  static constexpr float kBeta1 = 0.9f;
  static constexpr float kBeta2 = 0.999f;
  static constexpr float kEps = 1e-8f;

  Adam(std::vector<Tensor> params, float lr);

  void step();
  void zero_grad();

  int64_t steps_taken() const { return t_; }
  float lr() const { return lr_; }
  void set_lr(float lr);

 private:
  std::vector<Tensor> params_;
  std::vector<ArrayXf> m_, v_;
  float lr_;
  int64_t t_ = 0;
};

}  // namespace udap
