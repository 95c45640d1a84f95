#include "udap/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace udap {

namespace {

void check_lr(float lr) {
  if (!(lr > 0.0f) || !std::isfinite(lr)) {
    throw std::invalid_argument("adam: learning rate must be positive and finite");
  }
}

}  // namespace

Adam::Adam(std::vector<Tensor> params, float lr)
    : params_(std::move(params)), lr_(lr) {
  check_lr(lr);
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    if (!p.defined()) {
      throw std::invalid_argument("adam: undefined parameter");
    }
    m_.push_back(ArrayXf::Zero(p.size()));
    v_.push_back(ArrayXf::Zero(p.size()));
  }
}

void Adam::set_lr(float lr) {
  check_lr(lr);
  lr_ = lr;
}

void Adam::step() {
  ++t_;
  const float bc1 =
      static_cast<float>(1.0 - std::pow(static_cast<double>(kBeta1), t_));
  const float bc2 =
      static_cast<float>(1.0 - std::pow(static_cast<double>(kBeta2), t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) {
      throw std::runtime_error("adam: parameter " + std::to_string(i) +
                               " has no gradient; run backward first");
    }
    const ArrayXf& g = p.grad();
    m_[i] = kBeta1 * m_[i] + (1.0f - kBeta1) * g;
    v_[i] = kBeta2 * v_[i] + (1.0f - kBeta2) * g.square();
    p.values() -= lr_ * (m_[i] / bc1) / ((v_[i] / bc2).sqrt() + kEps);
    ensure_finite("adam", p.values());
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.clear_grad();
}

}  // namespace udap
