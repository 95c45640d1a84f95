#include "udap/tensor.hpp"

#include <sstream>

namespace udap {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void ensure_finite(const char* where, const ArrayXf& v) {
  if (!v.allFinite()) {
    throw NonFiniteError(std::string(where) + ": produced non-finite values");
  }
}

Tensor Tensor::zeros(Shape shape) {
  for (int d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor: non-positive dimension in " +
                                  shape_str(shape));
    }
  }
  Tensor t;
  t.st_ = std::make_shared<detail::TensorStorage>();
  t.st_->shape = std::move(shape);
  t.st_->values = ArrayXf::Zero(shape_numel(t.st_->shape));
  return t;
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t = zeros(std::move(shape));
  t.values().setConstant(value);
  ensure_finite("tensor.full", t.values());
  return t;
}

Tensor Tensor::scalar(float value) { return full({1}, value); }

Tensor Tensor::from_array(Shape shape, ArrayXf values) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                " does not match data length " +
                                std::to_string(values.size()));
  }
  ensure_finite("tensor.from_array", values);
  Tensor t = zeros(std::move(shape));
  t.values() = std::move(values);
  return t;
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<float> values) {
  ArrayXf v(static_cast<int64_t>(values.size()));
  int64_t i = 0;
  for (float x : values) v[i++] = x;
  return from_array(std::move(shape), std::move(v));
}

Tensor Tensor::randn(Shape shape, SplitMix64& rng, float stddev) {
  Tensor t = zeros(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.values()[i] = stddev * rng.normal();
  return t;
}

Tensor Tensor::uniform(Shape shape, SplitMix64& rng, float lo, float hi) {
  Tensor t = zeros(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.values()[i] = rng.uniform(lo, hi);
  return t;
}

float Tensor::scalar_value() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: expected scalar, got shape " +
                                shape_str(shape()));
  }
  return values()[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  st_->requires_grad = on;
  return *this;
}

const ArrayXf& Tensor::grad() const {
  if (!st_->grad) {
    throw std::runtime_error("tensor: gradient requested but none populated");
  }
  return *st_->grad;
}

void Tensor::accumulate_grad(const ArrayXf& g) const {
  if (g.size() != size()) {
    throw std::invalid_argument("tensor: grad length mismatch");
  }
  if (!st_->grad) {
    st_->grad = std::make_unique<ArrayXf>(ArrayXf::Zero(size()));
  }
  *st_->grad += g;
}

Tensor Tensor::detached_copy() const {
  Tensor t = zeros(shape());
  t.values() = values();
  return t;
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

}  // namespace udap
