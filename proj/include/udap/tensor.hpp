#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "udap/rng.hpp"

namespace udap {

using Eigen::ArrayXf;
using Shape = std::vector<int>;

/// Thrown when an operation produces (or is handed) NaN/Inf values.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorStorage {
  Shape shape;
  ArrayXf values;
  bool requires_grad = false;
  bool graph_path = false;  // set when produced by an op on a grad path
  std::unique_ptr<ArrayXf> grad;
};
}  // namespace detail

/// Dense row-major f32 tensor with an optional gradient slot. Copies share
/// storage (handle semantics); gradients accumulate into the shared slot.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);
  static Tensor from_array(Shape shape, ArrayXf values);
  static Tensor from_values(Shape shape, std::initializer_list<float> values);
  static Tensor randn(Shape shape, SplitMix64& rng, float stddev = 1.0f);
  static Tensor uniform(Shape shape, SplitMix64& rng, float lo, float hi);

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return st_->shape; }
  int64_t size() const { return st_->values.size(); }

  ArrayXf& values() { return st_->values; }
  const ArrayXf& values() const { return st_->values; }
  float scalar_value() const;

  bool requires_grad() const { return st_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  /// True when this tensor participates in gradient flow (leaf or op output).
  bool needs_grad() const { return st_->requires_grad || st_->graph_path; }
  void mark_graph_path() { st_->graph_path = true; }

  bool has_grad() const { return st_->grad != nullptr; }
  const ArrayXf& grad() const;
  /// Accumulates into the grad slot, allocating zeros on first touch.
  void accumulate_grad(const ArrayXf& g) const;
  void clear_grad() const { st_->grad.reset(); }

  /// Detached copy of the values (fresh storage, no grad, no graph).
  Tensor detached_copy() const;

  bool same_storage(const Tensor& other) const { return st_ == other.st_; }

 private:
  std::shared_ptr<detail::TensorStorage> st_;
};

bool same_shape(const Tensor& a, const Tensor& b);
void ensure_finite(const char* where, const ArrayXf& v);

}  // namespace udap
