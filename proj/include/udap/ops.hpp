#pragma once

#include <vector>

#include "udap/graph.hpp"
#include "udap/tensor.hpp"

namespace udap {

// Differentiable tensor operations. Each op computes its output eagerly and,
// when a tape is active and any input needs gradients, records a node with
// the matching backward rule. Without an active tape the ops are pure
// functions. All ops reject shape mismatches (naming the offending shapes)
// and abort on non-finite outputs.

enum class OpKind {
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Conv2d,
  Relu,
  Sigmoid,
  SinEmbed,
  Mse,
  Upsample2x,
  Reshape,
  TimeBias,
};

const char* op_name(OpKind kind);

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Scalar-tensor product (the only broadcasting form supported).
Tensor scale(const Tensor& a, float c);

/// Elementwise x / c with a correctly rounded quotient. Not the same as
/// scale(x, 1/c): dividing by the identical constant that an earlier step
/// multiplied by cancels rounding instead of compounding it.
Tensor scale_div(const Tensor& a, float c);

/// [m,k] x [k,n] -> [m,n], row-major.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x [N,IC,H,W], w [OC,IC,KH,KW], optional bias [OC] (pass Tensor{} for
/// none), zero padding. Output [N,OC,OH,OW].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride = 1, int pad = 1);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Sinusoidal embedding of per-sample timesteps t [n] -> [n, dim]
/// (dim even): out[i,2j] = sin(t_i f_j), out[i,2j+1] = cos(t_i f_j),
/// f_j = 10000^(-j/(dim/2)).
Tensor sin_embed(const Tensor& t, int dim);

/// Mean squared error, scalar output. The reduction accumulates in double.
Tensor mse(const Tensor& a, const Tensor& b);

/// Nearest-neighbour 2x upsampling, [N,C,H,W] -> [N,C,2H,2W].
Tensor upsample2x(const Tensor& x);

/// Same number of elements, new shape; gradient is the inverse reshape.
Tensor reshape(const Tensor& x, Shape shape);

/// Adds a per-(sample, channel) bias over the spatial dims:
/// x [N,C,H,W] + tb [N,C]. Carries the timestep embedding into conv blocks.
Tensor time_bias(const Tensor& x, const Tensor& tb);

struct OpAttrs {
  float scale_factor = 1.0f;  // Scale
  int stride = 1;             // Conv2d
  int pad = 1;                // Conv2d
  int embed_dim = 8;          // SinEmbed
  Shape reshape_to;           // Reshape
};

/// Uniform dispatch over the op set; arity checked per kind.
Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs = {});

/// Convenience: backward through the active tape is Tape::backward; this
/// wrapper exists for call sites holding only the loss.
void backward(const Tensor& loss);

}  // namespace udap
