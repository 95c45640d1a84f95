#include "udap/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace udap {

namespace {

using MatRM =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->needs_grad()) return true;
  }
  return false;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, size_t rank) {
  if (t.shape().size() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + " tensor, got " +
                                shape_str(t.shape()));
  }
}

struct ConvDims {
  int n, ic, h, w;       // input
  int oc, kh, kw;        // kernel
  int oh, ow;            // output
  int stride, pad;
  int k() const { return ic * kh * kw; }
  int p() const { return oh * ow; }
};

// Gathers one sample's receptive fields into cols [IC*KH*KW, OH*OW].
void im2col(const float* x, const ConvDims& d, MatRM& cols, int col_off) {
  for (int ic = 0; ic < d.ic; ++ic) {
    const float* plane = x + static_cast<int64_t>(ic) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const int row = (ic * d.kh + ky) * d.kw + kx;
        float* dst = cols.row(row).data() + col_off;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            const bool in = iy >= 0 && iy < d.h && ix >= 0 && ix < d.w;
            dst[oy * d.ow + ox] = in ? plane[iy * d.w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-adds cols-shaped gradients back onto one sample's input plane.
void col2im(const MatRM& dcols, const ConvDims& d, float* gx) {
  for (int ic = 0; ic < d.ic; ++ic) {
    float* plane = gx + static_cast<int64_t>(ic) * d.h * d.w;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const int row = (ic * d.kh + ky) * d.kw + kx;
        const float* src = dcols.row(row).data();
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.w) continue;
            plane[iy * d.w + ix] += src[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::MatMul: return "matmul";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::SinEmbed: return "sin_embed";
    case OpKind::Mse: return "mse";
    case OpKind::Upsample2x: return "upsample2x";
    case OpKind::Reshape: return "reshape";
    case OpKind::TimeBias: return "time_bias";
  }
  throw std::invalid_argument("op_name: unknown op kind");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  out.values() = a.values() + b.values();
  ensure_finite("add", out.values());
  if (recording({&a, &b})) {
    Tape::active()->record("add", {a, b}, out, [a, b, out] {
      const ArrayXf& g = out.grad();
      if (a.needs_grad()) a.accumulate_grad(g);
      if (b.needs_grad()) b.accumulate_grad(g);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  out.values() = a.values() - b.values();
  ensure_finite("sub", out.values());
  if (recording({&a, &b})) {
    Tape::active()->record("sub", {a, b}, out, [a, b, out] {
      const ArrayXf& g = out.grad();
      if (a.needs_grad()) a.accumulate_grad(g);
      if (b.needs_grad()) b.accumulate_grad(-g);
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  out.values() = a.values() * b.values();
  ensure_finite("mul", out.values());
  if (recording({&a, &b})) {
    Tape::active()->record("mul", {a, b}, out, [a, b, out] {
      const ArrayXf& g = out.grad();
      if (a.needs_grad()) a.accumulate_grad(g * b.values());
      if (b.needs_grad()) b.accumulate_grad(g * a.values());
    });
  }
  return out;
}

Tensor scale(const Tensor& a, float c) {
  if (!std::isfinite(c)) {
    throw std::invalid_argument("scale: factor must be finite");
  }
  Tensor out = Tensor::zeros(a.shape());
  out.values() = a.values() * c;
  ensure_finite("scale", out.values());
  if (recording({&a})) {
    Tape::active()->record("scale", {a}, out, [a, out, c] {
      if (a.needs_grad()) a.accumulate_grad(out.grad() * c);
    });
  }
  return out;
}

Tensor scale_div(const Tensor& a, float c) {
  if (!std::isfinite(c) || c == 0.0f) {
    throw std::invalid_argument("scale_div: divisor must be finite and nonzero");
  }
  Tensor out = Tensor::zeros(a.shape());
  out.values() = a.values() / c;
  ensure_finite("scale_div", out.values());
  if (recording({&a})) {
    Tape::active()->record("scale_div", {a}, out, [a, out, c] {
      if (a.needs_grad()) a.accumulate_grad(out.grad() / c);
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  CMapRM A(a.values().data(), m, k);
  CMapRM B(b.values().data(), k, n);
  MapRM O(out.values().data(), m, n);
  O.noalias() = A * B;
  ensure_finite("matmul", out.values());
  if (recording({&a, &b})) {
    Tape::active()->record("matmul", {a, b}, out, [a, b, out, m, k, n] {
      CMapRM G(out.grad().data(), m, n);
      CMapRM A(a.values().data(), m, k);
      CMapRM B(b.values().data(), k, n);
      if (a.needs_grad()) {
        ArrayXf ga(static_cast<int64_t>(m) * k);
        MapRM(ga.data(), m, k).noalias() = G * B.transpose();
        a.accumulate_grad(ga);
      }
      if (b.needs_grad()) {
        ArrayXf gb(static_cast<int64_t>(k) * n);
        MapRM(gb.data(), k, n).noalias() = A.transpose() * G;
        b.accumulate_grad(gb);
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
              int pad) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", w, 4);
  if (stride < 1 || pad < 0) {
    throw std::invalid_argument("conv2d: stride must be >=1 and pad >=0");
  }
  ConvDims d;
  d.n = x.shape()[0];
  d.ic = x.shape()[1];
  d.h = x.shape()[2];
  d.w = x.shape()[3];
  d.oc = w.shape()[0];
  d.kh = w.shape()[2];
  d.kw = w.shape()[3];
  d.stride = stride;
  d.pad = pad;
  if (w.shape()[1] != d.ic) {
    throw std::invalid_argument("conv2d: kernel channels " +
                                shape_str(w.shape()) + " do not match input " +
                                shape_str(x.shape()));
  }
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) +
                                " larger than padded input " +
                                shape_str(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{d.oc}) {
    throw std::invalid_argument("conv2d: bias shape " +
                                shape_str(bias.shape()) + " must be [" +
                                std::to_string(d.oc) + "]");
  }

  // im2col per sample, then one GEMM per sample against the flattened kernel.
  auto cols = std::make_shared<MatRM>(d.k(), static_cast<int64_t>(d.n) * d.p());
  for (int n = 0; n < d.n; ++n) {
    im2col(x.values().data() + static_cast<int64_t>(n) * d.ic * d.h * d.w, d,
           *cols, n * d.p());
  }
  Tensor out = Tensor::zeros({d.n, d.oc, d.oh, d.ow});
  CMapRM W(w.values().data(), d.oc, d.k());
  for (int n = 0; n < d.n; ++n) {
    MapRM O(out.values().data() + static_cast<int64_t>(n) * d.oc * d.p(), d.oc,
            d.p());
    O.noalias() = W * cols->middleCols(static_cast<int64_t>(n) * d.p(), d.p());
    if (bias.defined()) {
      O.colwise() += Eigen::Map<const Eigen::VectorXf>(bias.values().data(),
                                                       d.oc);
    }
  }
  ensure_finite("conv2d", out.values());

  if (recording({&x, &w, &bias})) {
    std::vector<Tensor> inputs = {x, w};
    if (bias.defined()) inputs.push_back(bias);
    Tape::active()->record("conv2d", inputs, out, [x, w, bias, out, cols, d] {
      CMapRM W(w.values().data(), d.oc, d.k());
      ArrayXf gw;
      if (w.needs_grad()) gw = ArrayXf::Zero(w.size());
      ArrayXf gb;
      if (bias.defined() && bias.needs_grad()) gb = ArrayXf::Zero(d.oc);
      ArrayXf gx;
      if (x.needs_grad()) gx = ArrayXf::Zero(x.size());
      MatRM dcols;
      if (x.needs_grad()) dcols.resize(d.k(), d.p());
      for (int n = 0; n < d.n; ++n) {
        CMapRM G(out.grad().data() + static_cast<int64_t>(n) * d.oc * d.p(),
                 d.oc, d.p());
        auto cols_n = cols->middleCols(static_cast<int64_t>(n) * d.p(), d.p());
        if (w.needs_grad()) {
          MapRM(gw.data(), d.oc, d.k()).noalias() += G * cols_n.transpose();
        }
        if (bias.defined() && bias.needs_grad()) {
          Eigen::Map<Eigen::VectorXf>(gb.data(), d.oc) += G.rowwise().sum();
        }
        if (x.needs_grad()) {
          dcols.noalias() = W.transpose() * G;
          col2im(dcols, d,
                 gx.data() + static_cast<int64_t>(n) * d.ic * d.h * d.w);
        }
      }
      if (w.needs_grad()) w.accumulate_grad(gw);
      if (bias.defined() && bias.needs_grad()) bias.accumulate_grad(gb);
      if (x.needs_grad()) x.accumulate_grad(gx);
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  out.values() = x.values().max(0.0f);
  ensure_finite("relu", out.values());
  if (recording({&x})) {
    Tape::active()->record("relu", {x}, out, [x, out] {
      if (x.needs_grad()) {
        x.accumulate_grad(out.grad() *
                          (x.values() > 0.0f).cast<float>());
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  // Branch on sign so the exp never overflows.
  out.values() = (x.values() >= 0.0f)
                     .select(1.0f / (1.0f + (-x.values()).exp()),
                             x.values().exp() / (1.0f + x.values().exp()));
  ensure_finite("sigmoid", out.values());
  if (recording({&x})) {
    Tape::active()->record("sigmoid", {x}, out, [x, out] {
      if (x.needs_grad()) {
        x.accumulate_grad(out.grad() * out.values() *
                          (1.0f - out.values()));
      }
    });
  }
  return out;
}

Tensor sin_embed(const Tensor& t, int dim) {
  require_rank("sin_embed", t, 1);
  if (dim <= 0 || dim % 2 != 0) {
    throw std::invalid_argument("sin_embed: dim must be positive and even, got " +
                                std::to_string(dim));
  }
  const int n = t.shape()[0];
  const int half = dim / 2;
  ArrayXf freq(half);
  for (int j = 0; j < half; ++j) {
    freq[j] = static_cast<float>(
        std::pow(10000.0, -static_cast<double>(j) / half));
  }
  Tensor out = Tensor::zeros({n, dim});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < half; ++j) {
      const float phase = t.values()[i] * freq[j];
      out.values()[static_cast<int64_t>(i) * dim + 2 * j] = std::sin(phase);
      out.values()[static_cast<int64_t>(i) * dim + 2 * j + 1] = std::cos(phase);
    }
  }
  ensure_finite("sin_embed", out.values());
  if (recording({&t})) {
    Tape::active()->record("sin_embed", {t}, out, [t, out, freq, n, dim, half] {
      if (!t.needs_grad()) return;
      const ArrayXf& g = out.grad();
      ArrayXf gt = ArrayXf::Zero(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < half; ++j) {
          const int64_t base = static_cast<int64_t>(i) * dim + 2 * j;
          // d sin = cos (stored at 2j+1), d cos = -sin (stored at 2j).
          gt[i] += freq[j] * (out.values()[base + 1] * g[base] -
                              out.values()[base] * g[base + 1]);
        }
      }
      t.accumulate_grad(gt);
    });
  }
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape("mse", a, b);
  if (a.size() == 0) {
    throw std::invalid_argument("mse: empty tensors");
  }
  double acc = 0.0;
  const float* pa = a.values().data();
  const float* pb = b.values().data();
  for (int64_t i = 0; i < a.size(); ++i) {
    const double diff = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += diff * diff;
  }
  acc /= static_cast<double>(a.size());
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  ensure_finite("mse", out.values());
  if (recording({&a, &b})) {
    Tape::active()->record("mse", {a, b}, out, [a, b, out] {
      const float coeff =
          out.grad()[0] * 2.0f / static_cast<float>(a.size());
      if (a.needs_grad()) a.accumulate_grad(coeff * (a.values() - b.values()));
      if (b.needs_grad()) b.accumulate_grad(coeff * (b.values() - a.values()));
    });
  }
  return out;
}

Tensor upsample2x(const Tensor& x) {
  require_rank("upsample2x", x, 4);
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2],
            w = x.shape()[3];
  Tensor out = Tensor::zeros({n, c, 2 * h, 2 * w});
  const float* src = x.values().data();
  float* dst = out.values().data();
  for (int64_t plane = 0; plane < static_cast<int64_t>(n) * c; ++plane) {
    const float* sp = src + plane * h * w;
    float* dp = dst + plane * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const float v = sp[y * w + xx];
        float* cell = dp + (2 * y) * (2 * w) + 2 * xx;
        cell[0] = v;
        cell[1] = v;
        cell[2 * w] = v;
        cell[2 * w + 1] = v;
      }
    }
  }
  ensure_finite("upsample2x", out.values());
  if (recording({&x})) {
    Tape::active()->record("upsample2x", {x}, out, [x, out, n, c, h, w] {
      if (!x.needs_grad()) return;
      const float* g = out.grad().data();
      ArrayXf gx = ArrayXf::Zero(x.size());
      for (int64_t plane = 0; plane < static_cast<int64_t>(n) * c; ++plane) {
        const float* gp = g + plane * 4 * h * w;
        float* xp = gx.data() + plane * h * w;
        for (int y = 0; y < h; ++y) {
          for (int xx = 0; xx < w; ++xx) {
            const float* cell = gp + (2 * y) * (2 * w) + 2 * xx;
            xp[y * w + xx] =
                cell[0] + cell[1] + cell[2 * w] + cell[2 * w + 1];
          }
        }
      }
      x.accumulate_grad(gx);
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " +
                                shape_str(x.shape()) + " as " +
                                shape_str(shape));
  }
  Tensor out = Tensor::zeros(std::move(shape));
  out.values() = x.values();
  if (recording({&x})) {
    Tape::active()->record("reshape", {x}, out, [x, out] {
      if (x.needs_grad()) x.accumulate_grad(out.grad());
    });
  }
  return out;
}

Tensor time_bias(const Tensor& x, const Tensor& tb) {
  require_rank("time_bias", x, 4);
  require_rank("time_bias", tb, 2);
  const int n = x.shape()[0], c = x.shape()[1];
  const int64_t hw = static_cast<int64_t>(x.shape()[2]) * x.shape()[3];
  if (tb.shape()[0] != n || tb.shape()[1] != c) {
    throw std::invalid_argument("time_bias: bias " + shape_str(tb.shape()) +
                                " does not match input " +
                                shape_str(x.shape()));
  }
  Tensor out = Tensor::zeros(x.shape());
  float* dst = out.values().data();
  const float* src = x.values().data();
  for (int64_t plane = 0; plane < static_cast<int64_t>(n) * c; ++plane) {
    const float b = tb.values()[plane];
    for (int64_t i = 0; i < hw; ++i) dst[plane * hw + i] = src[plane * hw + i] + b;
  }
  ensure_finite("time_bias", out.values());
  if (recording({&x, &tb})) {
    Tape::active()->record("time_bias", {x, tb}, out, [x, tb, out, n, c, hw] {
      const ArrayXf& g = out.grad();
      if (x.needs_grad()) x.accumulate_grad(g);
      if (tb.needs_grad()) {
        ArrayXf gtb(static_cast<int64_t>(n) * c);
        for (int64_t plane = 0; plane < static_cast<int64_t>(n) * c; ++plane) {
          gtb[plane] = g.segment(plane * hw, hw).sum();
        }
        tb.accumulate_grad(gtb);
      }
    });
  }
  return out;
}

namespace {

void require_arity(OpKind kind, const std::vector<Tensor>& inputs,
                   size_t lo, size_t hi) {
  if (inputs.size() < lo || inputs.size() > hi) {
    throw std::invalid_argument(std::string(op_name(kind)) +
                                ": expects " + std::to_string(lo) +
                                (hi != lo ? ".." + std::to_string(hi) : "") +
                                " inputs, got " +
                                std::to_string(inputs.size()));
  }
}

}  // namespace

Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs,
                  const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::Add:
      require_arity(kind, inputs, 2, 2);
      return add(inputs[0], inputs[1]);
    case OpKind::Sub:
      require_arity(kind, inputs, 2, 2);
      return sub(inputs[0], inputs[1]);
    case OpKind::Mul:
      require_arity(kind, inputs, 2, 2);
      return mul(inputs[0], inputs[1]);
    case OpKind::Scale:
      require_arity(kind, inputs, 1, 1);
      return scale(inputs[0], attrs.scale_factor);
    case OpKind::MatMul:
      require_arity(kind, inputs, 2, 2);
      return matmul(inputs[0], inputs[1]);
    case OpKind::Conv2d:
      require_arity(kind, inputs, 2, 3);
      return conv2d(inputs[0], inputs[1],
                    inputs.size() == 3 ? inputs[2] : Tensor{}, attrs.stride,
                    attrs.pad);
    case OpKind::Relu:
      require_arity(kind, inputs, 1, 1);
      return relu(inputs[0]);
    case OpKind::Sigmoid:
      require_arity(kind, inputs, 1, 1);
      return sigmoid(inputs[0]);
    case OpKind::SinEmbed:
      require_arity(kind, inputs, 1, 1);
      return sin_embed(inputs[0], attrs.embed_dim);
    case OpKind::Mse:
      require_arity(kind, inputs, 2, 2);
      return mse(inputs[0], inputs[1]);
    case OpKind::Upsample2x:
      require_arity(kind, inputs, 1, 1);
      return upsample2x(inputs[0]);
    case OpKind::Reshape:
      require_arity(kind, inputs, 1, 1);
      return reshape(inputs[0], attrs.reshape_to);
    case OpKind::TimeBias:
      require_arity(kind, inputs, 2, 2);
      return time_bias(inputs[0], inputs[1]);
  }
  throw std::invalid_argument("forward_op: unknown op kind");
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) {
    throw std::logic_error("backward: no active tape on this thread");
  }
  tape->backward(loss);
}

}  // namespace udap
