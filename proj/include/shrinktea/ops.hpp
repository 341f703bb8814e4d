#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "shrinktea/tensor.hpp"

// Differentiable operations. Every function builds a graph node whose backward rule
// accumulates into the inputs that require grad.
namespace shrinktea::ops {

inline constexpr double kNormEps = 1e-12;

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

inline shrinktea::detail::Node& parent(shrinktea::detail::Node& self, std::size_t i) { return *self.parents[i]; }

// Leading dims collapsed into rows, last dim kept.
inline std::pair<std::size_t, std::size_t> rows_cols(const Shape& shape) {
  std::size_t cols = shape.back();
  return {shape_size(shape) / cols, cols};
}

inline Shape drop_last(const Shape& shape) {
  if (shape.size() <= 1) return {1};
  return Shape(shape.begin(), shape.end() - 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](auto& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = detail::parent(self, k);
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](auto& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](auto& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.data[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [factor](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * factor;
  });
}

inline Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + value;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

inline Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * a[i];
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += 2.0 * p.data[i] * self.grad[i];
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.data[i] > 0.0) p.grad[i] += self.grad[i];
    }
  });
}

// Leaky-linear unit with one learnable slope per channel (last axis).
inline Tensor prelu(const Tensor& x, const Tensor& slope) {
  auto [rows, channels] = detail::rows_cols(x.shape());
  if (slope.rank() != 1 || slope.size() != channels) {
    throw DimensionError("prelu: slope " + shape_str(slope.shape()) + " does not match channels of " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      double v = x[r * channels + c];
      out[r * channels + c] = v > 0.0 ? v : slope[c] * v;
    }
  }
  return Tensor::from_op(x.shape(), std::move(out), {x, slope}, [rows, channels](auto& self) {
    auto& px = detail::parent(self, 0);
    auto& ps = detail::parent(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t i = r * channels + c;
        double v = px.data[i];
        double g = self.grad[i];
        if (v > 0.0) {
          if (px.requires_grad) px.grad[i] += g;
        } else {
          if (px.requires_grad) px.grad[i] += g * ps.data[c];
          if (ps.requires_grad) ps.grad[c] += g * v;
        }
      }
    }
  });
}

// Clamps values; the gradient passes through unchanged.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a[i], lo, hi);
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and views

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::from_op({1}, {s}, {a}, [](auto& self) {
    auto& p = detail::parent(self, 0);
    for (auto& g : p.grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  double n = static_cast<double>(a.size());
  return Tensor::from_op({1}, {s / n}, {a}, [n](auto& self) {
    auto& p = detail::parent(self, 0);
    for (auto& g : p.grad) g += self.grad[0] / n;
  });
}

// Sum over the last axis.
inline Tensor row_sum(const Tensor& a) {
  auto [rows, cols] = detail::rows_cols(a.shape());
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r] += a[r * cols + c];
  }
  return Tensor::from_op(detail::drop_last(a.shape()), std::move(out), {a}, [rows, cols](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) p.grad[r * cols + c] += self.grad[r];
    }
  });
}

inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::from_op(std::move(shape), std::move(out), {a}, [](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  }
  return Tensor::from_op({n, m}, std::move(out), {a}, [m, n](auto& self) {
    auto& p = detail::parent(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear maps

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  std::vector<double> out(m * p, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * p;
    for (std::size_t t = 0; t < k; ++t) {
      double av = ad[i * k + t];
      const double* brow = bd.data() + t * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += av * brow[j];
    }
  }
  return Tensor::from_op({m, p}, std::move(out), {a, b}, [m, k, p](auto& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
          double s = 0.0;
          const double* brow = pb.data.data() + t * p;
          for (std::size_t j = 0; j < p; ++j) s += g[i * p + j] * brow[j];
          pa.grad[i * k + t] += s;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
          double av = pa.data[i * k + t];
          double* gbrow = pb.grad.data() + t * p;
          for (std::size_t j = 0; j < p; ++j) gbrow[j] += av * g[i * p + j];
        }
      }
    }
  });
}

// Per-position channel mixing over the last axis; weight columns are output channels.
inline Tensor conv2d_1x1(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias = std::nullopt) {
  auto [rows, c_in] = detail::rows_cols(x.shape());
  if (weight.rank() != 2 || weight.dim(0) != c_in) {
    throw DimensionError("conv2d_1x1: input channels " + std::to_string(c_in) + " do not match weight " +
                         shape_str(weight.shape()));
  }
  std::size_t c_out = weight.dim(1);
  if (bias && (bias->rank() != 1 || bias->size() != c_out)) {
    throw DimensionError("conv2d_1x1: bias " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(c_out) + " output channels");
  }
  Shape out_shape = x.shape();
  out_shape.back() = c_out;
  std::vector<double> out(rows * c_out, 0.0);
  auto xd = x.data();
  auto wd = weight.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = out.data() + r * c_out;
    if (bias) std::copy(bias->data().begin(), bias->data().end(), orow);
    for (std::size_t c = 0; c < c_in; ++c) {
      double xv = xd[r * c_in + c];
      const double* wrow = wd.data() + c * c_out;
      for (std::size_t o = 0; o < c_out; ++o) orow[o] += xv * wrow[o];
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return Tensor::from_op(std::move(out_shape), std::move(out), std::move(inputs), [rows, c_in, c_out](auto& self) {
    auto& px = detail::parent(self, 0);
    auto& pw = detail::parent(self, 1);
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* grow = g + r * c_out;
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* wrow = pw.data.data() + c * c_out;
        if (px.requires_grad) {
          double s = 0.0;
          for (std::size_t o = 0; o < c_out; ++o) s += grow[o] * wrow[o];
          px.grad[r * c_in + c] += s;
        }
        if (pw.requires_grad) {
          double xv = px.data[r * c_in + c];
          double* gw = pw.grad.data() + c * c_out;
          for (std::size_t o = 0; o < c_out; ++o) gw[o] += xv * grow[o];
        }
      }
    }
    if (self.parents.size() > 2) {
      auto& pb = detail::parent(self, 2);
      if (pb.requires_grad) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < c_out; ++o) pb.grad[o] += g[r * c_out + o];
        }
      }
    }
  });
}

// 3x3 convolution with zero padding 1. Input is [B,h,w,c_in] or [h,w,c_in];
// weight is [3,3,c_in,c_out]. Output spatial dims are ceil(h/stride) x ceil(w/stride).
inline Tensor conv2d_3x3(const Tensor& x, const Tensor& weight, int stride) {
  if (stride != 1 && stride != 2) throw ConfigError("conv2d_3x3: unsupported stride " + std::to_string(stride));
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("conv2d_3x3: expected [B,h,w,c] or [h,w,c], got " + shape_str(x.shape()));
  }
  const bool batched = x.rank() == 4;
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t h = x.dim(batched ? 1 : 0), w = x.dim(batched ? 2 : 1), c_in = x.dim(batched ? 3 : 2);
  if (weight.rank() != 4 || weight.dim(0) != 3 || weight.dim(1) != 3 || weight.dim(2) != c_in) {
    throw DimensionError("conv2d_3x3: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  const std::size_t c_out = weight.dim(3);
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t ho = (h - 1) / s + 1, wo = (w - 1) / s + 1;

  Shape out_shape = batched ? Shape{batch, ho, wo, c_out} : Shape{ho, wo, c_out};
  std::vector<double> out(batch * ho * wo * c_out, 0.0);
  auto xd = x.data();
  auto wd = weight.data();

  // Visits every (output position, valid tap) pair with pointers into the flat buffers.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          std::size_t out_off = ((b * ho + oy) * wo + ox) * c_out;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            long iy = static_cast<long>(oy * s + ky) - 1;
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              long ix = static_cast<long>(ox * s + kx) - 1;
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              std::size_t x_off = ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * c_in;
              std::size_t w_off = (ky * 3 + kx) * c_in * c_out;
              fn(out_off, x_off, w_off);
            }
          }
        }
      }
    }
  };

  for_each_tap([&](std::size_t out_off, std::size_t x_off, std::size_t w_off) {
    double* orow = out.data() + out_off;
    for (std::size_t c = 0; c < c_in; ++c) {
      double xv = xd[x_off + c];
      const double* wrow = wd.data() + w_off + c * c_out;
      for (std::size_t o = 0; o < c_out; ++o) orow[o] += xv * wrow[o];
    }
  });

  return Tensor::from_op(std::move(out_shape), std::move(out), {x, weight}, [for_each_tap, c_in, c_out](auto& self) {
    auto& px = detail::parent(self, 0);
    auto& pw = detail::parent(self, 1);
    const double* g = self.grad.data();
    for_each_tap([&](std::size_t out_off, std::size_t x_off, std::size_t w_off) {
      const double* grow = g + out_off;
      for (std::size_t c = 0; c < c_in; ++c) {
        const double* wrow = pw.data.data() + w_off + c * c_out;
        if (px.requires_grad) {
          double acc = 0.0;
          for (std::size_t o = 0; o < c_out; ++o) acc += grow[o] * wrow[o];
          px.grad[x_off + c] += acc;
        }
        if (pw.requires_grad) {
          double xv = px.data[x_off + c];
          double* gw = pw.grad.data() + w_off + c * c_out;
          for (std::size_t o = 0; o < c_out; ++o) gw[o] += xv * grow[o];
        }
      }
    });
  });
}

// ---------------------------------------------------------------------------
// Normalization

// Divides each row (last axis) by max(||row||, eps).
inline Tensor l2_normalize(const Tensor& x, double eps = kNormEps) {
  auto [rows, cols] = detail::rows_cols(x.shape());
  std::vector<double> out(x.size());
  std::vector<double> norms(rows);
  std::vector<char> guarded(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < cols; ++c) ss += x[r * cols + c] * x[r * cols + c];
    double n = std::sqrt(ss);
    guarded[r] = n < eps;
    norms[r] = guarded[r] ? eps : n;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] / norms[r];
  }
  return Tensor::from_op(x.shape(), std::move(out), {x},
                         [rows, cols, norms = std::move(norms), guarded = std::move(guarded)](auto& self) {
                           auto& p = detail::parent(self, 0);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* y = self.data.data() + r * cols;
                             const double* g = self.grad.data() + r * cols;
                             double yg = 0.0;
                             if (!guarded[r]) {
                               for (std::size_t c = 0; c < cols; ++c) yg += y[c] * g[c];
                             }
                             for (std::size_t c = 0; c < cols; ++c) {
                               p.grad[r * cols + c] += (g[c] - y[c] * yg) / norms[r];
                             }
                           }
                         });
}

// Cosine similarity per row (last axis), clamped to [-1, 1].
inline Tensor cosine(const Tensor& a, const Tensor& b, double eps = kNormEps) {
  detail::require_same_shape(a, b, "cosine");
  return clamp(row_sum(mul(l2_normalize(a, eps), l2_normalize(b, eps))), -1.0, 1.0);
}

// Batch normalization over all leading axes, one statistic per channel (last axis).
// Training mode: uses batch statistics and reports them through the out-params.
inline Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                               std::vector<double>* batch_mean = nullptr, std::vector<double>* batch_var = nullptr) {
  auto [rows, channels] = detail::rows_cols(x.shape());
  if (gamma.size() != channels || beta.size() != channels) {
    throw DimensionError("batch_norm: affine parameters do not match " + std::to_string(channels) + " channels");
  }
  std::vector<double> mu(channels, 0.0), var(channels, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) mu[c] += x[r * channels + c];
  }
  for (auto& m : mu) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      double d = x[r * channels + c] - mu[c];
      var[c] += d * d;
    }
  }
  for (auto& v : var) v /= static_cast<double>(rows);
  std::vector<double> inv(channels);
  for (std::size_t c = 0; c < channels; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);

  std::vector<double> xhat(x.size()), out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t i = r * channels + c;
      xhat[i] = (x[i] - mu[c]) * inv[c];
      out[i] = gamma[c] * xhat[i] + beta[c];
    }
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;

  return Tensor::from_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [rows, channels, inv = std::move(inv), xhat = std::move(xhat)](auto& self) {
        auto& px = detail::parent(self, 0);
        auto& pg = detail::parent(self, 1);
        auto& pb = detail::parent(self, 2);
        std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < channels; ++c) {
            std::size_t i = r * channels + c;
            sum_g[c] += self.grad[i];
            sum_gx[c] += self.grad[i] * xhat[i];
          }
        }
        if (pg.requires_grad) {
          for (std::size_t c = 0; c < channels; ++c) pg.grad[c] += sum_gx[c];
        }
        if (pb.requires_grad) {
          for (std::size_t c = 0; c < channels; ++c) pb.grad[c] += sum_g[c];
        }
        if (px.requires_grad) {
          const double m = static_cast<double>(rows);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < channels; ++c) {
              std::size_t i = r * channels + c;
              px.grad[i] += pg.data[c] * inv[c] / m * (m * self.grad[i] - sum_g[c] - xhat[i] * sum_gx[c]);
            }
          }
        }
      });
}

// Inference mode: fixed statistics, affine in x.
inline Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              std::span<const double> running_mean, std::span<const double> running_var,
                              double eps) {
  auto [rows, channels] = detail::rows_cols(x.shape());
  if (gamma.size() != channels || beta.size() != channels || running_mean.size() != channels ||
      running_var.size() != channels) {
    throw DimensionError("batch_norm: parameters do not match " + std::to_string(channels) + " channels");
  }
  std::vector<double> inv(channels), mu(running_mean.begin(), running_mean.end());
  for (std::size_t c = 0; c < channels; ++c) inv[c] = 1.0 / std::sqrt(running_var[c] + eps);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      std::size_t i = r * channels + c;
      out[i] = gamma[c] * (x[i] - mu[c]) * inv[c] + beta[c];
    }
  }
  return Tensor::from_op(x.shape(), std::move(out), {x, gamma, beta},
                         [rows, channels, inv = std::move(inv), mu = std::move(mu)](auto& self) {
                           auto& px = detail::parent(self, 0);
                           auto& pg = detail::parent(self, 1);
                           auto& pb = detail::parent(self, 2);
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < channels; ++c) {
                               std::size_t i = r * channels + c;
                               double g = self.grad[i];
                               if (px.requires_grad) px.grad[i] += g * pg.data[c] * inv[c];
                               if (pg.requires_grad) pg.grad[c] += g * (px.data[i] - mu[c]) * inv[c];
                               if (pb.requires_grad) pb.grad[c] += g;
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Classification

// Mean over rows of -log softmax(logits)[label]. logits is [C] or [B,C].
inline Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  auto [rows, classes] = detail::rows_cols(logits.shape());
  if (logits.rank() > 2) throw DimensionError("softmax_cross_entropy: logits must be [C] or [B,C]");
  if (labels.size() != rows) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw IndexError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  std::vector<double> probs(logits.size());
  std::vector<int> ys(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data().data() + r * classes;
    double zmax = *std::max_element(z, z + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(z[c] - zmax);
      denom += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= denom;
    total += -(z[ys[r]] - zmax - std::log(denom));
  }
  const double n = static_cast<double>(rows);
  return Tensor::from_op({1}, {total / n}, {logits},
                         [rows, classes, n, probs = std::move(probs), ys = std::move(ys)](auto& self) {
                           auto& p = detail::parent(self, 0);
                           double g = self.grad[0] / n;
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < classes; ++c) {
                               double target = static_cast<int>(c) == ys[r] ? 1.0 : 0.0;
                               p.grad[r * classes + c] += g * (probs[r * classes + c] - target);
                             }
                           }
                         });
}

inline Tensor softmax_cross_entropy(const Tensor& logits, int label) {
  int labels[1] = {label};
  return softmax_cross_entropy(logits, std::span<const int>(labels, 1));
}

}  // namespace shrinktea::ops
