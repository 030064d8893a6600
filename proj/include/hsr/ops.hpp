#pragma once

// Forward kernels and their adjoints on plain tensors. The tape wrappers in
// autodiff.hpp compose these; non-differentiable callers (degradations, metrics)
// use them directly.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hsr/error.hpp"
#include "hsr/tensor.hpp"

namespace hsr::ops {

enum class PadMode { zero, reflect };

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
  PadMode pad_mode = PadMode::zero;
  std::size_t dilation = 1;
  std::size_t groups = 1;

  /// Zero "same" padding: pad = dilation * (K - 1) / 2.
  static Conv2dOptions same(std::size_t k, std::size_t dilation = 1, std::size_t groups = 1) {
    return {1, dilation * (k - 1) / 2, PadMode::zero, dilation, groups};
  }
};

/// Mirror index into [0, n) without repeating the edge sample (numpy "reflect").
inline std::size_t reflect_index(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

namespace detail {

inline void require_hwc(const Tensor& t, const char* what) {
  require<ShapeError>(t.rank() == 3, what, ": expected rank-3 H x W x C tensor, got ",
                      shape_str(t.shape()));
}

inline std::size_t conv_out_extent(std::size_t n, std::size_t k, const Conv2dOptions& o,
                                   const char* axis) {
  const std::size_t span = o.dilation * (k - 1) + 1;
  require<ShapeError>(n + 2 * o.pad >= span, "conv2d: axis ", axis, " extent ", n,
                      " (padded ", n + 2 * o.pad, ") smaller than dilated kernel span ", span);
  return (n + 2 * o.pad - span) / o.stride + 1;
}

// For output index o and tap t: the source index, or -1 for a zero-padded tap.
inline std::vector<long> tap_map(std::size_t n_in, std::size_t n_out, std::size_t k,
                                 const Conv2dOptions& o) {
  std::vector<long> map(n_out * k);
  for (std::size_t out = 0; out < n_out; ++out) {
    for (std::size_t t = 0; t < k; ++t) {
      const long src = static_cast<long>(out * o.stride + t * o.dilation) - static_cast<long>(o.pad);
      long m = -1;
      if (src >= 0 && src < static_cast<long>(n_in))
        m = src;
      else if (o.pad_mode == PadMode::reflect)
        m = static_cast<long>(reflect_index(src, n_in));
      map[out * k + t] = m;
    }
  }
  return map;
}

struct ConvGeometry {
  std::size_t H, W, Cin, K, Cout, OH, OW, cin_g, cout_g, groups;
  std::vector<long> rows, cols;
};

inline ConvGeometry conv_geometry(const Tensor& x, const Tensor& k, const Conv2dOptions& o) {
  require_hwc(x, "conv2d input");
  require<ShapeError>(k.rank() == 4, "conv2d: kernel must be rank 4 (K x K x Cin/groups x Cout), got ",
                      shape_str(k.shape()));
  require<ShapeError>(k.extent(0) == k.extent(1), "conv2d: kernel axes 0/1 must be square, got ",
                      shape_str(k.shape()));
  require<ShapeError>(k.extent(0) % 2 == 1, "conv2d: kernel spatial extent must be odd, got ",
                      k.extent(0));
  require<ShapeError>(o.dilation >= 1 && o.stride >= 1 && o.groups >= 1,
                      "conv2d: stride, dilation and groups must be >= 1");
  ConvGeometry g{};
  g.H = x.extent(0);
  g.W = x.extent(1);
  g.Cin = x.extent(2);
  g.K = k.extent(0);
  g.Cout = k.extent(3);
  g.groups = o.groups;
  require<ShapeError>(g.Cin % o.groups == 0, "conv2d: axis 2 (input channels) extent ", g.Cin,
                      " not divisible by groups ", o.groups);
  require<ShapeError>(g.Cout % o.groups == 0, "conv2d: kernel axis 3 (output channels) extent ", g.Cout,
                      " not divisible by groups ", o.groups);
  g.cin_g = g.Cin / o.groups;
  g.cout_g = g.Cout / o.groups;
  require<ShapeError>(k.extent(2) == g.cin_g, "conv2d: kernel axis 2 (input channels per group) expected ",
                      g.cin_g, ", got ", k.extent(2));
  g.OH = conv_out_extent(g.H, g.K, o, "0 (height)");
  g.OW = conv_out_extent(g.W, g.K, o, "1 (width)");
  g.rows = tap_map(g.H, g.OH, g.K, o);
  g.cols = tap_map(g.W, g.OW, g.K, o);
  return g;
}

}  // namespace detail

/// Cross-correlation. input H x W x Cin, kernel K x K x (Cin/groups) x Cout, bias Cout.
inline Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor* bias, const Conv2dOptions& o) {
  const auto g = detail::conv_geometry(x, k, o);
  if (bias)
    require<ShapeError>(bias->rank() == 1 && bias->extent(0) == g.Cout, "conv2d: bias axis 0 expected ",
                        g.Cout, ", got ", shape_str(bias->shape()));
  Tensor y(Shape{g.OH, g.OW, g.Cout});
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  double* yd = y.data().data();
  for (std::size_t oh = 0; oh < g.OH; ++oh) {
    for (std::size_t ow = 0; ow < g.OW; ++ow) {
      double* yo = yd + (oh * g.OW + ow) * g.Cout;
      if (bias)
        for (std::size_t co = 0; co < g.Cout; ++co) yo[co] = (*bias)[co];
      for (std::size_t kh = 0; kh < g.K; ++kh) {
        const long ih = g.rows[oh * g.K + kh];
        if (ih < 0) continue;
        for (std::size_t kw = 0; kw < g.K; ++kw) {
          const long iw = g.cols[ow * g.K + kw];
          if (iw < 0) continue;
          const double* xi = xd + (static_cast<std::size_t>(ih) * g.W + static_cast<std::size_t>(iw)) * g.Cin;
          const double* kk = kd + (kh * g.K + kw) * g.cin_g * g.Cout;
          for (std::size_t gr = 0; gr < g.groups; ++gr) {
            double* yg = yo + gr * g.cout_g;
            for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
              const double xv = xi[gr * g.cin_g + ci];
              const double* kr = kk + ci * g.Cout + gr * g.cout_g;
              for (std::size_t co = 0; co < g.cout_g; ++co) yg[co] += xv * kr[co];
            }
          }
        }
      }
    }
  }
  return y;
}

/// Accumulates conv2d adjoints into gx / gk / gb (each optional).
inline void conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& gy, const Conv2dOptions& o,
                            Tensor* gx, Tensor* gk, Tensor* gb) {
  const auto g = detail::conv_geometry(x, k, o);
  const double* xd = x.data().data();
  const double* kd = k.data().data();
  const double* gyd = gy.data().data();
  double* gxd = gx ? gx->data().data() : nullptr;
  double* gkd = gk ? gk->data().data() : nullptr;
  for (std::size_t oh = 0; oh < g.OH; ++oh) {
    for (std::size_t ow = 0; ow < g.OW; ++ow) {
      const double* go = gyd + (oh * g.OW + ow) * g.Cout;
      if (gb)
        for (std::size_t co = 0; co < g.Cout; ++co) (*gb)[co] += go[co];
      for (std::size_t kh = 0; kh < g.K; ++kh) {
        const long ih = g.rows[oh * g.K + kh];
        if (ih < 0) continue;
        for (std::size_t kw = 0; kw < g.K; ++kw) {
          const long iw = g.cols[ow * g.K + kw];
          if (iw < 0) continue;
          const std::size_t xoff = (static_cast<std::size_t>(ih) * g.W + static_cast<std::size_t>(iw)) * g.Cin;
          const std::size_t koff = (kh * g.K + kw) * g.cin_g * g.Cout;
          for (std::size_t gr = 0; gr < g.groups; ++gr) {
            const double* gg = go + gr * g.cout_g;
            for (std::size_t ci = 0; ci < g.cin_g; ++ci) {
              const std::size_t xi = xoff + gr * g.cin_g + ci;
              const std::size_t ki = koff + ci * g.Cout + gr * g.cout_g;
              if (gxd) {
                double acc = 0.0;
                for (std::size_t co = 0; co < g.cout_g; ++co) acc += gg[co] * kd[ki + co];
                gxd[xi] += acc;
              }
              if (gkd) {
                const double xv = xd[xi];
                for (std::size_t co = 0; co < g.cout_g; ++co) gkd[ki + co] += xv * gg[co];
              }
            }
          }
        }
      }
    }
  }
}

// --- activations -------------------------------------------------------------

enum class Activation { gelu, sigmoid };

/// Exact GeLU: x * Phi(x) with Phi from erf.
inline double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) noexcept {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor activation(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = kind == Activation::gelu ? gelu(x[i]) : sigmoid(x[i]);
  return y;
}

// --- pooling / broadcasting --------------------------------------------------

/// Which spatial axis survives the mean.
enum class Keep { height, width, none };

inline Shape pooled_shape(const Shape& s, Keep keep) {
  switch (keep) {
    case Keep::height: return {s[0], 1, s[2]};
    case Keep::width: return {1, s[1], s[2]};
    case Keep::none: return {1, 1, s[2]};
  }
  return s;
}

inline Tensor avgpool_axes(const Tensor& x, Keep keep) {
  detail::require_hwc(x, "avgpool_axes");
  const std::size_t H = x.height(), W = x.width(), C = x.channels();
  Tensor y(pooled_shape(x.shape(), keep));
  const std::size_t PH = y.height(), PW = y.width();
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t c = 0; c < C; ++c) y.at(PH == 1 ? 0 : h, PW == 1 ? 0 : w, c) += x.at(h, w, c);
  const double n = static_cast<double>((H / PH) * (W / PW));
  for (double& v : y.data()) v /= n;
  return y;
}

/// Broadcast `small` (singleton axes allowed on 0/1) up to `target`.
inline Tensor expand(const Tensor& small, const Shape& target) {
  detail::require_hwc(small, "expand");
  require<ShapeError>(target.size() == 3, "expand: target must be rank 3");
  for (std::size_t a = 0; a < 3; ++a)
    require<ShapeError>(small.extent(a) == target[a] || (a < 2 && small.extent(a) == 1), "expand: axis ", a,
                        " extent ", small.extent(a), " not broadcastable to ", target[a]);
  Tensor y(target);
  const bool bh = small.height() == 1, bw = small.width() == 1;
  for (std::size_t h = 0; h < target[0]; ++h)
    for (std::size_t w = 0; w < target[1]; ++w)
      for (std::size_t c = 0; c < target[2]; ++c) y.at(h, w, c) = small.at(bh ? 0 : h, bw ? 0 : w, c);
  return y;
}

/// Adjoint of expand: sum over the broadcast axes.
inline Tensor reduce_to(const Tensor& g, const Shape& small) {
  Tensor y(small);
  const bool bh = small[0] == 1, bw = small[1] == 1;
  for (std::size_t h = 0; h < g.height(); ++h)
    for (std::size_t w = 0; w < g.width(); ++w)
      for (std::size_t c = 0; c < g.channels(); ++c) y.at(bh ? 0 : h, bw ? 0 : w, c) += g.at(h, w, c);
  return y;
}

inline Tensor broadcast_mul(const Tensor& feature, const Tensor& gate) {
  detail::require_hwc(feature, "broadcast_mul feature");
  Tensor y = expand(gate, feature.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= feature[i];
  return y;
}

// --- channel movement --------------------------------------------------------

/// Output channel j = input channel index[j].
inline Tensor gather_channels(const Tensor& x, const std::vector<std::size_t>& index) {
  detail::require_hwc(x, "gather_channels");
  const std::size_t C = x.channels();
  for (std::size_t i : index)
    require<ShapeError>(i < C, "gather_channels: channel index ", i, " out of range for axis 2 extent ", C);
  const std::size_t P = x.height() * x.width(), Co = index.size();
  Tensor y(Shape{x.height(), x.width(), Co});
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t j = 0; j < Co; ++j) y[p * Co + j] = x[p * C + index[j]];
  return y;
}

inline void scatter_channels_add(const Tensor& gy, const std::vector<std::size_t>& index, Tensor& gx) {
  const std::size_t C = gx.channels(), Co = index.size();
  const std::size_t P = gx.height() * gx.width();
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t j = 0; j < Co; ++j) gx[p * C + index[j]] += gy[p * Co + j];
}

inline bool is_permutation(const std::vector<std::size_t>& perm) {
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

inline std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
  require(is_permutation(perm), "inverse_permutation: not a bijection");
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t j = 0; j < perm.size(); ++j) inv[perm[j]] = j;
  return inv;
}

inline Tensor permute_channels(const Tensor& x, const std::vector<std::size_t>& perm) {
  detail::require_hwc(x, "permute_channels");
  require<ShapeError>(perm.size() == x.channels(), "permute_channels: permutation length ", perm.size(),
                      " does not match axis 2 extent ", x.channels());
  require(is_permutation(perm), "permute_channels: permutation is not a bijection");
  return gather_channels(x, perm);
}

inline Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  const std::size_t H = parts[0]->height(), W = parts[0]->width();
  std::size_t C = 0;
  for (const Tensor* t : parts) {
    detail::require_hwc(*t, "concat_channels");
    require<ShapeError>(t->height() == H && t->width() == W, "concat_channels: spatial shape mismatch ",
                        shape_str(t->shape()), " vs ", shape_str(parts[0]->shape()));
    C += t->channels();
  }
  Tensor y(Shape{H, W, C});
  for (std::size_t p = 0; p < H * W; ++p) {
    std::size_t off = 0;
    for (const Tensor* t : parts) {
      const std::size_t c = t->channels();
      for (std::size_t j = 0; j < c; ++j) y[p * C + off + j] = (*t)[p * c + j];
      off += c;
    }
  }
  return y;
}

}  // namespace hsr::ops
