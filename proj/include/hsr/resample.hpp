#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string_view>
#include <vector>

#include "hsr/error.hpp"
#include "hsr/tensor.hpp"

namespace hsr {

enum class ResampleKernel { bicubic_a_half, bicubic_a_threequarter, area };

inline std::string_view to_string(ResampleKernel k) {
  switch (k) {
    case ResampleKernel::bicubic_a_half: return "bicubic_a_half";
    case ResampleKernel::bicubic_a_threequarter: return "bicubic_a_threequarter";
    case ResampleKernel::area: return "area";
  }
  return "?";
}

/// Keys cubic convolution kernel with parameter a.
inline double keys_cubic(double x, double a) noexcept {
  x = std::abs(x);
  if (x < 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

/// One-dimensional linear resampling operator stored as sparse rows.
/// Each row is normalized to sum to one.
class AxisResampler {
 public:
  struct Tap {
    std::size_t index;
    double weight;
  };

  AxisResampler() = default;

  /// Bicubic (Keys, parameter a) or block-area resampling from n_in samples to n_out.
  /// When shrinking, the kernel support is widened by the scale (anti-aliasing).
  AxisResampler(std::size_t n_in, std::size_t n_out, ResampleKernel kernel) : n_in_(n_in), n_out_(n_out) {
    require(n_in >= 1 && n_out >= 1, "resample: extents must be positive");
    rows_.resize(n_out);
    if (kernel == ResampleKernel::area) {
      require(n_in % n_out == 0, "resample: area kernel needs an integer shrink factor, got ", n_in, " -> ",
              n_out);
      const std::size_t f = n_in / n_out;
      for (std::size_t i = 0; i < n_out; ++i)
        for (std::size_t j = 0; j < f; ++j) rows_[i].push_back({i * f + j, 1.0 / static_cast<double>(f)});
      return;
    }
    const double a = kernel == ResampleKernel::bicubic_a_half ? -0.5 : -0.75;
    const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
    const double filter_scale = std::max(scale, 1.0);
    const double support = 2.0 * filter_scale;
    for (std::size_t i = 0; i < n_out; ++i) {
      const double center = (static_cast<double>(i) + 0.5) * scale;
      const long lo = std::max(0L, static_cast<long>(std::floor(center - support + 0.5)));
      const long hi = std::min(static_cast<long>(n_in), static_cast<long>(std::floor(center + support + 0.5)));
      double total = 0.0;
      for (long j = lo; j < hi; ++j) {
        const double w = keys_cubic((static_cast<double>(j) + 0.5 - center) / filter_scale, a);
        if (w == 0.0) continue;
        rows_[i].push_back({static_cast<std::size_t>(j), w});
        total += w;
      }
      for (Tap& t : rows_[i]) t.weight /= total;
    }
  }

  std::size_t in_size() const noexcept { return n_in_; }
  std::size_t out_size() const noexcept { return n_out_; }
  const std::vector<Tap>& row(std::size_t i) const { return rows_.at(i); }

 private:
  std::size_t n_in_ = 0, n_out_ = 0;
  std::vector<std::vector<Tap>> rows_;
};

/// Separable H x W resampling of an H x W x C tensor, rows first then columns.
class SpatialResampler {
 public:
  SpatialResampler(std::size_t h_in, std::size_t w_in, std::size_t h_out, std::size_t w_out, ResampleKernel k)
      : rows_(h_in, h_out, k), cols_(w_in, w_out, k) {}

  static SpatialResampler downsample(std::size_t h, std::size_t w, std::size_t factor, ResampleKernel k) {
    require(factor >= 1, "resample: factor must be >= 1");
    require(h % factor == 0 && w % factor == 0, "resample: dimensions ", h, "x", w,
            " not divisible by factor ", factor, " (center_crop first)");
    return SpatialResampler(h, w, h / factor, w / factor, k);
  }

  static SpatialResampler upsample(std::size_t h, std::size_t w, std::size_t factor, ResampleKernel k) {
    require(factor >= 1, "resample: factor must be >= 1");
    require(k != ResampleKernel::area, "resample: area kernel only supports downsampling");
    return SpatialResampler(h, w, h * factor, w * factor, k);
  }

  Shape in_shape(std::size_t c) const { return {rows_.in_size(), cols_.in_size(), c}; }
  Shape out_shape(std::size_t c) const { return {rows_.out_size(), cols_.out_size(), c}; }

  Tensor apply(const Tensor& x) const {
    require<ShapeError>(x.rank() == 3 && x.height() == rows_.in_size() && x.width() == cols_.in_size(),
                        "resample: input ", shape_str(x.shape()), " does not match operator input ",
                        rows_.in_size(), "x", cols_.in_size());
    const std::size_t C = x.channels(), Wi = cols_.in_size(), Ho = rows_.out_size(), Wo = cols_.out_size();
    Tensor tmp(Shape{Ho, Wi, C});
    for (std::size_t i = 0; i < Ho; ++i)
      for (const auto& t : rows_.row(i))
        for (std::size_t w = 0; w < Wi; ++w)
          for (std::size_t c = 0; c < C; ++c) tmp.at(i, w, c) += t.weight * x.at(t.index, w, c);
    Tensor y(Shape{Ho, Wo, C});
    for (std::size_t h = 0; h < Ho; ++h)
      for (std::size_t j = 0; j < Wo; ++j)
        for (const auto& t : cols_.row(j))
          for (std::size_t c = 0; c < C; ++c) y.at(h, j, c) += t.weight * tmp.at(h, t.index, c);
    return y;
  }

  /// Transpose of apply().
  Tensor adjoint(const Tensor& gy) const {
    const std::size_t C = gy.channels(), Hi = rows_.in_size(), Wi = cols_.in_size(), Ho = rows_.out_size(),
                      Wo = cols_.out_size();
    Tensor tmp(Shape{Ho, Wi, C});
    for (std::size_t h = 0; h < Ho; ++h)
      for (std::size_t j = 0; j < Wo; ++j)
        for (const auto& t : cols_.row(j))
          for (std::size_t c = 0; c < C; ++c) tmp.at(h, t.index, c) += t.weight * gy.at(h, j, c);
    Tensor gx(Shape{Hi, Wi, C});
    for (std::size_t i = 0; i < Ho; ++i)
      for (const auto& t : rows_.row(i))
        for (std::size_t w = 0; w < Wi; ++w)
          for (std::size_t c = 0; c < C; ++c) gx.at(t.index, w, c) += t.weight * tmp.at(i, w, c);
    return gx;
  }

  const AxisResampler& rows() const noexcept { return rows_; }
  const AxisResampler& cols() const noexcept { return cols_; }

 private:
  AxisResampler rows_, cols_;
};

}  // namespace hsr
