#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hsr/cube.hpp"
#include "hsr/error.hpp"
#include "hsr/io.hpp"
#include "hsr/tensor.hpp"

namespace hsr::metrics {

inline constexpr double kPsnrCap = 100.0;
inline constexpr double kCcEpsilon = 1e-12;

/// Per-band PSNR on data range 1, capped at 100 dB.
inline std::vector<double> band_psnr(const HsiCube& est, const HsiCube& gt) {
  require_same_shape(est, gt, "psnr");
  const std::size_t P = est.height() * est.width(), S = est.bands();
  std::vector<double> sse(S, 0.0);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t s = 0; s < S; ++s) {
      const double d = est.data[p * S + s] - gt.data[p * S + s];
      sse[s] += d * d;
    }
  std::vector<double> out(S);
  for (std::size_t s = 0; s < S; ++s) {
    const double mse = sse[s] / static_cast<double>(P);
    out[s] = mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
  }
  return out;
}

inline double mpsnr(const HsiCube& est, const HsiCube& gt) {
  const auto b = band_psnr(est, gt);
  double s = 0.0;
  for (double v : b) s += v;
  return s / static_cast<double>(b.size());
}

namespace detail {

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

inline std::vector<double> ssim_window() {
  std::vector<double> g(kSsimWindow * kSsimWindow);
  const double c = (kSsimWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i)
    for (std::size_t j = 0; j < kSsimWindow; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      g[i * kSsimWindow + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSsimSigma * kSsimSigma));
      total += g[i * kSsimWindow + j];
    }
  for (double& v : g) v /= total;
  return g;
}

}  // namespace detail

/// Per-band SSIM: 11x11 Gaussian window (sigma 1.5), valid positions only,
/// C1 = 0.01^2, C2 = 0.03^2; mean of the SSIM map, then mean over bands.
inline double mssim(const HsiCube& est, const HsiCube& gt) {
  require_same_shape(est, gt, "ssim");
  constexpr std::size_t K = detail::kSsimWindow;
  require<ShapeError>(est.height() >= K && est.width() >= K, "ssim: image ", est.height(), "x", est.width(),
                      " smaller than the ", K, "x", K, " window");
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const auto win = detail::ssim_window();
  const std::size_t OH = est.height() - K + 1, OW = est.width() - K + 1, S = est.bands();
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    double band = 0.0;
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (std::size_t a = 0; a < K; ++a)
          for (std::size_t b = 0; b < K; ++b) {
            const double w = win[a * K + b];
            const double x = est.at(i + a, j + b, s), y = gt.at(i + a, j + b, s);
            mx += w * x;
            my += w * y;
            xx += w * x * x;
            yy += w * y * y;
            xy += w * x * y;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        band += ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2));
      }
    total += band / static_cast<double>(OH * OW);
  }
  return total / static_cast<double>(S);
}

/// Spectral angle between two S-vectors in radians. Evaluated with the
/// 2*atan2(|u - v|, |u + v|) form on unit vectors (same value as arccos of the
/// normalized inner product, stable near 0). Zero-norm input gives 0.
inline double spectral_angle(const double* x, const double* y, std::size_t S) {
  double nx = 0.0, ny = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    nx += x[s] * x[s];
    ny += y[s] * y[s];
  }
  if (nx == 0.0 || ny == 0.0) return 0.0;
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  double dm = 0.0, dp = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    const double u = x[s] / nx, v = y[s] / ny;
    dm += (u - v) * (u - v);
    dp += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
}

/// Mean spectral angle over pixels, degrees.
inline double msam(const HsiCube& est, const HsiCube& gt) {
  require_same_shape(est, gt, "sam");
  const std::size_t P = est.height() * est.width(), S = est.bands();
  const double* e = est.data.data().data();
  const double* g = gt.data.data().data();
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p) total += spectral_angle(e + p * S, g + p * S, S);
  return total / static_cast<double>(P) * 180.0 / std::numbers::pi;
}

/// Mean over bands of the Pearson correlation across pixels. Constant bands give
/// 1 when identical, otherwise 0.
inline double cc(const HsiCube& est, const HsiCube& gt) {
  require_same_shape(est, gt, "cc");
  const std::size_t P = est.height() * est.width(), S = est.bands();
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    double mx = 0.0, my = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      mx += est.data[p * S + s];
      my += gt.data[p * S + s];
    }
    mx /= static_cast<double>(P);
    my /= static_cast<double>(P);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    bool identical = true;
    for (std::size_t p = 0; p < P; ++p) {
      const double dx = est.data[p * S + s] - mx, dy = gt.data[p * S + s] - my;
      sxy += dx * dy;
      sxx += dx * dx;
      syy += dy * dy;
      identical = identical && est.data[p * S + s] == gt.data[p * S + s];
    }
    const double denom = std::sqrt(sxx * syy);
    if (denom < kCcEpsilon)
      total += identical ? 1.0 : 0.0;
    else
      total += std::clamp(sxy / denom, -1.0, 1.0);
  }
  return total / static_cast<double>(S);
}

/// Per-image min-max normalization to [0, 1]; a constant map becomes all zeros.
inline Tensor normalize_map(const Tensor& e) {
  const auto [lo_it, hi_it] = std::minmax_element(e.data().begin(), e.data().end());
  const double lo = *lo_it, hi = *hi_it;
  Tensor out(e.shape());
  if (hi == lo) return out;
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = (e[i] - lo) / (hi - lo);
  return out;
}

/// Band-averaged absolute error per pixel, H x W.
inline Tensor error_map(const HsiCube& est, const HsiCube& gt, bool normalize) {
  require_same_shape(est, gt, "error_map");
  const std::size_t H = est.height(), W = est.width(), S = est.bands();
  Tensor e(Shape{H, W});
  for (std::size_t p = 0; p < H * W; ++p) {
    double s = 0.0;
    for (std::size_t b = 0; b < S; ++b) s += std::abs(est.data[p * S + b] - gt.data[p * S + b]);
    e[p] = s / static_cast<double>(S);
  }
  return normalize ? normalize_map(e) : e;
}

struct MetricReport {
  std::string image_id;
  std::size_t scale = 0;
  std::string setting;
  double mpsnr = 0.0;
  double mssim = 0.0;
  double msam = 0.0;
  double cc = 0.0;
  std::vector<double> per_band_psnr;
  std::optional<Tensor> error_map;
};

inline MetricReport evaluate(const HsiCube& est, const HsiCube& gt, std::size_t scale = 0, std::string setting = {},
                             bool with_error_map = false) {
  MetricReport r;
  r.image_id = gt.id;
  r.scale = scale;
  r.setting = std::move(setting);
  r.per_band_psnr = band_psnr(est, gt);
  r.mpsnr = mpsnr(est, gt);
  r.mssim = mssim(est, gt);
  r.msam = msam(est, gt);
  r.cc = cc(est, gt);
  if (with_error_map) r.error_map = error_map(est, gt, false);
  return r;
}

inline constexpr const char* kReportCsvHeader = "image_id,scale,setting,mpsnr,mssim,msam,cc\n";

inline std::string to_csv_row(const MetricReport& r) {
  return r.image_id + "," + std::to_string(r.scale) + "," + r.setting + "," + io::format_double(r.mpsnr) + "," +
         io::format_double(r.mssim) + "," + io::format_double(r.msam) + "," + io::format_double(r.cc) + "\n";
}

}  // namespace hsr::metrics
