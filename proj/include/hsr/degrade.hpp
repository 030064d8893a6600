#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "hsr/cube.hpp"
#include "hsr/error.hpp"
#include "hsr/ops.hpp"
#include "hsr/resample.hpp"
#include "hsr/rng.hpp"

namespace hsr {

enum class Setting { Train, K1, K2, B1, B2, N1, N2, N3, J1, J2 };

inline constexpr std::array<Setting, 10> kAllSettings = {Setting::Train, Setting::K1, Setting::K2, Setting::B1,
                                                         Setting::B2,    Setting::N1, Setting::N2, Setting::N3,
                                                         Setting::J1,    Setting::J2};

inline std::string_view to_string(Setting s) {
  constexpr std::array<std::string_view, 10> names = {"Train", "K1", "K2", "B1", "B2", "N1", "N2", "N3", "J1", "J2"};
  return names[static_cast<std::size_t>(s)];
}

inline Setting parse_setting(std::string_view name) {
  for (Setting s : kAllSettings)
    if (to_string(s) == name) return s;
  fail("unknown degradation setting '", name, "' (expected Train, K1, K2, B1, B2, N1, N2, N3, J1 or J2)");
}

/// A test-time degradation: setting plus the blur/noise parameters it implies.
struct DegradationSpec {
  Setting setting = Setting::Train;
  std::size_t scale = 4;
  double blur_sigma = 0.0;  // 0 when absent
  int noise_level = 0;      // n in 0..255 units, 0 when absent

  static DegradationSpec make(Setting s, std::size_t scale) {
    require(scale == 2 || scale == 4 || scale == 8, "scale factor must be 2, 4 or 8, got ", scale);
    DegradationSpec d{s, scale, 0.0, 0};
    switch (s) {
      case Setting::B1: d.blur_sigma = 0.6; break;
      case Setting::B2: d.blur_sigma = 1.0; break;
      case Setting::N1: d.noise_level = 1; break;
      case Setting::N2: d.noise_level = 2; break;
      case Setting::N3: d.noise_level = 5; break;
      case Setting::J1: d.blur_sigma = 0.6; d.noise_level = 2; break;
      case Setting::J2: d.blur_sigma = 1.0; d.noise_level = 5; break;
      default: break;
    }
    return d;
  }

  ResampleKernel kernel() const {
    if (setting == Setting::K1) return ResampleKernel::area;
    if (setting == Setting::K2) return ResampleKernel::bicubic_a_threequarter;
    return ResampleKernel::bicubic_a_half;
  }
};

// --- resampling --------------------------------------------------------------

inline HsiCube downsample(const HsiCube& cube, std::size_t factor, ResampleKernel k = ResampleKernel::bicubic_a_half) {
  const auto op = SpatialResampler::downsample(cube.height(), cube.width(), factor, k);
  return HsiCube(op.apply(cube.data), cube.id);
}

inline HsiCube upsample(const HsiCube& cube, std::size_t factor, ResampleKernel k = ResampleKernel::bicubic_a_half) {
  const auto op = SpatialResampler::upsample(cube.height(), cube.width(), factor, k);
  return HsiCube(op.apply(cube.data), cube.id);
}

// --- blur --------------------------------------------------------------------

/// Blur kernel extent for a given sigma: max(3, 2*ceil(3*sigma) + 1).
/// Gives 5 for sigma = 0.6 and 7 for sigma = 1.0.
inline std::size_t blur_kernel_size(double sigma) {
  require(sigma > 0.0, "gaussian blur: sigma must be > 0, got ", sigma);
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  return std::max<std::size_t>(3, 2 * radius + 1);
}

/// Normalized k x k Gaussian, as a K x K x 1 x 1 tensor.
inline Tensor gaussian_kernel(double sigma) {
  const std::size_t k = blur_kernel_size(sigma);
  const double c = static_cast<double>(k / 2);
  Tensor g(Shape{k, k, 1, 1});
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      g[i * k + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      total += g[i * k + j];
    }
  g *= 1.0 / total;
  return g;
}

/// Per-band Gaussian blur as a depthwise convolution with reflect padding.
inline HsiCube gaussian_blur(const HsiCube& cube, double sigma) {
  const Tensor g = gaussian_kernel(sigma);
  const std::size_t k = g.extent(0), S = cube.bands();
  Tensor kernel(Shape{k, k, 1, S});
  for (std::size_t t = 0; t < k * k; ++t)
    for (std::size_t s = 0; s < S; ++s) kernel[t * S + s] = g[t];
  const ops::Conv2dOptions o{1, k / 2, ops::PadMode::reflect, 1, S};
  return HsiCube(ops::conv2d(cube.data, kernel, nullptr, o), cube.id);
}

// --- noise -------------------------------------------------------------------

/// Adds N(0, (n/255)^2) noise to every element, then clamps to [0, 1].
/// The stream is seeded by FNV-1a of seed_key.
inline HsiCube add_noise(const HsiCube& cube, int n, std::string_view seed_key) {
  require(n >= 0, "noise level must be >= 0, got ", n);
  if (n == 0) return cube;
  Rng rng(seed_key);
  const double sd = static_cast<double>(n) / 255.0;
  HsiCube out = cube;
  for (double& v : out.data.data()) v = std::clamp(v + sd * rng.normal(), 0.0, 1.0);
  return out;
}

inline std::string noise_seed_key(const HsiCube& cube, Setting s) { return cube.id + std::string(to_string(s)); }

// --- cropping / pipeline -----------------------------------------------------

/// Crops H and W down to multiples of factor, centred; an odd trim loses the extra
/// row/column at the bottom/right.
inline HsiCube center_crop(const HsiCube& cube, std::size_t factor) {
  require(factor >= 1, "center_crop: factor must be >= 1");
  const std::size_t H = cube.height(), W = cube.width(), S = cube.bands();
  const std::size_t h = H / factor * factor, w = W / factor * factor;
  require<ShapeError>(h > 0 && w > 0, "center_crop: ", H, "x", W, " has no ", factor, "-divisible crop");
  const std::size_t top = (H - h) / 2, left = (W - w) / 2;
  HsiCube out(h, w, S, cube.id);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t s = 0; s < S; ++s) out.at(i, j, s) = cube.at(top + i, left + j, s);
  return out;
}

/// HR-space blur, downsample with the setting's kernel, LR-space noise, clamp.
inline HsiCube apply_setting(const HsiCube& hr, const DegradationSpec& spec) {
  HsiCube x = spec.blur_sigma > 0.0 ? gaussian_blur(hr, spec.blur_sigma) : hr;
  x = downsample(x, spec.scale, spec.kernel());
  x.id = hr.id;
  if (spec.noise_level > 0) return add_noise(x, spec.noise_level, noise_seed_key(hr, spec.setting));
  return clamp01(std::move(x));
}

}  // namespace hsr
