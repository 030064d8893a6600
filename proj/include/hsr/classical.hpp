#pragma once

// Post-hoc spectral rectifiers: Savitzky-Golay smoothing along the band axis,
// low-rank PCA projection, and iterative back-projection.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "hsr/cube.hpp"
#include "hsr/degrade.hpp"
#include "hsr/error.hpp"
#include "hsr/ops.hpp"
#include "hsr/params.hpp"
#include "hsr/resample.hpp"
#include "hsr/rng.hpp"

namespace hsr::classical {

// --- Savitzky-Golay ----------------------------------------------------------

/// Smoothing coefficients for a centred window of length w and polynomial order p:
/// row 0 of (A^T A)^-1 A^T for the Vandermonde matrix A over offsets -(w-1)/2..(w-1)/2.
inline std::vector<double> sg_coefficients(std::size_t w, std::size_t p) {
  require(w % 2 == 1, "savitzky-golay: window length must be odd, got ", w);
  require(p < w, "savitzky-golay: polynomial order ", p, " must be below window length ", w);
  const long half = static_cast<long>(w / 2);
  Eigen::MatrixXd A(w, p + 1);
  for (long i = -half; i <= half; ++i)
    for (std::size_t j = 0; j <= p; ++j) A(i + half, static_cast<Eigen::Index>(j)) = std::pow(static_cast<double>(i), static_cast<double>(j));
  const Eigen::MatrixXd normal = A.transpose() * A;
  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p + 1));
  e0(0) = 1.0;
  const Eigen::VectorXd z = normal.ldlt().solve(e0);
  const Eigen::VectorXd c = A * z;
  return {c.data(), c.data() + c.size()};
}

/// 1-D Savitzky-Golay filter along the band axis of every pixel. Spectra are
/// reflect-padded by (w-1)/2 and the result cropped back to S bands; output clamped to [0, 1].
inline HsiCube sg_smooth(const HsiCube& cube, std::size_t w = 7, std::size_t p = 3, bool clamp_output = true) {
  const auto coef = sg_coefficients(w, p);
  const long half = static_cast<long>(w / 2);
  const std::size_t S = cube.bands(), P = cube.height() * cube.width();
  HsiCube out(cube.height(), cube.width(), S, cube.id);
  for (std::size_t px = 0; px < P; ++px) {
    const double* x = cube.data.data().data() + px * S;
    double* y = out.data.data().data() + px * S;
    for (std::size_t s = 0; s < S; ++s) {
      double acc = 0.0;
      for (long k = -half; k <= half; ++k)
        acc += coef[static_cast<std::size_t>(k + half)] * x[ops::reflect_index(static_cast<long>(s) + k, S)];
      y[s] = clamp_output ? std::clamp(acc, 0.0, 1.0) : acc;
    }
  }
  return out;
}

// --- PCA -----------------------------------------------------------------------

struct PcaBasis {
  std::vector<double> mean;               // S
  std::vector<std::vector<double>> rows;  // k x S, orthonormal
  std::size_t n_samples = 0;

  std::size_t rank() const { return rows.size(); }
  std::size_t bands() const { return mean.size(); }
};

/// Draws n spectra uniformly from the pooled pixels of all cubes: without
/// replacement when the pool is large enough, with replacement otherwise.
inline std::vector<std::vector<double>> sample_spectra(const std::vector<HsiCube>& cubes, std::size_t n,
                                                       std::string_view seed) {
  require(!cubes.empty(), "pca_fit: empty input");
  const std::size_t S = cubes.front().bands();
  std::vector<std::pair<std::size_t, std::size_t>> pool;  // (cube, pixel)
  for (std::size_t c = 0; c < cubes.size(); ++c) {
    require<ShapeError>(cubes[c].bands() == S, "pca_fit: cube ", c, " has ", cubes[c].bands(), " bands, expected ", S);
    for (std::size_t p = 0; p < cubes[c].height() * cubes[c].width(); ++p) pool.emplace_back(c, p);
  }
  require(!pool.empty() && n > 0, "pca_fit: empty input");
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  if (pool.size() >= n) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    chosen.assign(pool.begin(), pool.begin() + static_cast<long>(n));
  } else {
    for (std::size_t i = 0; i < n; ++i) chosen.push_back(pool[rng.below(pool.size())]);
  }
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (const auto& [c, p] : chosen) {
    const double* x = cubes[c].data.data().data() + p * S;
    out.emplace_back(x, x + S);
  }
  return out;
}

/// Top-k principal directions of explicit sample spectra. Each component is signed
/// so that its first entry with |v| > 1e-12 is positive.
inline PcaBasis pca_fit_samples(const std::vector<std::vector<double>>& samples, std::size_t k) {
  require(!samples.empty(), "pca_fit: empty input");
  const std::size_t S = samples.front().size();
  require(k >= 1 && k <= S, "pca_fit: rank ", k, " outside 1..", S);
  const auto n = static_cast<double>(samples.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S));
  for (const auto& x : samples) mean += Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(S));
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  for (const auto& x : samples) {
    const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(S)) - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(d);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= n;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  require(eig.info() == Eigen::Success, "pca_fit: eigendecomposition failed");
  PcaBasis basis;
  basis.mean.assign(mean.data(), mean.data() + S);
  basis.n_samples = samples.size();
  for (std::size_t i = 0; i < k; ++i) {
    // eigenvalues ascend
    Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(S - 1 - i));
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (std::abs(v(j)) > 1e-12) {
        if (v(j) < 0) v = -v;
        break;
      }
    }
    basis.rows.emplace_back(v.data(), v.data() + S);
  }
  return basis;
}

inline PcaBasis pca_fit(const std::vector<HsiCube>& cubes, std::size_t k = 8, std::size_t n_samples = 20000,
                        std::string_view seed = "pca") {
  require(!cubes.empty(), "pca_fit: empty input");
  require(k >= 1 && k <= cubes.front().bands(), "pca_fit: rank ", k, " outside 1..", cubes.front().bands());
  return pca_fit_samples(sample_spectra(cubes, n_samples, seed), k);
}

/// x -> mean + C^T C (x - mean), per pixel.
inline HsiCube pca_project(const HsiCube& cube, const PcaBasis& basis, bool clamp_output = true) {
  const std::size_t S = cube.bands(), k = basis.rank();
  require<ShapeError>(S == basis.bands(), "pca_project: cube has ", S, " bands, basis has ", basis.bands());
  HsiCube out(cube.height(), cube.width(), S, cube.id);
  std::vector<double> d(S), coef(k);
  for (std::size_t px = 0; px < cube.height() * cube.width(); ++px) {
    const double* x = cube.data.data().data() + px * S;
    double* y = out.data.data().data() + px * S;
    for (std::size_t s = 0; s < S; ++s) d[s] = x[s] - basis.mean[s];
    for (std::size_t i = 0; i < k; ++i) {
      double a = 0.0;
      for (std::size_t s = 0; s < S; ++s) a += basis.rows[i][s] * d[s];
      coef[i] = a;
    }
    for (std::size_t s = 0; s < S; ++s) {
      double v = basis.mean[s];
      for (std::size_t i = 0; i < k; ++i) v += coef[i] * basis.rows[i][s];
      y[s] = clamp_output ? std::clamp(v, 0.0, 1.0) : v;
    }
  }
  return out;
}

/// Stored as pca/mean [S], pca/components [k x S], pca/n_samples [1].
inline ParamStore to_params(const PcaBasis& b) {
  ParamStore p;
  p.set("pca/mean", Tensor(Shape{b.bands()}, b.mean));
  std::vector<double> flat;
  for (const auto& r : b.rows) flat.insert(flat.end(), r.begin(), r.end());
  p.set("pca/components", Tensor(Shape{b.rank(), b.bands()}, std::move(flat)));
  p.set("pca/n_samples", Tensor::scalar(static_cast<double>(b.n_samples)));
  return p;
}

inline PcaBasis pca_from_params(const ParamStore& p) {
  const Tensor& mean = p.get("pca/mean");
  const Tensor& comp = p.get("pca/components");
  require<ShapeError>(mean.rank() == 1 && comp.rank() == 2 && comp.extent(1) == mean.extent(0),
                      "pca basis: components ", shape_str(comp.shape()), " do not match mean ", shape_str(mean.shape()));
  PcaBasis b;
  b.mean = mean.vec();
  for (std::size_t i = 0; i < comp.extent(0); ++i)
    b.rows.emplace_back(comp.vec().begin() + static_cast<long>(i * comp.extent(1)),
                        comp.vec().begin() + static_cast<long>((i + 1) * comp.extent(1)));
  b.n_samples = p.contains("pca/n_samples") ? static_cast<std::size_t>(p.get("pca/n_samples")[0]) : 0;
  return b;
}

// --- iterative back-projection -------------------------------------------------

struct IbpResult {
  HsiCube refined;
  std::vector<double> lr_residual;  // ||lr - D(sr_t)||_2 for t = 0..T
};

/// T steps of sr <- sr + eta * U(lr - D(sr)), per band, with D/U the training
/// bicubic down/up operators. Clamped to [0, 1] after the last step only.
inline IbpResult ibp_refine_traced(const HsiCube& sr, const HsiCube& lr, std::size_t factor, std::size_t T = 10,
                                   double eta = 1.0) {
  require<ShapeError>(sr.height() == lr.height() * factor && sr.width() == lr.width() * factor &&
                          sr.bands() == lr.bands(),
                      "ibp: SR cube ", shape_str(sr.data.shape()), " is not ", factor, "x LR cube ",
                      shape_str(lr.data.shape()));
  const auto down = SpatialResampler::downsample(sr.height(), sr.width(), factor, ResampleKernel::bicubic_a_half);
  const auto up = SpatialResampler::upsample(lr.height(), lr.width(), factor, ResampleKernel::bicubic_a_half);
  auto residual = [&](const Tensor& x) {
    Tensor r = down.apply(x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = lr.data[i] - r[i];
    return r;
  };
  auto norm = [](const Tensor& r) {
    double s = 0.0;
    for (double v : r.data()) s += v * v;
    return std::sqrt(s);
  };
  IbpResult out{sr, {}};
  Tensor& x = out.refined.data;
  Tensor r = residual(x);
  out.lr_residual.push_back(norm(r));
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor corr = up.apply(r);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += eta * corr[i];
    r = residual(x);
    out.lr_residual.push_back(norm(r));
  }
  out.refined = clamp01(std::move(out.refined));
  return out;
}

inline HsiCube ibp_refine(const HsiCube& sr, const HsiCube& lr, std::size_t factor, std::size_t T = 10,
                          double eta = 1.0) {
  return ibp_refine_traced(sr, lr, factor, T, eta).refined;
}

}  // namespace hsr::classical
