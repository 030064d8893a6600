#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "hsr/autodiff.hpp"
#include "hsr/cube.hpp"
#include "hsr/degrade.hpp"
#include "hsr/error.hpp"
#include "hsr/io.hpp"
#include "hsr/metrics.hpp"
#include "hsr/params.hpp"
#include "hsr/resample.hpp"
#include "hsr/rng.hpp"
#include "hsr/srnet.hpp"

namespace hsr::train {

using ad::Var;

struct LossWeights {
  double rec = 1.0;
  double deg = 0.2;
};

struct LossTerms {
  Var total, rec, deg;
};

/// lambda_rec * MSE(sr_out, gt) + lambda_deg * MSE(D(sr_out), lr), D the training bicubic downsampler.
inline LossTerms loss_total(Var sr_out, Var gt_hr, Var lr_obs, std::size_t factor, const LossWeights& w) {
  require(w.rec >= 0.0 && w.deg >= 0.0, "loss weights must be non-negative");
  const Shape& hr = sr_out.shape();
  require<ShapeError>(gt_hr.shape() == hr, "loss: ground truth ", shape_str(gt_hr.shape()), " vs output ",
                      shape_str(hr));
  require<ShapeError>(lr_obs.shape() == Shape{hr[0] / factor, hr[1] / factor, hr[2]} && hr[0] % factor == 0 &&
                          hr[1] % factor == 0,
                      "loss: LR observation ", shape_str(lr_obs.shape()), " inconsistent with ", shape_str(hr),
                      " at scale ", factor);
  auto down = std::make_shared<const SpatialResampler>(
      SpatialResampler::downsample(hr[0], hr[1], factor, ResampleKernel::bicubic_a_half));
  const Var rec = ad::mse(sr_out, gt_hr);
  const Var deg = ad::mse(ad::resample(sr_out, down), lr_obs);
  const Var total = ad::add(ad::scale(rec, w.rec), ad::scale(deg, w.deg));
  return {total, rec, deg};
}

// --- optimizer ---------------------------------------------------------------

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, Tensor> m, v;
};

using GradMap = std::map<std::string, Tensor>;

/// Decoupled weight decay (scaled by lr), then the bias-corrected Adam update.
inline void adamw_step(ParamStore& params, const GradMap& grads, OptimizerState& st, double lr, double weight_decay) {
  for (const auto& [name, g] : grads)
    require<ShapeError>(params.contains(name) && params.get(name).shape() == g.shape(), "adamw: gradient '", name,
                        "' does not match a parameter");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    const Tensor zero = git == grads.end() ? Tensor(p.shape()) : Tensor{};
    const Tensor& g = git == grads.end() ? zero : git->second;
    auto [mit, m_new] = st.m.try_emplace(name, p.shape());
    auto [vit, v_new] = st.v.try_emplace(name, p.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= lr * weight_decay * p[i];
      m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
      v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + st.eps);
    }
  }
}

inline double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max = 1e-4, double lr_min = 1e-5) {
  require(step <= total_steps, "cosine_lr: step ", step, " beyond total ", total_steps);
  if (total_steps == 0) return lr_max;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

// --- toy data ----------------------------------------------------------------

struct Sample {
  HsiCube gt_hr;
  HsiCube lr_obs;
};

/// Narrowest spectral bump width used by the toy generator for S bands.
inline double toy_min_width(std::size_t S) { return std::max(1.5, static_cast<double>(S) / 8.0); }

/// Upper bound on |x[s+1] - 2 x[s] + x[s-1]| for any toy spectrum.
inline double toy_second_difference_bound(std::size_t S) {
  const double w = toy_min_width(S);
  return 0.75 / (w * w);
}

namespace detail {

struct Material {
  double base = 0.0;
  std::vector<double> amp, center, width;

  double operator()(double s) const {
    double v = base;
    for (std::size_t i = 0; i < amp.size(); ++i) {
      const double d = (s - center[i]) / width[i];
      v += amp[i] * std::exp(-0.5 * d * d);
    }
    return v;
  }
};

inline Material random_material(Rng& rng, std::size_t S) {
  Material m;
  m.base = rng.uniform(0.05, 0.15);
  const std::size_t bumps = 2 + static_cast<std::size_t>(rng.below(3));
  double total = 0.0;
  for (std::size_t i = 0; i < bumps; ++i) {
    m.amp.push_back(rng.uniform(0.1, 1.0));
    total += m.amp.back();
    m.center.push_back(rng.uniform(0.0, static_cast<double>(S - 1)));
    m.width.push_back(rng.uniform(toy_min_width(S), std::max(toy_min_width(S), static_cast<double>(S) / 3.0)));
  }
  const double budget = 0.75 * rng.uniform(0.6, 1.0);
  for (double& a : m.amp) a *= budget / total;
  return m;
}

}  // namespace detail

/// Synthetic HR cubes: smooth spectra (2-4 Gaussian bumps per material) mixed by
/// smooth spatial fields, with two sharp-edged shapes; LR = training bicubic downsample.
inline std::vector<Sample> make_toy_dataset(std::size_t count, std::size_t H, std::size_t W, std::size_t S,
                                            std::size_t factor, std::string_view seed) {
  require(H % factor == 0 && W % factor == 0, "toy dataset: ", H, "x", W, " not divisible by ", factor);
  require(S >= 1, "toy dataset: bands must be >= 1");
  std::vector<Sample> out;
  const auto down = SpatialResampler::downsample(H, W, factor, ResampleKernel::bicubic_a_half);
  for (std::size_t n = 0; n < count; ++n) {
    const std::string id = std::string(seed) + "-" + std::to_string(n);
    Rng rng(id);
    std::array<detail::Material, 4> mats;
    for (auto& m : mats) m = detail::random_material(rng, S);
    std::array<std::vector<double>, 4> spectra;
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t s = 0; s < S; ++s) spectra[k].push_back(mats[k](static_cast<double>(s)));
    const double fx = rng.uniform(0.02, 0.15), fy = rng.uniform(0.02, 0.15), ph = rng.uniform(0.0, 6.28);
    const double gx = rng.uniform(0.02, 0.1), gy = rng.uniform(0.02, 0.1), ph2 = rng.uniform(0.0, 6.28);
    const double cy = rng.uniform(0.2, 0.8) * static_cast<double>(H), cx = rng.uniform(0.2, 0.8) * static_cast<double>(W);
    const double radius = rng.uniform(0.15, 0.3) * static_cast<double>(std::min(H, W));
    const double ry0 = rng.uniform(0.0, 0.5) * static_cast<double>(H), rx0 = rng.uniform(0.0, 0.5) * static_cast<double>(W);
    const double ry1 = ry0 + rng.uniform(0.2, 0.5) * static_cast<double>(H), rx1 = rx0 + rng.uniform(0.2, 0.5) * static_cast<double>(W);
    HsiCube gt(H, W, S, id);
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const double y = static_cast<double>(i), x = static_cast<double>(j);
        const double t = 0.5 + 0.5 * std::sin(fx * x + fy * y + ph);
        const double gain = 0.8 + 0.2 * std::sin(gx * x - gy * y + ph2);
        const bool in_disc = (y - cy) * (y - cy) + (x - cx) * (x - cx) < radius * radius;
        const bool in_rect = y >= ry0 && y < ry1 && x >= rx0 && x < rx1;
        for (std::size_t s = 0; s < S; ++s) {
          double v;
          if (in_disc)
            v = spectra[2][s];
          else if (in_rect)
            v = spectra[3][s];
          else
            v = (1.0 - t) * spectra[0][s] + t * spectra[1][s];
          gt.at(i, j, s) = gain * v;
        }
      }
    HsiCube lr(down.apply(gt.data), id);
    out.push_back({std::move(gt), std::move(lr)});
  }
  return out;
}

/// Parameter-free stand-in backbone: bicubic upsampling, clamped to [0, 1].
inline HsiCube bicubic_backbone(const HsiCube& lr, std::size_t factor) {
  return clamp01(upsample(lr, factor, ResampleKernel::bicubic_a_half));
}

// --- training loop -------------------------------------------------------------

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batch = 3;
  std::size_t scale = 2;
  std::size_t val_count = 4;
  std::size_t log_every = 20;
  double lr_max = 1e-4;
  double lr_min = 1e-5;
  double weight_decay = 1e-4;
  std::string seed = "train";
};

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss_total = 0.0, loss_rec = 0.0, loss_deg = 0.0;
  double val_mpsnr = 0.0, val_msam = 0.0;
};

struct TrainResult {
  ParamStore params;
  std::vector<LogRow> log;
  double baseline_mpsnr = 0.0, baseline_msam = 0.0;  // identity rectifier on the held-out split
  double final_mpsnr = 0.0, final_msam = 0.0;
};

struct StepLoss {
  double total = 0.0, rec = 0.0, deg = 0.0;
};

/// Loss and parameter gradients for one sample, scaled by `weight`.
inline StepLoss accumulate_gradients(const ParamStore& params, const srnet::SrNetConfig& cfg, const Sample& s,
                                     std::size_t factor, const LossWeights& w, double weight, GradMap& grads) {
  ad::Tape tape;
  const srnet::Bound p(tape, params, true);
  const Var sr = tape.constant(bicubic_backbone(s.lr_obs, factor).data);
  const Var out = srnet::srnet_forward(sr, p, cfg);
  const LossTerms L = loss_total(out, tape.constant(s.gt_hr.data), tape.constant(s.lr_obs.data), factor, w);
  const ad::Gradients g = tape.backward(L.total);
  for (const auto& [name, var] : p.vars()) {
    Tensor gi = g.at(var);
    gi *= weight;
    auto [it, inserted] = grads.try_emplace(name, gi);
    if (!inserted) it->second += gi;
  }
  return {L.total.value().item() * weight, L.rec.value().item() * weight, L.deg.value().item() * weight};
}

inline std::pair<double, double> validate(const ParamStore& params, const srnet::SrNetConfig& cfg,
                                          const std::vector<Sample>& val, std::size_t factor, bool identity) {
  if (val.empty()) return {0.0, 0.0};
  double psnr = 0.0, sam = 0.0;
  for (const Sample& s : val) {
    HsiCube sr = bicubic_backbone(s.lr_obs, factor);
    if (!identity) sr = srnet::srnet_forward(sr, params, cfg);
    psnr += metrics::mpsnr(sr, s.gt_hr);
    sam += metrics::msam(sr, s.gt_hr);
  }
  return {psnr / static_cast<double>(val.size()), sam / static_cast<double>(val.size())};
}

/// Trains the rectifier on the first (N - val_count) samples; the rest are held out.
/// Single-threaded with a fixed reduction order, so runs are bitwise reproducible.
inline TrainResult train_loop(const srnet::SrNetConfig& cfg, const std::vector<Sample>& data, const TrainOptions& opt,
                              const LossWeights& w, ParamStore init) {
  require(opt.batch >= 1, "train: batch must be >= 1");
  require(data.size() > opt.val_count, "train: dataset of ", data.size(), " leaves no training samples after ",
          opt.val_count, " held out");
  const std::vector<Sample> train(data.begin(), data.end() - static_cast<long>(opt.val_count));
  const std::vector<Sample> val(data.end() - static_cast<long>(opt.val_count), data.end());
  const std::size_t per_epoch = (train.size() + opt.batch - 1) / opt.batch;
  const std::size_t total_steps = opt.epochs * per_epoch;

  TrainResult res;
  res.params = std::move(init);
  std::tie(res.baseline_mpsnr, res.baseline_msam) = validate(res.params, cfg, val, opt.scale, true);
  OptimizerState state;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(opt.seed + "|epoch" + std::to_string(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      const std::size_t begin = b * opt.batch, end = std::min(order.size(), begin + opt.batch);
      const double weight = 1.0 / static_cast<double>(end - begin);
      GradMap grads;
      StepLoss loss;
      for (std::size_t k = begin; k < end; ++k) {
        const StepLoss l = accumulate_gradients(res.params, cfg, train[order[k]], opt.scale, w, weight, grads);
        loss.total += l.total;
        loss.rec += l.rec;
        loss.deg += l.deg;
      }
      const double lr = cosine_lr(step, total_steps, opt.lr_max, opt.lr_min);
      adamw_step(res.params, grads, state, lr, opt.weight_decay);
      if ((step + 1) % std::max<std::size_t>(1, opt.log_every) == 0 || step + 1 == total_steps) {
        LogRow row{step + 1, lr, loss.total, loss.rec, loss.deg, 0.0, 0.0};
        std::tie(row.val_mpsnr, row.val_msam) = validate(res.params, cfg, val, opt.scale, false);
        res.log.push_back(row);
      }
    }
  }
  std::tie(res.final_mpsnr, res.final_msam) = validate(res.params, cfg, val, opt.scale, false);
  return res;
}

inline constexpr const char* kLogCsvHeader = "step,lr,loss_total,loss_rec,loss_deg,val_mpsnr,val_msam\n";

inline std::string log_to_csv(const std::vector<LogRow>& log) {
  std::string out = kLogCsvHeader;
  for (const LogRow& r : log)
    out += std::to_string(r.step) + "," + io::format_double(r.lr) + "," + io::format_double(r.loss_total) + "," +
           io::format_double(r.loss_rec) + "," + io::format_double(r.loss_deg) + "," + io::format_double(r.val_mpsnr) +
           "," + io::format_double(r.val_msam) + "\n";
  return out;
}

// --- gradient check ----------------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_grad = 0.0;
  std::size_t coords = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
};

/// Tiny instance used by the gradient check: random HR/SR/LR cubes at the given scale.
struct GradCheckProblem {
  srnet::SrNetConfig cfg;
  ParamStore params;
  Tensor sr_in, gt, lr;
  std::size_t factor = 2;
};

inline GradCheckProblem make_grad_check_problem(const srnet::SrNetConfig& cfg, std::string_view seed, std::size_t H = 6,
                                                std::size_t W = 6, std::size_t factor = 2, bool zero_input = false,
                                                bool perturb_back_block = true) {
  GradCheckProblem pr{cfg, srnet::init_params(cfg, seed), Tensor(Shape{H, W, cfg.bands}),
                      Tensor(Shape{H, W, cfg.bands}), Tensor(Shape{H / factor, W / factor, cfg.bands}), factor};
  Rng rng(std::string(seed) + "|data");
  if (!zero_input) {
    for (double& v : pr.gt.data()) v = rng.uniform(0.3, 0.7);
    for (std::size_t i = 0; i < pr.sr_in.size(); ++i) pr.sr_in[i] = pr.gt[i] + rng.uniform(-0.05, 0.05);
    for (double& v : pr.lr.data()) v = rng.uniform(0.3, 0.7);
  }
  if (perturb_back_block)
    for (double& v : pr.params.get("mcr/back/proj/weight").data()) v = rng.uniform(-0.05, 0.05);
  return pr;
}

inline double grad_check_loss(const GradCheckProblem& pr, const ParamStore& params, const LossWeights& w) {
  ad::Tape tape;
  const srnet::Bound p(tape, params, false);
  const Var out = srnet::srnet_forward(tape.constant(pr.sr_in), p, pr.cfg);
  return loss_total(out, tape.constant(pr.gt), tape.constant(pr.lr), pr.factor, w).total.value().item();
}

inline std::map<std::string, Tensor> analytic_gradients(const GradCheckProblem& pr, const LossWeights& w) {
  ad::Tape tape;
  const srnet::Bound p(tape, pr.params, true);
  const Var out = srnet::srnet_forward(tape.constant(pr.sr_in), p, pr.cfg);
  const ad::Gradients g = tape.backward(loss_total(out, tape.constant(pr.gt), tape.constant(pr.lr), pr.factor, w).total);
  std::map<std::string, Tensor> grads;
  for (const auto& [name, var] : p.vars()) grads.emplace(name, g.at(var));
  return grads;
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central differences (step h) on `coords_per_tensor` random coordinates of every parameter tensor.
inline GradCheckReport grad_check(const GradCheckProblem& pr, std::string_view seed, std::size_t coords_per_tensor = 5,
                                  double h = 1e-5, const LossWeights& w = {}) {
  const auto grads = analytic_gradients(pr, w);
  Rng rng(std::string(seed) + "|coords");
  GradCheckReport rep;
  ParamStore probe = pr.params;
  for (const auto& [name, g] : grads) {
    GradCheckEntry e{name, 0.0, 0.0, 0};
    std::vector<std::size_t> idx;
    if (g.size() <= coords_per_tensor) {
      for (std::size_t i = 0; i < g.size(); ++i) idx.push_back(i);
    } else {
      for (std::size_t k = 0; k < coords_per_tensor; ++k) idx.push_back(rng.below(g.size()));
    }
    for (double v : g.data()) e.max_abs_grad = std::max(e.max_abs_grad, std::abs(v));
    for (std::size_t i : idx) {
      Tensor& t = probe.get(name);
      const double orig = t[i];
      t[i] = orig + h;
      const double up = grad_check_loss(pr, probe, w);
      t[i] = orig - h;
      const double dn = grad_check_loss(pr, probe, w);
      t[i] = orig;
      e.max_rel_error = std::max(e.max_rel_error, relative_error(g[i], (up - dn) / (2.0 * h)));
      ++e.coords;
    }
    rep.max_rel_error = std::max(rep.max_rel_error, e.max_rel_error);
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

/// Default tiny configuration: S = 8, g = 4, r = 2, B = 1, N = 1.
inline srnet::SrNetConfig tiny_config() {
  srnet::SrNetConfig c;
  c.bands = 8;
  c.groups = 4;
  c.rank = 2;
  c.blocks = 1;
  c.refine_stages = 1;
  return c;
}

}  // namespace hsr::train
