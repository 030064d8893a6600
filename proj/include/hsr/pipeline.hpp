#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hsr/classical.hpp"
#include "hsr/cube.hpp"
#include "hsr/degrade.hpp"
#include "hsr/error.hpp"
#include "hsr/io.hpp"
#include "hsr/metrics.hpp"
#include "hsr/params.hpp"
#include "hsr/srnet.hpp"
#include "hsr/train.hpp"

namespace hsr::pipeline {

enum class Method { none, sg, pca, ibp, srnet };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::sg: return "sg";
    case Method::pca: return "pca";
    case Method::ibp: return "ibp";
    case Method::srnet: return "srnet";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::none, Method::sg, Method::pca, Method::ibp, Method::srnet})
    if (to_string(m) == s) return m;
  fail("unknown rectification method '", s, "' (expected none, sg, pca, ibp or srnet)");
}

struct RectifyOptions {
  Method method = Method::srnet;
  std::size_t scale = 4;
  std::size_t sg_window = 7, sg_order = 3;
  std::optional<classical::PcaBasis> pca;
  std::size_t ibp_iterations = 10;
  double ibp_step = 1.0;
  srnet::SrNetConfig net;
  ParamStore weights;
};

/// Backbone estimate from an LR cube, quantized as if it had gone through a cube file.
inline HsiCube backbone_sr(const HsiCube& lr, std::size_t scale) {
  HsiCube out = f32_roundtrip(train::bicubic_backbone(lr, scale));
  out.id = lr.id;
  return out;
}

inline HsiCube rectify(const HsiCube& sr, const HsiCube& lr, const RectifyOptions& o) {
  require<ShapeError>(sr.height() == lr.height() * o.scale && sr.width() == lr.width() * o.scale &&
                          sr.bands() == lr.bands(),
                      "rectify: SR ", shape_str(sr.data.shape()), " does not match LR ", shape_str(lr.data.shape()),
                      " at scale ", o.scale);
  HsiCube out = [&] {
    switch (o.method) {
      case Method::none: return sr;
      case Method::sg: return classical::sg_smooth(sr, o.sg_window, o.sg_order);
      case Method::pca:
        require(o.pca.has_value(), "rectify: method pca needs a fitted basis");
        return classical::pca_project(sr, *o.pca);
      case Method::ibp: return classical::ibp_refine(sr, lr, o.scale, o.ibp_iterations, o.ibp_step);
      case Method::srnet:
        require(o.net.bands == sr.bands(), "rectify: network expects ", o.net.bands, " bands, cube has ", sr.bands());
        return srnet::srnet_forward(sr, o.weights, o.net);
    }
    fail("rectify: unhandled method");
  }();
  out.id = sr.id;
  return out;
}

// --- robustness harness ------------------------------------------------------

struct RobustnessRow {
  std::string setting;
  std::size_t scale = 0;
  double base_mpsnr = 0.0, base_mssim = 0.0, base_msam = 0.0;
  double ours_mpsnr = 0.0, ours_mssim = 0.0, ours_msam = 0.0;
};

/// One LR observation per (cube, setting): center-crop, degrade, quantize as a file would.
inline HsiCube degrade_for_eval(const HsiCube& hr_cropped, Setting s, std::size_t scale) {
  return f32_roundtrip(apply_setting(hr_cropped, DegradationSpec::make(s, scale)));
}

/// Train reference row plus the nine test-time settings; per-setting metrics are
/// means over cubes of the per-image values, in input order.
inline std::vector<RobustnessRow> robustness(const std::vector<HsiCube>& hr_set, const RectifyOptions& o) {
  require(!hr_set.empty(), "robustness: empty HR set");
  std::vector<RobustnessRow> rows;
  for (Setting s : kAllSettings) {
    RobustnessRow r{std::string(to_string(s)), o.scale};
    for (const HsiCube& hr : hr_set) {
      const HsiCube gt = center_crop(hr, o.scale);
      const HsiCube lr = degrade_for_eval(gt, s, o.scale);
      const HsiCube base = backbone_sr(lr, o.scale);
      const HsiCube ours = f32_roundtrip(rectify(base, lr, o));
      r.base_mpsnr += metrics::mpsnr(base, gt);
      r.base_mssim += metrics::mssim(base, gt);
      r.base_msam += metrics::msam(base, gt);
      r.ours_mpsnr += metrics::mpsnr(ours, gt);
      r.ours_mssim += metrics::mssim(ours, gt);
      r.ours_msam += metrics::msam(ours, gt);
    }
    const double n = static_cast<double>(hr_set.size());
    for (double* v : {&r.base_mpsnr, &r.base_mssim, &r.base_msam, &r.ours_mpsnr, &r.ours_mssim, &r.ours_msam}) *v /= n;
    rows.push_back(r);
  }
  return rows;
}

inline constexpr const char* kRobustnessCsvHeader =
    "scale,setting,base_mpsnr,base_mssim,base_msam,ours_mpsnr,ours_mssim,ours_msam\n";

inline std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
  std::string out = kRobustnessCsvHeader;
  for (const RobustnessRow& r : rows)
    out += std::to_string(r.scale) + "," + r.setting + "," + io::format_double(r.base_mpsnr) + "," +
           io::format_double(r.base_mssim) + "," + io::format_double(r.base_msam) + "," +
           io::format_double(r.ours_mpsnr) + "," + io::format_double(r.ours_mssim) + "," +
           io::format_double(r.ours_msam) + "\n";
  return out;
}

// --- complexity --------------------------------------------------------------

struct ComplexityRow {
  std::size_t scale = 0;
  std::size_t hr = 0;  // square HR side used for the FLOPs estimate
  std::size_t params = 0;
  std::uint64_t flops = 0;
};

/// Parameter count and rectifier FLOPs at HR 128, 128, 256 for scales 2, 4, 8.
inline std::vector<ComplexityRow> complexity(const srnet::SrNetConfig& cfg) {
  std::vector<ComplexityRow> rows;
  const std::size_t params = srnet::expected_param_count(cfg);
  for (auto [scale, side] : {std::pair<std::size_t, std::size_t>{2, 128}, {4, 128}, {8, 256}})
    rows.push_back({scale, side, params, srnet::estimate_flops(cfg, side, side)});
  return rows;
}

}  // namespace hsr::pipeline
