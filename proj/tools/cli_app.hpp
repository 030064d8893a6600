#pragma once

// Command-line front end. Each subcommand writes its resolved options next to its
// primary output as <output>.manifest, and every file is written via temp + rename.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "hsr/classical.hpp"
#include "hsr/degrade.hpp"
#include "hsr/io.hpp"
#include "hsr/metrics.hpp"
#include "hsr/pipeline.hpp"
#include "hsr/srnet.hpp"
#include "hsr/train.hpp"

namespace hsr::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

inline void write_manifest(const CLI::App& sub, const std::string& output) {
  io::write_file_atomic(output + ".manifest", "# hsr " + sub.get_name() + "\n[" + sub.get_name() + "]\n" + sub.config_to_str(true, false));
}

inline void save_network(const srnet::SrNetConfig& cfg, const ParamStore& params, const std::string& path) {
  io::write_params(params, path);
  io::write_file_atomic(path + ".meta", io::encode_key_values(cfg.to_key_values()));
}

inline std::pair<srnet::SrNetConfig, ParamStore> load_network(const std::string& path) {
  const auto cfg = srnet::SrNetConfig::from_key_values(io::parse_key_values(io::read_file(path + ".meta")));
  ParamStore params = io::read_params(path);
  const auto fresh = srnet::init_params(cfg, "layout");
  require<IoError>(params.names() == fresh.names(), "weights '", path, "' do not match the network in ", path, ".meta");
  for (const auto& name : fresh.names())
    require<IoError>(params.get(name).shape() == fresh.get(name).shape(), "weights '", path, "': tensor '", name,
                     "' has shape ", shape_str(params.get(name).shape()), ", expected ",
                     shape_str(fresh.get(name).shape()));
  return {cfg, std::move(params)};
}

inline void add_net_options(CLI::App* sub, srnet::SrNetConfig& cfg) {
  sub->add_option("--bands", cfg.bands, "Spectral bands S")->capture_default_str();
  sub->add_option("--groups", cfg.groups, "Spectral groups g")->capture_default_str();
  sub->add_option("--blocks", cfg.blocks, "H-S3A blocks B")->capture_default_str();
  sub->add_option("--refine", cfg.refine_stages, "MCR refine stages N")->capture_default_str();
  sub->add_option("--rank", cfg.rank, "MCR bottleneck rank r")->capture_default_str();
}

inline std::vector<HsiCube> read_cubes(const std::vector<std::string>& paths) {
  std::vector<HsiCube> out;
  for (const auto& p : paths) out.push_back(io::read_cube(p));
  return out;
}

inline io::PixelCoord parse_pixel(const std::string& s) {
  const auto colon = s.find(':');
  require(colon != std::string::npos, "pixel '", s, "' is not of the form row:col");
  return {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
}

struct Options {
  // shared
  std::string input, output, weights, pca, method = "srnet", setting = "Train", seed = "init", cropped_hr, lr, sr;
  std::size_t scale = 4;
  srnet::SrNetConfig net;
  // import
  std::size_t height = 0, width = 0, bands = 0;
  std::string layout = "bsq";
  // rectify
  std::size_t sg_window = 7, sg_order = 3, ibp_iters = 10;
  double ibp_step = 1.0;
  // eval / robustness / spectra / pca
  std::vector<std::string> est, gt, inputs, cubes, pixels;
  std::vector<std::size_t> rgb_bands = {25, 15, 5};
  std::size_t pca_k = 8, pca_samples = 20000;
  std::string pca_seed = "pca";
  // train
  train::TrainOptions train;
  train::LossWeights loss;
  std::size_t toy_count = 16, toy_lr_size = 32;
  std::string data_seed = "toy", log;
};

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Hyperspectral SR rectification toolkit", "hsr"};
  app.require_subcommand(1);
  Options o;
  o.net.bands = 31;

  auto* imp = app.add_subcommand("import", "Raw float32 cube -> HSC1");
  imp->add_option("--input", o.input, "Raw little-endian float32 file")->required();
  imp->add_option("--output", o.output, "Output cube")->required();
  imp->add_option("--height", o.height)->required();
  imp->add_option("--width", o.width)->required();
  imp->add_option("--bands", o.bands)->required();
  imp->add_option("--layout", o.layout, "bsq or bip")->check(CLI::IsMember({"bsq", "bip"}))->capture_default_str();

  auto* deg = app.add_subcommand("degrade", "HR cube -> LR observation under a test-time setting");
  deg->add_option("--input", o.input, "HR cube")->required();
  deg->add_option("--output", o.output, "LR cube")->required();
  deg->add_option("--scale", o.scale)->check(CLI::IsMember({2, 4, 8}))->capture_default_str();
  deg->add_option("--setting", o.setting, "Train, K1, K2, B1, B2, N1, N2, N3, J1 or J2")->capture_default_str();
  deg->add_option("--cropped-hr", o.cropped_hr, "Also write the center-cropped HR reference");

  auto* rect = app.add_subcommand("rectify", "Rectify an SR estimate (bicubic backbone when --sr is absent)");
  rect->add_option("--lr", o.lr, "LR observation")->required();
  rect->add_option("--sr", o.sr, "Backbone SR estimate");
  rect->add_option("--output", o.output, "Rectified cube")->required();
  rect->add_option("--method", o.method, "none, sg, pca, ibp or srnet")
      ->check(CLI::IsMember({"none", "sg", "pca", "ibp", "srnet"}))
      ->capture_default_str();
  rect->add_option("--scale", o.scale)->check(CLI::IsMember({2, 4, 8}))->capture_default_str();
  rect->add_option("--weights", o.weights, "Network weights (srnet), with a .meta sidecar");
  rect->add_option("--pca", o.pca, "PCA basis written by fit-pca");
  rect->add_option("--sg-window", o.sg_window)->capture_default_str();
  rect->add_option("--sg-order", o.sg_order)->capture_default_str();
  rect->add_option("--ibp-iters", o.ibp_iters)->capture_default_str();
  rect->add_option("--ibp-step", o.ibp_step)->capture_default_str();

  auto* init = app.add_subcommand("init", "Write freshly initialized network weights");
  init->add_option("--output", o.output, "Weights file")->required();
  init->add_option("--seed", o.seed)->capture_default_str();
  add_net_options(init, o.net);

  auto* tr = app.add_subcommand("train", "Train the rectifier on the seeded toy dataset");
  tr->add_option("--output", o.output, "Weights file")->required();
  tr->add_option("--log", o.log, "Training log CSV (default <output>.log.csv)");
  tr->add_option("--count", o.toy_count, "Toy cubes")->capture_default_str();
  tr->add_option("--lr-size", o.toy_lr_size, "LR side length")->capture_default_str();
  tr->add_option("--scale", o.train.scale)->check(CLI::IsMember({2, 4, 8}))->capture_default_str();
  tr->add_option("--data-seed", o.data_seed)->capture_default_str();
  tr->add_option("--seed", o.train.seed, "Shuffle seed")->capture_default_str();
  tr->add_option("--init-seed", o.seed, "Initialization seed")->capture_default_str();
  tr->add_option("--epochs", o.train.epochs)->capture_default_str();
  tr->add_option("--batch", o.train.batch)->capture_default_str();
  tr->add_option("--val", o.train.val_count, "Held-out cubes")->capture_default_str();
  tr->add_option("--log-every", o.train.log_every)->capture_default_str();
  tr->add_option("--lr-max", o.train.lr_max)->capture_default_str();
  tr->add_option("--lr-min", o.train.lr_min)->capture_default_str();
  tr->add_option("--weight-decay", o.train.weight_decay)->capture_default_str();
  tr->add_option("--lambda-rec", o.loss.rec)->capture_default_str();
  tr->add_option("--lambda-deg", o.loss.deg)->capture_default_str();
  add_net_options(tr, o.net);

  auto* ev = app.add_subcommand("eval", "Metrics for (estimate, reference) cube pairs");
  ev->add_option("--est", o.est, "Estimated cubes")->required();
  ev->add_option("--gt", o.gt, "Reference cubes, same order")->required();
  ev->add_option("--output", o.output, "Report CSV")->required();
  ev->add_option("--scale", o.scale, "Recorded in the report")->capture_default_str();
  ev->add_option("--setting", o.setting, "Recorded in the report")->capture_default_str();

  auto* rob = app.add_subcommand("robustness", "Baseline vs rectified metrics over all degradation settings");
  rob->add_option("--hr", o.inputs, "HR cubes")->required();
  rob->add_option("--output", o.output, "Table CSV")->required();
  rob->add_option("--scale", o.scale)->check(CLI::IsMember({2, 4, 8}))->capture_default_str();
  rob->add_option("--method", o.method)
      ->check(CLI::IsMember({"none", "sg", "pca", "ibp", "srnet"}))
      ->capture_default_str();
  rob->add_option("--weights", o.weights, "Network weights (srnet)");
  rob->add_option("--pca", o.pca, "PCA basis");

  auto* em = app.add_subcommand("emit-errormap", "Error map as normalized PGM plus raw float32");
  em->add_option("--est", o.input, "Estimated cube")->required();
  em->add_option("--gt", o.lr, "Reference cube")->required();
  em->add_option("--output", o.output, "Output prefix (.pgm and .f32 are appended)")->required();

  auto* es = app.add_subcommand("emit-spectra", "Per-pixel spectra CSV");
  es->add_option("--cube", o.cubes, "label=path")->required();
  es->add_option("--pixel", o.pixels, "row:col (0-based)")->required();
  es->add_option("--output", o.output, "CSV")->required();

  auto* rgb = app.add_subcommand("emit-rgb", "Pseudo-RGB rendering as binary PPM");
  rgb->add_option("--input", o.input, "Cube")->required();
  rgb->add_option("--output", o.output, "PPM")->required();
  rgb->add_option("--bands", o.rgb_bands, "Three 1-based bands")->expected(3)->capture_default_str();

  auto* cx = app.add_subcommand("complexity", "Parameter count and FLOPs per scale");
  cx->add_option("--output", o.output, "CSV")->required();
  add_net_options(cx, o.net);

  auto* fp = app.add_subcommand("fit-pca", "Fit the PCA rectifier basis");
  fp->add_option("--input", o.inputs, "Cubes")->required();
  fp->add_option("--output", o.output, "Basis file")->required();
  fp->add_option("-k,--rank", o.pca_k)->capture_default_str();
  fp->add_option("--samples", o.pca_samples)->capture_default_str();
  fp->add_option("--seed", o.pca_seed, "Sampling seed")->capture_default_str();

  // a manifest replays through the top-level --config; given flags take precedence
  app.set_config("--config", "", "Options file, e.g. a previous manifest");
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "import") {
      const auto layout = o.layout == "bsq" ? io::RawLayout::bsq : io::RawLayout::bip;
      const auto cube = io::import_raw(io::read_file(o.input), o.height, o.width, o.bands, layout,
                                       fs::path(o.output).stem().string());
      io::write_cube(cube, o.output);
    } else if (name == "degrade") {
      const HsiCube hr = center_crop(io::read_cube(o.input), o.scale);
      io::write_cube(apply_setting(hr, DegradationSpec::make(parse_setting(o.setting), o.scale)), o.output);
      if (!o.cropped_hr.empty()) io::write_cube(hr, o.cropped_hr);
    } else if (name == "rectify") {
      pipeline::RectifyOptions r;
      r.method = pipeline::parse_method(o.method);
      r.scale = o.scale;
      r.sg_window = o.sg_window;
      r.sg_order = o.sg_order;
      r.ibp_iterations = o.ibp_iters;
      r.ibp_step = o.ibp_step;
      if (r.method == pipeline::Method::srnet) {
        require(!o.weights.empty(), "rectify: --method srnet needs --weights");
        std::tie(r.net, r.weights) = load_network(o.weights);
      }
      if (r.method == pipeline::Method::pca) {
        require(!o.pca.empty(), "rectify: --method pca needs --pca");
        r.pca = classical::pca_from_params(io::read_params(o.pca));
      }
      const HsiCube lr = io::read_cube(o.lr);
      const HsiCube sr = o.sr.empty() ? pipeline::backbone_sr(lr, o.scale) : io::read_cube(o.sr);
      io::write_cube(pipeline::rectify(sr, lr, r), o.output);
    } else if (name == "init") {
      o.net.validate();
      save_network(o.net, srnet::init_params(o.net, o.seed), o.output);
    } else if (name == "train") {
      o.net.validate();
      const std::size_t hr = o.toy_lr_size * o.train.scale;
      const auto data = train::make_toy_dataset(o.toy_count, hr, hr, o.net.bands, o.train.scale, o.data_seed);
      const auto res = train::train_loop(o.net, data, o.train, o.loss, srnet::init_params(o.net, o.seed));
      save_network(o.net, res.params, o.output);
      io::write_file_atomic(o.log.empty() ? o.output + ".log.csv" : o.log, train::log_to_csv(res.log));
      std::printf("held-out identity: mpsnr %.6f msam %.6f\nheld-out trained:  mpsnr %.6f msam %.6f\n",
                  res.baseline_mpsnr, res.baseline_msam, res.final_mpsnr, res.final_msam);
    } else if (name == "eval") {
      require(o.est.size() == o.gt.size(), "eval: ", o.est.size(), " estimates but ", o.gt.size(), " references");
      std::string csv = metrics::kReportCsvHeader;
      for (std::size_t i = 0; i < o.est.size(); ++i)
        csv += metrics::to_csv_row(
            metrics::evaluate(io::read_cube(o.est[i]), io::read_cube(o.gt[i]), o.scale, o.setting));
      io::write_file_atomic(o.output, csv);
    } else if (name == "robustness") {
      pipeline::RectifyOptions r;
      r.method = pipeline::parse_method(o.method);
      r.scale = o.scale;
      if (r.method == pipeline::Method::srnet) {
        require(!o.weights.empty(), "robustness: --method srnet needs --weights");
        std::tie(r.net, r.weights) = load_network(o.weights);
      }
      if (r.method == pipeline::Method::pca) {
        require(!o.pca.empty(), "robustness: --method pca needs --pca");
        r.pca = classical::pca_from_params(io::read_params(o.pca));
      }
      io::write_file_atomic(o.output, pipeline::robustness_csv(pipeline::robustness(read_cubes(o.inputs), r)));
    } else if (name == "emit-errormap") {
      const Tensor e = metrics::error_map(io::read_cube(o.input), io::read_cube(o.lr), false);
      io::write_file_atomic(o.output + ".pgm", io::encode_pnm(io::gray_raster(metrics::normalize_map(e))));
      io::write_file_atomic(o.output + ".f32", io::encode_raw_f32(e));
    } else if (name == "emit-spectra") {
      std::vector<HsiCube> cubes;
      std::vector<std::string> labels;
      for (const auto& spec : o.cubes) {
        const auto eq = spec.find('=');
        require(eq != std::string::npos && eq > 0, "emit-spectra: --cube '", spec, "' is not label=path");
        labels.push_back(spec.substr(0, eq));
        cubes.push_back(io::read_cube(spec.substr(eq + 1)));
      }
      std::vector<std::pair<std::string, const HsiCube*>> refs;
      for (std::size_t i = 0; i < cubes.size(); ++i) refs.emplace_back(labels[i], &cubes[i]);
      std::vector<io::PixelCoord> px;
      for (const auto& p : o.pixels) px.push_back(parse_pixel(p));
      io::write_file_atomic(o.output, io::export_spectra_csv(refs, px));
    } else if (name == "emit-rgb") {
      io::write_file_atomic(o.output, io::encode_pnm(io::pseudo_rgb(io::read_cube(o.input),
                                                                   {o.rgb_bands[0], o.rgb_bands[1], o.rgb_bands[2]})));
    } else if (name == "complexity") {
      o.net.validate();
      std::string csv = "scale,hr_size,params,flops,gflops\n";
      for (const auto& row : pipeline::complexity(o.net))
        csv += std::to_string(row.scale) + "," + std::to_string(row.hr) + "," + std::to_string(row.params) + "," +
               std::to_string(row.flops) + "," + io::format_double(static_cast<double>(row.flops) / 1e9, 6) + "\n";
      io::write_file_atomic(o.output, csv);
    } else if (name == "fit-pca") {
      io::write_params(classical::to_params(classical::pca_fit(read_cubes(o.inputs), o.pca_k, o.pca_samples, o.pca_seed)),
                       o.output);
    }
    write_manifest(*sub, o.output);
  } catch (const std::exception& e) {
    std::cerr << "hsr: error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace hsr::cli
