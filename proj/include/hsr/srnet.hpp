#pragma once

// Spectral rectifier network: a stack of grouped spectral-spatial attention blocks
// (grouping, multi-receptive-field stem, trilateral attention, boundary-channel
// shuffle) followed by a low-rank manifold rectification head.
//
// Parameter names:
//   block{b}/group{i}/stem/{conv3,dw5,dil3,mix}/{weight,bias}
//   block{b}/group{i}/tsa/{h,w,s}/{fc1,fc2}/{weight,bias}
//   block{b}/group{i}/tsa/fuse                      [3] = (w_h, w_w, w_s)
//   adjust/{weight,bias}
//   mcr/manifold/{weight,bias}, mcr/refine/{weight,bias} (only when N >= 1),
//   mcr/back/conv3/{weight,bias}, mcr/back/proj/{weight,bias}

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hsr/autodiff.hpp"
#include "hsr/cube.hpp"
#include "hsr/error.hpp"
#include "hsr/io.hpp"
#include "hsr/ops.hpp"
#include "hsr/params.hpp"
#include "hsr/rng.hpp"

namespace hsr::srnet {

using ad::Var;

struct SrNetConfig {
  std::size_t groups = 4;
  std::size_t blocks = 4;
  std::size_t refine_stages = 1;
  std::size_t rank = 8;
  bool global_residual = true;
  std::size_t bands = 31;

  std::size_t padded_bands() const { return groups * ((bands + groups - 1) / groups); }
  std::size_t group_width() const { return padded_bands() / groups; }

  void validate() const {
    require(groups >= 1, "srnet config: groups must be >= 1");
    require(rank >= 1, "srnet config: rank must be >= 1");
    require(bands >= 1, "srnet config: bands must be >= 1");
    require(group_width() >= 2, "srnet config: group width ", group_width(), " below 2 (bands ", bands,
            ", groups ", groups, ")");
    require(rank <= padded_bands(), "srnet config: rank ", rank, " exceeds padded band count ", padded_bands());
  }

  io::KeyValues to_key_values() const {
    return {{"groups", std::to_string(groups)},          {"blocks", std::to_string(blocks)},
            {"refine_stages", std::to_string(refine_stages)}, {"rank", std::to_string(rank)},
            {"global_residual", global_residual ? "1" : "0"}, {"bands", std::to_string(bands)}};
  }

  static SrNetConfig from_key_values(const io::KeyValues& kv) {
    auto num = [&](const char* key) -> std::size_t {
      auto it = kv.find(key);
      require(it != kv.end(), "srnet config: missing key '", key, "'");
      return std::stoul(it->second);
    };
    SrNetConfig c;
    c.groups = num("groups");
    c.blocks = num("blocks");
    c.refine_stages = num("refine_stages");
    c.rank = num("rank");
    c.global_residual = num("global_residual") != 0;
    c.bands = num("bands");
    c.validate();
    return c;
  }

  bool operator==(const SrNetConfig&) const = default;
};

inline std::string block_prefix(std::size_t b, std::size_t g) {
  return "block" + std::to_string(b) + "/group" + std::to_string(g);
}

inline constexpr std::array<const char*, 3> kViews = {"h", "w", "s"};

// --- layer table ---------------------------------------------------------------

/// One convolution of the network, for parameter creation and FLOPs accounting.
struct ConvLayer {
  std::string name;
  std::size_t k, cin, cout, groups;
  bool zero_init = false;
  enum class Extent { full, height_only, width_only, single } extent = Extent::full;
};

inline std::vector<ConvLayer> conv_layers(const SrNetConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.group_width(), C = cfg.padded_bands(), r = cfg.rank;
  std::vector<ConvLayer> L;
  for (std::size_t b = 0; b < cfg.blocks; ++b)
    for (std::size_t g = 0; g < cfg.groups; ++g) {
      const std::string p = block_prefix(b, g);
      L.push_back({p + "/stem/conv3", 3, c, c, 1});
      L.push_back({p + "/stem/dw5", 5, c, c, c});
      L.push_back({p + "/stem/dil3", 3, c, c, 1});
      L.push_back({p + "/stem/mix", 1, 4 * c, c, 1});
      for (std::size_t v = 0; v < 3; ++v) {
        const auto ext = v == 0 ? ConvLayer::Extent::height_only
                                : (v == 1 ? ConvLayer::Extent::width_only : ConvLayer::Extent::single);
        L.push_back({p + "/tsa/" + kViews[v] + "/fc1", 1, c, c, 1, false, ext});
        L.push_back({p + "/tsa/" + kViews[v] + "/fc2", 1, c, c, 1, false, ext});
      }
    }
  L.push_back({"adjust", 1, C, C, 1});
  L.push_back({"mcr/manifold", 1, C, r, 1});
  if (cfg.refine_stages >= 1) L.push_back({"mcr/refine", 1, r, r, 1});
  L.push_back({"mcr/back/conv3", 3, r, r, 1});
  L.push_back({"mcr/back/proj", 1, r, C, 1, true});
  return L;
}

// --- parameters ----------------------------------------------------------------

/// Conv weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero, fusion scalars 1/3,
/// Back-Block projection zero. Each tensor draws from its own stream keyed by (seed, name).
inline ParamStore init_params(const SrNetConfig& cfg, std::string_view seed) {
  ParamStore p;
  for (const ConvLayer& l : conv_layers(cfg)) {
    Tensor w(Shape{l.k, l.k, l.cin / l.groups, l.cout});
    if (!l.zero_init) {
      Rng rng(std::string(seed) + "|" + l.name);
      const double bound = std::sqrt(6.0 / static_cast<double>(l.k * l.k * (l.cin / l.groups)));
      for (double& v : w.data()) v = rng.uniform(-bound, bound);
    }
    p.set(l.name + "/weight", std::move(w));
    p.set(l.name + "/bias", Tensor(Shape{l.cout}));
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b)
    for (std::size_t g = 0; g < cfg.groups; ++g) p.set(block_prefix(b, g) + "/tsa/fuse", Tensor(Shape{3}, 1.0 / 3.0));
  return p;
}

/// Closed-form element count: sum over convs of K^2 * Cin/groups * Cout + Cout, plus 3 fusion scalars per group per block.
inline std::size_t expected_param_count(const SrNetConfig& cfg) {
  std::size_t n = 0;
  for (const ConvLayer& l : conv_layers(cfg)) n += l.k * l.k * (l.cin / l.groups) * l.cout + l.cout;
  return n + 3 * cfg.groups * cfg.blocks;
}

/// Parameters registered on a tape.
class Bound {
 public:
  Bound(ad::Tape& tape, const ParamStore& store, bool trainable) {
    for (const auto& [name, t] : store) vars_.emplace(name, trainable ? tape.leaf(t) : tape.constant(t));
  }

  Var operator()(const std::string& name) const {
    auto it = vars_.find(name);
    require(it != vars_.end(), "parameter '", name, "' not bound");
    return it->second;
  }

  const std::map<std::string, Var>& vars() const noexcept { return vars_; }

 private:
  std::map<std::string, Var> vars_;
};

inline Var conv(Var x, const Bound& p, const std::string& name, const ops::Conv2dOptions& o) {
  return ad::conv2d(x, p(name + "/weight"), p(name + "/bias"), o);
}

// --- forward pieces ------------------------------------------------------------

struct Grouped {
  std::vector<Var> groups;
  std::size_t pad = 0;
};

/// Pads bands by replicating the last one up to a multiple of g, then splits contiguously.
inline Grouped spectral_group(Var x, std::size_t g) {
  require(g >= 1, "spectral_group: groups must be >= 1");
  const std::size_t S = x.value().channels();
  const std::size_t S_pad = g * ((S + g - 1) / g), width = S_pad / g;
  Grouped out;
  out.pad = S_pad - S;
  Var padded = x;
  if (out.pad > 0) {
    std::vector<std::size_t> idx(S_pad);
    for (std::size_t j = 0; j < S_pad; ++j) idx[j] = std::min(j, S - 1);
    padded = ad::gather_channels(x, std::move(idx), "pad_bands");
  }
  for (std::size_t i = 0; i < g; ++i) out.groups.push_back(ad::slice_channels(padded, i * width, width));
  return out;
}

/// identity | 3x3 | 5x5 depthwise | 3x3 dilation 2, concatenated and mixed by a 1x1 conv.
inline Var conv_stem(Var group, const Bound& p, const std::string& prefix) {
  const std::size_t c = group.value().channels();
  const Var a = conv(group, p, prefix + "/stem/conv3", ops::Conv2dOptions::same(3));
  const Var b = conv(group, p, prefix + "/stem/dw5", ops::Conv2dOptions::same(5, 1, c));
  const Var d = conv(group, p, prefix + "/stem/dil3", ops::Conv2dOptions::same(3, 2));
  const Var cat = ad::concat_channels({group, a, b, d});
  return conv(cat, p, prefix + "/stem/mix", ops::Conv2dOptions::same(1));
}

/// Trilateral attention: height-, width- and globally-pooled views, each through
/// 1x1 conv, GeLU, 1x1 conv, sigmoid; gate = w_h A_h + w_w A_w + w_s A_s.
inline Var tsa_forward(Var group, const Bound& p, const std::string& prefix) {
  const Shape full = group.shape();
  constexpr std::array<ops::Keep, 3> keeps = {ops::Keep::height, ops::Keep::width, ops::Keep::none};
  const Var fuse = p(prefix + "/tsa/fuse");
  std::optional<Var> gate;
  for (std::size_t v = 0; v < 3; ++v) {
    const std::string base = prefix + "/tsa/" + kViews[v];
    Var a = ad::avgpool_axes(group, keeps[v]);
    a = ad::gelu(conv(a, p, base + "/fc1", ops::Conv2dOptions::same(1)));
    a = ad::sigmoid(conv(a, p, base + "/fc2", ops::Conv2dOptions::same(1)));
    const Var term = ad::scale_by_element(fuse, v, ad::expand(a, full));
    gate = gate ? ad::add(*gate, term) : term;
  }
  return ad::broadcast_mul(group, *gate);
}

/// Swaps channels (b*C/g - 1, b*C/g) for each group boundary b = 1..g-1.
inline std::vector<std::size_t> adjacent_shuffle_perm(std::size_t C, std::size_t g) {
  require<ShapeError>(g >= 1 && C % g == 0, "adjacent_shuffle: ", C, " channels not divisible by ", g, " groups");
  require<ShapeError>(g == 1 || C / g >= 2, "adjacent_shuffle: group width ", C / g, " below 2");
  std::vector<std::size_t> perm(C);
  for (std::size_t j = 0; j < C; ++j) perm[j] = j;
  for (std::size_t b = 1; b < g; ++b) std::swap(perm[b * (C / g) - 1], perm[b * (C / g)]);
  return perm;
}

inline Var adjacent_shuffle(Var x, std::size_t g) {
  return ad::permute_channels(x, adjacent_shuffle_perm(x.value().channels(), g));
}

/// One grouped attention block on an H x W x S_pad feature.
inline Var hs3a_forward(Var x, const Bound& p, const SrNetConfig& cfg, std::size_t block) {
  require<ShapeError>(x.value().channels() % cfg.groups == 0, "hs3a: ", x.value().channels(),
                      " channels not divisible by ", cfg.groups, " groups");
  const Grouped grouped = spectral_group(x, cfg.groups);
  std::vector<Var> outs;
  for (std::size_t i = 0; i < cfg.groups; ++i) {
    const std::string prefix = block_prefix(block, i);
    outs.push_back(tsa_forward(conv_stem(grouped.groups[i], p, prefix), p, prefix));
  }
  return adjacent_shuffle(ad::concat_channels(outs), cfg.groups);
}

/// Back-Block: proj(GeLU(conv3x3(m)) + m).
inline Var back_block(Var m, const Bound& p) {
  const Var h = ad::gelu(conv(m, p, "mcr/back/conv3", ops::Conv2dOptions::same(3)));
  return conv(ad::add(h, m), p, "mcr/back/proj", ops::Conv2dOptions::same(1));
}

/// m_0 = GeLU(1x1 C->r); m_i = GeLU(1x1 r->r); output = sum_i BackBlock(m_i).
inline Var mcr_forward(Var f, const Bound& p, std::size_t refine_stages, std::size_t rank) {
  require<ShapeError>(rank <= f.value().channels(), "mcr: rank ", rank, " exceeds channel count ",
                      f.value().channels());
  Var m = ad::gelu(conv(f, p, "mcr/manifold", ops::Conv2dOptions::same(1)));
  Var out = back_block(m, p);
  for (std::size_t i = 1; i <= refine_stages; ++i) {
    m = ad::gelu(conv(m, p, "mcr/refine", ops::Conv2dOptions::same(1)));
    out = ad::add(out, back_block(m, p));
  }
  return out;
}

/// Full rectifier on an H x W x S input.
inline Var srnet_forward(Var sr_in, const Bound& p, const SrNetConfig& cfg) {
  cfg.validate();
  const std::size_t S = sr_in.value().channels();
  require<ShapeError>(S == cfg.bands, "srnet: input has ", S, " bands, config expects ", cfg.bands);
  Var x = ad::concat_channels(spectral_group(sr_in, cfg.groups).groups);
  for (std::size_t b = 0; b < cfg.blocks; ++b) x = hs3a_forward(x, p, cfg, b);
  x = conv(x, p, "adjust", ops::Conv2dOptions::same(1));
  Var corr = mcr_forward(x, p, cfg.refine_stages, cfg.rank);
  if (cfg.padded_bands() != S) corr = ad::slice_channels(corr, 0, S);
  const Var out = cfg.global_residual ? ad::add(corr, sr_in) : corr;
  return ad::clamp(out, 0.0, 1.0);
}

inline HsiCube srnet_forward(const HsiCube& sr_in, const ParamStore& params, const SrNetConfig& cfg) {
  ad::Tape tape;
  const Bound p(tape, params, false);
  const Var out = srnet_forward(tape.constant(sr_in.data), p, cfg);
  return HsiCube(out.value(), sr_in.id);
}

// --- complexity ------------------------------------------------------------------

/// 2 * K^2 * (Cin/groups) * Cout * (output pixels) summed over every conv, with the
/// attention paths evaluated at their pooled sizes.
inline std::uint64_t estimate_flops(const SrNetConfig& cfg, std::size_t H, std::size_t W) {
  require(H >= 1 && W >= 1, "estimate_flops: size must be positive");
  std::uint64_t total = 0;
  for (const ConvLayer& l : conv_layers(cfg)) {
    std::uint64_t pixels = 0;
    switch (l.extent) {
      case ConvLayer::Extent::full: pixels = H * W; break;
      case ConvLayer::Extent::height_only: pixels = H; break;
      case ConvLayer::Extent::width_only: pixels = W; break;
      case ConvLayer::Extent::single: pixels = 1; break;
    }
    total += 2ULL * l.k * l.k * (l.cin / l.groups) * l.cout * pixels;
  }
  return total;
}

}  // namespace hsr::srnet
