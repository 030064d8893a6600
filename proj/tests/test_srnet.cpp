#include <gtest/gtest.h>

#include <cmath>

#include "hsr/srnet.hpp"
#include "oracles.hpp"

using namespace hsr;
using namespace hsr::srnet;

namespace {

// Zero-padded "same" convolution via the independent oracle.
Tensor oconv(const Tensor& x, const ParamStore& p, const std::string& name, std::size_t dil = 1,
             std::size_t groups = 1) {
  const Tensor& k = p.get(name + "/weight");
  const std::size_t K = k.extent(0);
  return oracle::conv2d(x, k, &p.get(name + "/bias"), 1, dil * (K - 1) / 2, false, dil, groups);
}

Tensor map(Tensor t, double (*f)(double)) {
  for (double& v : t.data()) v = f(v);
  return t;
}

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }
double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor plus(Tensor a, const Tensor& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Tensor concat(const std::vector<Tensor>& parts) {
  const std::size_t H = parts[0].extent(0), W = parts[0].extent(1);
  std::size_t C = 0;
  for (const auto& t : parts) C += t.extent(2);
  Tensor out(Shape{H, W, C});
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      std::size_t c0 = 0;
      for (const auto& t : parts) {
        for (std::size_t c = 0; c < t.extent(2); ++c) out.at(i, j, c0 + c) = t.at(i, j, c);
        c0 += t.extent(2);
      }
    }
  return out;
}

ParamStore random_params(const SrNetConfig& cfg, const std::string& seed, double amp = 0.5) {
  ParamStore p = init_params(cfg, seed);
  for (auto& [name, t] : p) {
    Rng rng(seed + "#" + name);
    for (double& v : t.data()) v = rng.uniform(-amp, amp);
  }
  return p;
}

// Sets stem weights so that the mixer passes only the identity branch.
void identity_stem(ParamStore& p, const std::string& prefix, std::size_t c) {
  Tensor mix(Shape{1, 1, 4 * c, c});
  for (std::size_t i = 0; i < c; ++i) mix[i * c + i] = 1.0;  // kernel index (0,0,i,i)
  p.set(prefix + "/stem/mix/weight", mix);
  p.set(prefix + "/stem/mix/bias", Tensor(Shape{c}));
}

// Forces every attention view to saturate at 1 (open) or 0 (closed).
void saturate_gate(ParamStore& p, const std::string& prefix, std::size_t c, double bias) {
  for (const char* v : kViews) {
    p.set(prefix + "/tsa/" + v + "/fc2/weight", Tensor(Shape{1, 1, c, c}));
    p.set(prefix + "/tsa/" + v + "/fc2/bias", Tensor(Shape{c}, bias));
  }
}

}  // namespace

// --- grouping and shuffle -------------------------------------------------------

TEST(Grouping, PartitionsAndPads) {
  for (auto [S, pad, width] : {std::tuple<std::size_t, std::size_t, std::size_t>{32, 0, 8}, {31, 1, 8}, {6, 2, 2}}) {
    ad::Tape tape;
    const Tensor x = oracle::random_tensor({3, 2, S}, "g" + std::to_string(S));
    const Grouped g = spectral_group(tape.constant(x), 4);
    EXPECT_EQ(g.pad, pad);
    ASSERT_EQ(g.groups.size(), 4u);
    for (const Var& part : g.groups) EXPECT_EQ(part.value().channels(), width);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t s = 0; s < 4 * width; ++s)
          EXPECT_EQ(g.groups[s / width].value().at(i, j, s % width), x.at(i, j, std::min(s, S - 1)));
  }
}

TEST(Grouping, WidthBelowTwoRejected) {
  SrNetConfig cfg;
  cfg.bands = 4;
  cfg.groups = 4;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.bands = 5;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Shuffle, KnownPermutation) {
  EXPECT_EQ(adjacent_shuffle_perm(8, 4), (std::vector<std::size_t>{0, 2, 1, 4, 3, 6, 5, 7}));
  EXPECT_EQ(adjacent_shuffle_perm(6, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_THROW(adjacent_shuffle_perm(9, 4), ShapeError);
}

TEST(Shuffle, InvolutionOnTensors) {
  ad::Tape tape;
  const Tensor x = oracle::random_tensor({2, 2, 12}, "inv");
  for (std::size_t g : {1, 2, 3, 4, 6}) {
    const Var y = adjacent_shuffle(adjacent_shuffle(tape.constant(x), g), g);
    EXPECT_EQ(y.value(), x);
  }
}

// --- stem ------------------------------------------------------------------------

TEST(Stem, ZeroWeightsGiveZero) {
  SrNetConfig cfg{4, 1, 1, 2, true, 8};
  ParamStore p = init_params(cfg, "z");
  for (auto& [n, t] : p) t.fill(0.0);
  ad::Tape tape;
  const Var y = conv_stem(tape.constant(oracle::random_tensor({3, 3, 2}, "x")), Bound(tape, p, false), "block0/group0");
  EXPECT_EQ(y.value(), Tensor(Shape{3, 3, 2}));
}

TEST(Stem, IdentityRouting) {
  SrNetConfig cfg{4, 1, 1, 2, true, 8};
  ParamStore p = init_params(cfg, "r");
  identity_stem(p, "block0/group0", 2);
  ad::Tape tape;
  const Tensor x = oracle::random_tensor({4, 3, 2}, "x");
  EXPECT_EQ(conv_stem(tape.constant(x), Bound(tape, p, false), "block0/group0").value(), x);
}

TEST(Stem, FourBranchOracle) {
  SrNetConfig cfg{4, 1, 1, 2, true, 8};
  const ParamStore p = random_params(cfg, "stem");
  const std::string pre = "block0/group0";
  const Tensor x = oracle::random_tensor({3, 3, 2}, "x");
  ad::Tape tape;
  const Tensor got = conv_stem(tape.constant(x), Bound(tape, p, false), pre).value();
  const Tensor cat = concat({x, oconv(x, p, pre + "/stem/conv3"), oconv(x, p, pre + "/stem/dw5", 1, 2),
                             oconv(x, p, pre + "/stem/dil3", 2)});
  EXPECT_LE(max_abs_diff(got, oconv(cat, p, pre + "/stem/mix")), 1e-12);
}

// --- trilateral attention ----------------------------------------------------------

TEST(Tsa, UnitAndClosedGates) {
  SrNetConfig cfg{4, 1, 1, 2, true, 8};
  const std::string pre = "block0/group0";
  const Tensor x = oracle::random_tensor({3, 4, 2}, "x");
  ParamStore open = random_params(cfg, "tsa");
  saturate_gate(open, pre, 2, 60.0);
  open.set(pre + "/tsa/fuse", Tensor(Shape{3}, 1.0 / 3.0));
  ad::Tape tape;
  EXPECT_LE(max_abs_diff(tsa_forward(tape.constant(x), Bound(tape, open, false), pre).value(), x), 1e-15);
  ParamStore closed = open;
  saturate_gate(closed, pre, 2, -800.0);
  EXPECT_EQ(tsa_forward(tape.constant(x), Bound(tape, closed, false), pre).value(), Tensor(Shape{3, 4, 2}));
}

TEST(Tsa, StraightLineOracle) {
  SrNetConfig cfg{4, 1, 1, 2, true, 8};
  const ParamStore p = random_params(cfg, "tsa-line");
  const std::string pre = "block0/group0";
  const Tensor x = oracle::random_tensor({2, 3, 2}, "x");
  ad::Tape tape;
  const Tensor got = tsa_forward(tape.constant(x), Bound(tape, p, false), pre).value();
  // pooled views by explicit loops
  Tensor ph(Shape{2, 1, 2}), pw(Shape{1, 3, 2}), ps(Shape{1, 1, 2});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 2; ++c) {
        ph.at(i, 0, c) += x.at(i, j, c) / 3.0;
        pw.at(0, j, c) += x.at(i, j, c) / 2.0;
        ps.at(0, 0, c) += x.at(i, j, c) / 6.0;
      }
  const Tensor* views[3] = {&ph, &pw, &ps};
  Tensor A[3];
  for (std::size_t v = 0; v < 3; ++v) {
    const std::string base = pre + "/tsa/" + kViews[v];
    A[v] = map(oconv(map(oconv(*views[v], p, base + "/fc1"), gelu_ref), p, base + "/fc2"), sigmoid_ref);
  }
  const Tensor& fuse = p.get(pre + "/tsa/fuse");
  Tensor expect(x.shape());
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 2; ++c)
        expect.at(i, j, c) =
            x.at(i, j, c) * (fuse[0] * A[0].at(i, 0, c) + fuse[1] * A[1].at(0, j, c) + fuse[2] * A[2].at(0, 0, c));
  EXPECT_LE(max_abs_diff(got, expect), 1e-12);
}

// --- H-S3A block -------------------------------------------------------------------

TEST(Hs3a, IdentityCompositionWithOneGroup) {
  SrNetConfig cfg{1, 1, 1, 2, true, 4};
  ParamStore p = random_params(cfg, "h1");
  identity_stem(p, "block0/group0", 4);
  saturate_gate(p, "block0/group0", 4, 60.0);
  p.set("block0/group0/tsa/fuse", Tensor(Shape{3}, 1.0 / 3.0));
  ad::Tape tape;
  const Tensor x = oracle::random_tensor({3, 3, 4}, "x");
  EXPECT_LE(max_abs_diff(hs3a_forward(tape.constant(x), Bound(tape, p, false), cfg, 0).value(), x), 1e-15);
}

TEST(Hs3a, CompositionalEquivalence) {
  SrNetConfig cfg{4, 1, 1, 2, true, 8};
  const ParamStore p = random_params(cfg, "hc");
  const Tensor x = oracle::random_tensor({4, 4, 8}, "x");
  ad::Tape tape;
  const Bound b(tape, p, false);
  const Tensor got = hs3a_forward(tape.constant(x), b, cfg, 0).value();
  std::vector<Tensor> outs;
  const Grouped g = spectral_group(tape.constant(x), 4);
  for (std::size_t i = 0; i < 4; ++i)
    outs.push_back(tsa_forward(conv_stem(g.groups[i], b, block_prefix(0, i)), b, block_prefix(0, i)).value());
  EXPECT_EQ(got, ops::permute_channels(concat(outs), adjacent_shuffle_perm(8, 4)));
}

// --- manifold rectification ------------------------------------------------------

TEST(Mcr, ZeroInitGivesZero) {
  SrNetConfig cfg{4, 1, 2, 3, true, 8};
  const ParamStore p = init_params(cfg, "m");
  ad::Tape tape;
  const Var y = mcr_forward(tape.constant(oracle::random_tensor({3, 3, 8}, "x")), Bound(tape, p, false), 2, 3);
  EXPECT_EQ(y.value(), Tensor(Shape{3, 3, 8}));
}

TEST(Mcr, StraightLineOracle) {
  for (std::size_t N : {0, 1, 3}) {
    SrNetConfig cfg{4, 1, N, 2, true, 8};
    const ParamStore p = random_params(cfg, "mcr");
    const Tensor x = oracle::random_tensor({3, 3, 8}, "x");
    ad::Tape tape;
    const Tensor got = mcr_forward(tape.constant(x), Bound(tape, p, false), N, 2).value();
    auto back = [&](const Tensor& m) {
      return oconv(plus(map(oconv(m, p, "mcr/back/conv3"), gelu_ref), m), p, "mcr/back/proj");
    };
    Tensor m = map(oconv(x, p, "mcr/manifold"), gelu_ref);
    Tensor expect = back(m);
    for (std::size_t i = 1; i <= N; ++i) {
      m = map(oconv(m, p, "mcr/refine"), gelu_ref);
      expect = plus(expect, back(m));
    }
    EXPECT_LE(max_abs_diff(got, expect), 1e-12) << "N=" << N;
  }
  ad::Tape tape;
  SrNetConfig cfg{4, 1, 1, 2, true, 8};
  EXPECT_THROW(mcr_forward(tape.constant(Tensor(Shape{2, 2, 1})), Bound(tape, init_params(cfg, "e"), false), 1, 2),
               ShapeError);
}

// --- full network ------------------------------------------------------------------

TEST(SrNet, IdentityAtInitIsBitwise) {
  const SrNetConfig cfg;
  const ParamStore p = init_params(cfg, "init");
  for (int t = 0; t < 3; ++t) {
    const HsiCube x = oracle::random_cube(6, 5, 31, "id" + std::to_string(t));
    const HsiCube y = srnet_forward(x, p, cfg);
    EXPECT_EQ(y.data, x.data);
    EXPECT_EQ(y.id, x.id);
  }
}

TEST(SrNet, CompositionalEquivalence) {
  SrNetConfig cfg{4, 2, 1, 4, true, 31};
  const ParamStore p = random_params(cfg, "full", 0.2);
  const HsiCube x = oracle::random_cube(8, 8, 31, "x");
  const HsiCube got = srnet_forward(x, p, cfg);
  ad::Tape tape;
  const Bound b(tape, p, false);
  Var f = ad::concat_channels(spectral_group(tape.constant(x.data), 4).groups);
  for (std::size_t k = 0; k < 2; ++k) f = hs3a_forward(f, b, cfg, k);
  const Tensor adj = oconv(f.value(), p, "adjust");
  const Tensor corr = mcr_forward(tape.constant(adj), b, 1, 4).value();
  Tensor expect(x.data.shape());
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t s = 0; s < 31; ++s)
        expect.at(i, j, s) = std::clamp(corr.at(i, j, s) + x.data.at(i, j, s), 0.0, 1.0);
  EXPECT_LE(max_abs_diff(got.data, expect), 1e-12);
}

TEST(SrNet, ShapeContract) {
  SrNetConfig cfg{4, 1, 1, 2, false, 6};
  const ParamStore p = random_params(cfg, "shape");
  const HsiCube y = srnet_forward(oracle::random_cube(5, 7, 6, "x"), p, cfg);
  EXPECT_EQ(y.data.shape(), (Shape{5, 7, 6}));
  for (double v : y.data.data()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  EXPECT_THROW(srnet_forward(oracle::random_cube(5, 7, 7, "x"), p, cfg), ShapeError);
}

TEST(SrNet, InitDeterministicAndSeedSensitive) {
  const SrNetConfig cfg;
  EXPECT_EQ(init_params(cfg, "a"), init_params(cfg, "a"));
  EXPECT_NE(init_params(cfg, "a"), init_params(cfg, "b"));
  for (const auto& [name, t] : init_params(cfg, "a"))
    if (name.find("/bias") != std::string::npos || name.starts_with("mcr/back/proj")) {
      for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
    }
}

TEST(SrNet, ConfigKeyValuesRoundTrip) {
  SrNetConfig cfg{2, 3, 0, 5, false, 12};
  EXPECT_EQ(SrNetConfig::from_key_values(cfg.to_key_values()), cfg);
}

// --- parameter count and FLOPs -----------------------------------------------------

TEST(Count, DefaultConfigPinned) {
  const SrNetConfig cfg;
  EXPECT_EQ(count_params(init_params(cfg, "x")), 35464u);
  EXPECT_EQ(expected_param_count(cfg), 35464u);
}

TEST(Count, SingleProjection) {
  // 1x1 conv 32->8 with bias
  EXPECT_EQ(1u * 1u * 32u * 8u + 8u, 264u);
  SrNetConfig cfg;
  const auto layers = conv_layers(cfg);
  const auto it = std::find_if(layers.begin(), layers.end(), [](const ConvLayer& l) { return l.name == "mcr/manifold"; });
  ASSERT_NE(it, layers.end());
  EXPECT_EQ(it->k * it->k * it->cin * it->cout + it->cout, 264u);
}

TEST(Count, RandomConfigsInvariance) {
  Rng rng("configs");
  for (int t = 0; t < 50; ++t) {
    SrNetConfig cfg;
    cfg.groups = 1 + rng.below(4);
    cfg.bands = 2 * cfg.groups + rng.below(20);
    cfg.blocks = rng.below(3);
    cfg.refine_stages = rng.below(3);
    cfg.rank = 1 + rng.below(cfg.padded_bands());
    ASSERT_NO_THROW(cfg.validate());
    const std::size_t n = expected_param_count(cfg);
    EXPECT_EQ(count_params(init_params(cfg, "s" + std::to_string(t))), n);
    EXPECT_EQ(count_params(init_params(cfg, "other")), n);
    const std::size_t C = cfg.padded_bands();
    EXPECT_EQ(adjacent_shuffle_perm(C, cfg.groups).size(), C);
    const auto perm = adjacent_shuffle_perm(C, cfg.groups);
    for (std::size_t j = 0; j < C; ++j) EXPECT_EQ(perm[perm[j]], j);
    // the network runs on any spatial size with the same parameters
    const ParamStore p = init_params(cfg, "run");
    for (std::size_t hw : {2, 5}) {
      const HsiCube x = oracle::random_cube(hw, hw + 1, cfg.bands, "in");
      EXPECT_EQ(srnet_forward(x, p, cfg).data.shape(), x.data.shape());
    }
  }
}

TEST(Flops, ClosedFormAndScaling) {
  SrNetConfig one{1, 0, 0, 8, true, 32};
  // manifold 32->8, refine absent, back conv3 8->8, proj 8->32, adjust 32->32
  const std::uint64_t per_pixel = 2ULL * (32 * 8 + 9 * 8 * 8 + 8 * 32 + 32 * 32);
  EXPECT_EQ(estimate_flops(one, 128, 128), per_pixel * 128 * 128);
  EXPECT_EQ(2ULL * 32 * 8 * 128 * 128, 8388608ULL);
  const SrNetConfig cfg;
  const double ratio = static_cast<double>(estimate_flops(cfg, 256, 256)) / estimate_flops(cfg, 128, 128);
  EXPECT_NEAR(ratio, 4.0, 0.02);
  EXPECT_GT(estimate_flops(cfg, 1, 1), 0u);
}
