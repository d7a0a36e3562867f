#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lano/error.hpp"
#include "lano/kernel_oracle.hpp"
#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/ops.hpp"
#include "lano/rng.hpp"
#include "lano/verify.hpp"

using namespace lano;
using Td = Tensor<double>;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.layers = 2;
  c.channels = 8;
  c.heads = 2;
  c.latent_tokens = 3;
  c.history = 2;
  c.physical_channels = 1;
  return c;
}

Td random(Rng& rng, Shape s) {
  Td t(std::move(s));
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

std::vector<double> to_double(const std::vector<std::uint8_t>& bits) { return {bits.begin(), bits.end()}; }

}  // namespace

TEST(ModelConfig, ValidationAndRoundTrip) {
  auto c = small_config();
  c.variant = DecodeVariant::recalc;
  c.token_mixer = TokenMixer::mlp;
  c.boundary_first = false;
  const auto back = ModelConfig::from_keyvalue(c.to_keyvalue());
  EXPECT_EQ(back.to_keyvalue().to_text(), c.to_keyvalue().to_text());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ValueError);
  c = small_config();
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ValueError);
  c = small_config();
  c.latent_tokens = 0;
  EXPECT_THROW(c.validate(), ValueError);
}

TEST(ModelParams, CountIsFunctionOfConfig) {
  const auto c = small_config();
  const auto a = init_params<double>(c, 1);
  const auto b = init_params<double>(c, 2);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  auto d = c;
  d.latent_tokens = 5;
  EXPECT_NE(init_params<double>(d, 1).parameter_count(), a.parameter_count());
  auto copy = a.clone();
  EXPECT_EQ(copy.named().front().first, "embed_w");
  EXPECT_EQ(copy.named().back().first, "out_b");
}

TEST(TemporalAggregate, ZeroFramesDependOnlyOnCoords) {
  auto c = small_config();
  auto p = init_params<double>(c, 3);
  p.embed_b = Td::zeros(p.embed_b.shape());
  const auto coords = grid_coords<double>(3, 3);
  const auto y = temporal_aggregate(coords, Td::zeros({c.history, 9, 1}), p, c);
  ASSERT_EQ(y.shape(), (Shape{9, c.channels}));
  const std::size_t C = c.channels;
  for (std::size_t n = 0; n < 9; ++n) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      const double expect = coords[n * 2] * p.embed_w[ch] + coords[n * 2 + 1] * p.embed_w[C + ch];
      EXPECT_NEAR(y[n * C + ch], expect, 1e-14);
    }
  }
}

TEST(TemporalAggregate, IdentityWeightsConcatenateInputs) {
  ModelConfig c = small_config();
  c.channels = 4;  // = input width 2 + 2*1
  c.heads = 1;
  auto p = init_params<double>(c, 3);
  p.embed_w = Td::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) p.embed_w.values()[i * 4 + i] = 1.0;
  p.embed_b = Td::zeros({4});
  const Td coords({1, 2}, std::vector<double>{0.25, 0.75});
  const Td frames({2, 1, 1}, std::vector<double>{-1.5, 2.5});
  const auto y = temporal_aggregate(coords, frames, p, c);
  EXPECT_EQ(y[0], 0.25);
  EXPECT_EQ(y[1], 0.75);
  EXPECT_EQ(y[2], -1.5);
  EXPECT_EQ(y[3], 2.5);
}

TEST(PhcaEncode, SingleTokenAveragesObserved) {
  auto c = small_config();
  c.latent_tokens = 1;
  const auto p = init_params<double>(c, 4);
  Rng rng(5);
  const std::size_t N = 12, Ch = c.head_channels();
  const auto yh = random(rng, {c.heads, N, Ch});
  std::vector<double> m(N, 1.0);
  m[2] = m[7] = 0.0;
  const auto e = phca_encode(yh, m, p.layers[0], c);
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t ch = 0; ch < Ch; ++ch) {
      double s = 0.0;
      for (std::size_t n = 0; n < N; ++n) s += m[n] * yh[(h * N + n) * Ch + ch];
      EXPECT_NEAR(e.tokens[h * Ch + ch], s / (10.0 + c.epsilon), 1e-12);
    }
    for (std::size_t n = 0; n < N; ++n) EXPECT_EQ(e.slice[h * N + n], m[n]);
  }
}

TEST(PhcaEncode, ConstantFeaturesGiveConstantTokens) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 4);
  const std::size_t N = 16;
  const Td yh({c.heads, N, c.head_channels()}, 0.75);
  const auto e = phca_encode(yh, std::vector<double>(N, 1.0), p.layers[0], c);
  for (double z : e.tokens.values()) EXPECT_NEAR(z, 0.75, 0.75 * c.epsilon * 10);
}

TEST(PhcaEncode, RowsAreDistributionsAndMaskedRowsZero) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 4, InitOptions{true});
  Rng rng(6);
  const std::size_t N = 20, L = c.latent_tokens;
  const auto m = to_double(gen_pointwise_mask(4, 5, 0.4, 2).bits);
  const auto e = phca_encode(random(rng, {c.heads, N, c.head_channels()}), m, p.layers[0], c);
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t n = 0; n < N; ++n) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += e.slice_pre[(h * N + n) * L + l];
      EXPECT_NEAR(s, 1.0, 1e-5);
      if (m[n] == 0.0) {
        for (std::size_t l = 0; l < L; ++l) EXPECT_EQ(e.slice[(h * N + n) * L + l], 0.0);
      }
    }
  }
}

TEST(PhcaEncode, UnobservedPerturbationLeavesTokensUnchanged) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 4, InitOptions{true});
  Rng rng(7);
  const std::size_t N = 16, Ch = c.head_channels();
  const auto m = to_double(gen_patchwise_mask(4, 4, 0.5, 2, 3).bits);
  auto yh = random(rng, {c.heads, N, Ch});
  const auto a = phca_encode(yh, m, p.layers[0], c);
  auto y2 = yh.detach();
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t n = 0; n < N; ++n) {
      if (m[n] == 0.0) {
        for (std::size_t ch = 0; ch < Ch; ++ch) y2.values()[(h * N + n) * Ch + ch] = 1e3 * rng.normal();
      }
    }
  }
  const auto b = phca_encode(y2, m, p.layers[0], c);
  for (std::size_t i = 0; i < a.tokens.numel(); ++i) EXPECT_EQ(a.tokens[i], b.tokens[i]);
}

TEST(PhcaEncode, AllUnobservedThrows) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 4);
  EXPECT_THROW(phca_encode(Td({c.heads, 4, c.head_channels()}), std::vector<double>(4, 0.0), p.layers[0], c),
               ValueError);
}

TEST(PartialConv, FullMaskIsStandardConvolution) {
  auto c = small_config();
  const auto p = init_params<double>(c, 8, InitOptions{true});
  Rng rng(9);
  const std::size_t Hg = 5, Wg = 6, N = Hg * Wg, L = c.latent_tokens;
  const auto s = random(rng, {c.heads, N, L});
  const auto out = pconv_propagate(s, std::vector<double>(N, 1.0), Hg, Wg, p.layers[0], c);
  for (double v : out.mask) EXPECT_EQ(v, 1.0);
  // Interior cell: plain 3x3 correlation plus bias.
  const std::size_t h = 1, l = 2, y = 2, x = 3, ch = h * L + l;
  double expect = p.layers[0].pconv_b[ch];
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const std::size_t n = (y + dy) * Wg + (x + dx);
      expect += p.layers[0].pconv_w[ch * 9 + (dy + 1) * 3 + (dx + 1)] * s[(h * N + n) * L + l];
    }
  }
  EXPECT_NEAR(out.slice[(h * N + y * Wg + x) * L + l], expect, 1e-12);
}

TEST(PartialConv, SingleCellGrowsToNeighbourhood) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 8);
  const std::size_t Hg = 7, Wg = 7, N = 49;
  std::vector<double> m(N, 0.0);
  m[3 * 7 + 3] = 1.0;
  const auto out = pconv_propagate(Td({c.heads, N, c.latent_tokens}, 1.0), m, Hg, Wg, p.layers[0], c);
  for (std::size_t y = 0; y < Hg; ++y) {
    for (std::size_t x = 0; x < Wg; ++x) {
      const bool inside = y >= 2 && y <= 4 && x >= 2 && x <= 4;
      EXPECT_EQ(out.mask[y * Wg + x], inside ? 1.0 : 0.0);
    }
  }
}

TEST(PartialConv, CenterKernelAddsBias) {
  const auto c = small_config();
  auto p = init_params<double>(c, 8);
  auto& layer = p.layers[0];
  const std::size_t C = c.heads * c.latent_tokens;
  layer.pconv_w = Td::zeros({C, 1, 3, 3});
  for (std::size_t ch = 0; ch < C; ++ch) layer.pconv_w.values()[ch * 9 + 4] = 1.0;
  layer.pconv_b = Td({C}, 0.5);
  Rng rng(1);
  const std::size_t N = 16;
  const auto s = random(rng, {c.heads, N, c.latent_tokens});
  const auto out = pconv_propagate(s, std::vector<double>(N, 1.0), 4, 4, layer, c);
  // Interior cells only: zero padding counts as unobserved, so border windows are renormalized.
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t y = 1; y < 3; ++y) {
      for (std::size_t x = 1; x < 3; ++x) {
        for (std::size_t l = 0; l < c.latent_tokens; ++l) {
          const std::size_t i = (h * N + y * 4 + x) * c.latent_tokens + l;
          EXPECT_NEAR(out.slice[i], s[i] + 0.5, 1e-14);
        }
      }
    }
  }
}

TEST(TokenMix, NoneIsIdentity) {
  auto c = small_config();
  c.token_mixer = TokenMixer::none;
  const auto p = init_params<double>(c, 1);
  Rng rng(2);
  const auto z = random(rng, {c.heads, c.latent_tokens, c.head_channels()});
  const auto out = token_mix(z, p.layers[0], c);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_EQ(out[i], z[i]);
}

TEST(TokenMix, SingleTokenAttentionIsValueProjection) {
  auto c = small_config();
  c.latent_tokens = 1;
  const auto p = init_params<double>(c, 1);
  Rng rng(2);
  const auto z = random(rng, {c.heads, 1, c.head_channels()});
  const auto out = token_mix(z, p.layers[0], c);
  const auto expect = matmul(z, p.layers[0].attn_v);
  for (std::size_t i = 0; i < z.numel(); ++i) EXPECT_NEAR(out[i], expect[i], 1e-14);
}

TEST(TokenMix, AttentionIsPermutationEquivariant) {
  auto c = small_config();
  c.latent_tokens = 4;
  const auto p = init_params<double>(c, 1);
  Rng rng(3);
  const std::size_t L = 4, Ch = c.head_channels();
  const auto z = random(rng, {c.heads, L, Ch});
  const std::size_t perm[4] = {2, 0, 3, 1};
  Td zp({c.heads, L, Ch});
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t ch = 0; ch < Ch; ++ch) zp.values()[(h * L + l) * Ch + ch] = z[(h * L + perm[l]) * Ch + ch];
    }
  }
  const auto a = token_mix(z, p.layers[0], c), b = token_mix(zp, p.layers[0], c);
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t ch = 0; ch < Ch; ++ch) {
        EXPECT_NEAR(b[(h * L + l) * Ch + ch], a[(h * L + perm[l]) * Ch + ch], 1e-12);
      }
    }
  }
}

TEST(TokenMix, MlpPreservesShape) {
  auto c = small_config();
  c.token_mixer = TokenMixer::mlp;
  const auto p = init_params<double>(c, 1);
  Rng rng(3);
  const auto z = random(rng, {c.heads, c.latent_tokens, c.head_channels()});
  EXPECT_EQ(token_mix(z, p.layers[0], c).shape(), z.shape());
}

TEST(PhcaDecode, SingleTokenBroadcastsAndHolesDecodeToZero) {
  auto c = small_config();
  c.latent_tokens = 1;
  const auto p = init_params<double>(c, 1, InitOptions{true});
  Rng rng(4);
  const std::size_t N = 6;
  std::vector<double> m{1, 1, 0, 1, 0, 1};
  Td prop({c.heads, N, 1});
  for (std::size_t i = 0; i < prop.numel(); ++i) prop.values()[i] = 0.3 + rng.uniform();
  const auto coords = grid_coords<double>(2, 3);
  const auto w = decode_weights(prop, m, coords, p.layers[0], c);
  for (std::size_t h = 0; h < c.heads; ++h) {
    for (std::size_t n = 0; n < N; ++n) EXPECT_NEAR(w[h * N + n], m[n], 1e-10);
  }
  const auto z = random(rng, {c.heads, 1, c.head_channels()});
  const auto out = phca_decode(z, prop, m, coords, p.layers[0], c);
  for (std::size_t ch = 0; ch < c.channels; ++ch) {
    EXPECT_EQ(out[2 * c.channels + ch], p.layers[0].merge_b[ch]);  // zero row, bias only
  }
}

TEST(PhcaDecode, RecalcWithConstantLogitsIsUniform) {
  auto c = small_config();
  c.variant = DecodeVariant::recalc;
  c.latent_tokens = 4;
  auto p = init_params<double>(c, 1);
  auto& layer = p.layers[0];
  layer.pos_w2 = Td::zeros(layer.pos_w2.shape());
  layer.pos_b2 = Td::zeros(layer.pos_b2.shape());
  const std::size_t N = 9;
  const auto w = decode_weights(Td({c.heads, N, 4}, 0.0), std::vector<double>(N, 1.0), grid_coords<double>(3, 3),
                                layer, c);
  for (double v : w.values()) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(Layer, ZeroMergeIsResidualIdentity) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 1);  // merge is zero at init
  Rng rng(5);
  const std::size_t N = 16;
  const auto y = random(rng, {N, c.channels});
  LayerTrace<double> t;
  const auto m = to_double(gen_patchwise_mask(4, 4, 0.25, 2, 1).bits);
  latent_operator_layer(y, m, grid_coords<double>(4, 4), 4, 4, p.layers[0], c, &t);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(t.residual[i], y[i]);
}

TEST(Layer, MaskGrowsMonotonically) {
  auto c = small_config();
  c.layers = 4;
  const auto p = init_params<double>(c, 1);
  Rng rng(5);
  std::vector<double> frames(c.history * 256);
  for (auto& v : frames) v = rng.normal();
  const auto mask = gen_patchwise_mask(16, 16, 0.6, 4, 2);
  ForwardTrace<double> trace;
  lano_forward(16, 16, frames, mask.bits, p, c, &trace);
  auto count = [](const std::vector<double>& m) { return std::count(m.begin(), m.end(), 1.0); };
  for (const auto& l : trace.layers) {
    EXPECT_GE(count(l.mask_out), count(l.mask_in));
    for (std::size_t i = 0; i < l.mask_in.size(); ++i) {
      if (l.mask_in[i] == 1.0) EXPECT_EQ(l.mask_out[i], 1.0);
    }
  }
}

TEST(Layer, WithoutBoundaryFirstMaskIsFrozen) {
  auto c = small_config();
  c.boundary_first = false;
  const auto p = init_params<double>(c, 1);
  std::vector<double> frames(c.history * 64, 0.5);
  const auto mask = gen_patchwise_mask(8, 8, 0.5, 2, 2);
  ForwardTrace<double> trace;
  lano_forward(8, 8, frames, mask.bits, p, c, &trace);
  for (const auto& l : trace.layers) EXPECT_EQ(l.mask_out, to_double(mask.bits));
}

TEST(Layer, MatchesKernelOracleOnFullMask) {
  auto c = small_config();
  c.layers = 1;
  c.token_mixer = TokenMixer::none;
  const auto p = init_params<double>(c, 11, InitOptions{true});
  Rng rng(12);
  const std::size_t N = 36;
  std::vector<double> y(N * c.channels);
  for (auto& v : y) v = rng.normal();
  const std::vector<double> m(N, 1.0);
  const auto oracle = kernel_oracle(p.layers[0], c, 6, 6, y, m);
  LayerTrace<double> t;
  latent_operator_layer(Td({N, c.channels}, y), m, grid_coords<double>(6, 6), 6, 6, p.layers[0], c, &t);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(oracle.total[i], t.residual[i], 1e-10);
}

TEST(KernelOracle, RandomInstancesAndNegativeControl) {
  VerifyOptions o;
  o.kernel_instances = 30;
  EXPECT_TRUE(check_kernel_oracle(o).passed);
  EXPECT_TRUE(check_kernel_oracle_attention(o).passed);
  o.corrupt_decode_normalization = true;
  EXPECT_FALSE(check_kernel_oracle(o).passed);
}

TEST(KernelOracle, RejectsLargeInstancesAndMlpMixer) {
  auto c = small_config();
  c.token_mixer = TokenMixer::none;
  const auto p = init_params<double>(c, 1);
  const std::size_t N = 17 * 17;
  EXPECT_THROW(kernel_oracle(p.layers[0], c, 17, 17, std::vector<double>(N * c.channels), std::vector<double>(N, 1.0)),
               ValueError);
  c.token_mixer = TokenMixer::mlp;
  const auto q = init_params<double>(c, 1);
  EXPECT_THROW(kernel_oracle(q.layers[0], c, 4, 4, std::vector<double>(16 * c.channels), std::vector<double>(16, 1.0)),
               ValueError);
}

TEST(Forward, ShapeIndependentOfRate) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 1);
  for (double rate : {0.0, 0.3, 0.9}) {
    const auto mask = gen_pointwise_mask(8, 8, rate, 3);
    const auto y = lano_forward(8, 8, std::vector<float>(c.history * 64, 1.0f), mask.bits, p, c);
    EXPECT_EQ(y.shape(), (Shape{64, 1}));
  }
}

TEST(Forward, UnobservedInputValuesAreIgnored) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 1, InitOptions{true});
  Rng rng(8);
  const auto mask = gen_patchwise_mask(8, 8, 0.4, 2, 5);
  std::vector<double> a(c.history * 64);
  for (auto& v : a) v = rng.normal();
  auto b = a;
  for (std::size_t t = 0; t < c.history; ++t) {
    for (std::size_t n = 0; n < 64; ++n) {
      if (!mask.bits[n]) b[t * 64 + n] = 1e4;
    }
  }
  const auto ya = lano_forward(8, 8, a, mask.bits, p, c), yb = lano_forward(8, 8, b, mask.bits, p, c);
  for (std::size_t i = 0; i < ya.numel(); ++i) EXPECT_EQ(ya[i], yb[i]);
}

TEST(Forward, DeepStackCoversQuarterPatchMasks) {
  ModelConfig c;
  c.layers = 8;
  c.channels = 8;
  c.heads = 2;
  c.latent_tokens = 2;
  c.history = 1;
  const auto p = init_params<float>(c, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto mask = gen_patchwise_mask(32, 32, 0.25, 4, seed);
    ForwardTrace<float> trace;
    lano_forward(32, 32, std::vector<float>(1024, 1.0f), mask.bits, p, c, &trace);
    const auto& last = trace.layers.back().mask_out;
    EXPECT_TRUE(std::all_of(last.begin(), last.end(), [](float v) { return v == 1.0f; })) << "seed " << seed;
  }
}

TEST(Forward, DeterministicAndCastConsistent) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 1, InitOptions{true});
  const auto mask = gen_pointwise_mask(6, 6, 0.3, 1);
  std::vector<double> f(c.history * 36, 0.25);
  const auto a = lano_forward(6, 6, f, mask.bits, p, c), b = lano_forward(6, 6, f, mask.bits, p, c);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
  const auto pf = cast_params<float>(p);
  const auto af = lano_forward(6, 6, std::vector<float>(f.begin(), f.end()), mask.bits, pf, c);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(af[i], a[i], 1e-4);
}

TEST(Gradients, FullMptLossMatchesFiniteDifferences) {
  const auto c = check_model_gradients(VerifyOptions{});
  EXPECT_TRUE(c.passed) << c.detail << " metric " << c.metric;
}

TEST(MaskCoverage, PropagationEqualsDilation) {
  VerifyOptions o;
  o.coverage_seeds = 20;
  const auto c = check_mask_coverage(o);
  EXPECT_TRUE(c.passed) << c.detail;
}
