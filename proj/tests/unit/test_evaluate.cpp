#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "lano/checkpoint.hpp"
#include "lano/error.hpp"
#include "lano/evaluate.hpp"
#include "lano/interp.hpp"
#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/pdegen.hpp"
#include "lano/rng.hpp"
#include "lano/verify.hpp"

using namespace lano;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.layers = 2;
  c.channels = 8;
  c.heads = 2;
  c.latent_tokens = 4;
  c.history = 2;
  c.physical_channels = 2;
  return c;
}

std::vector<Trajectory> test_split(std::size_t n) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(solve_diffusion_reaction(GridGeometry::square(16), 40 + i, 4));
  return out;
}

std::vector<float> field(std::size_t h, std::size_t w, float (*f)(float, float)) {
  std::vector<float> v(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = f(static_cast<float>(x), static_cast<float>(y));
  }
  return v;
}

}  // namespace

TEST(Interp, FullMaskIsIdentity) {
  const auto f = field(8, 8, [](float x, float y) { return x * y - 3.0f; });
  EXPECT_EQ(interp_fill(f, 1, ObservationMask::full(8, 8)), f);
}

TEST(Interp, ConstantFieldFilledWithConstant) {
  const std::vector<float> f(12 * 12, 2.5f);
  const auto m = gen_patchwise_mask(12, 12, 0.6, 3, 1);
  for (float v : interp_fill(f, 1, m)) EXPECT_FLOAT_EQ(v, 2.5f);
}

TEST(Interp, LinearFieldRecoveredWithObservedBorder) {
  const std::size_t n = 16;
  const auto f = field(n, n, [](float x, float y) { return 0.3f * x - 0.7f * y + 1.25f; });
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto m = gen_pointwise_mask(n, n, 0.5, seed);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        if (y < 4 || x < 4 || y >= n - 4 || x >= n - 4) m.bits[y * n + x] = 1;  // 4-wide observed frame
      }
    }
    const auto out = interp_fill(f, 1, m);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out[i], f[i], 1e-4) << "seed " << seed << " cell " << i;
  }
}

TEST(Interp, TooFewObservedRejected) {
  auto m = ObservationMask::full(4, 4);
  std::fill(m.bits.begin(), m.bits.end(), 0);
  m.bits[0] = m.bits[5] = m.bits[10] = 1;
  EXPECT_THROW(interp_fill(std::vector<float>(16, 1.0f), 1, m), ValueError);
}

TEST(Evaluate, RowsDeterminismAndNonNegative) {
  const auto c = tiny_model();
  const auto p = init_params<float>(c, 3, InitOptions{true});
  const auto test = test_split(3);
  EvalOptions o;
  o.patterns = {MaskPattern::pointwise, MaskPattern::patchwise};
  o.test_rates = {0.05, 0.25, 0.5};
  o.patch_size = 4;
  o.seed = 9;
  const auto a = evaluate(p, c, test, o);
  const auto b = evaluate(p, c, test, o);
  ASSERT_EQ(a.rows.size(), 6u);
  EXPECT_EQ(a.fingerprint, b.fingerprint);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].mean_rel_l2, b.rows[i].mean_rel_l2);
    EXPECT_GE(a.rows[i].mean_rel_l2, 0.0);
    EXPECT_GE(a.rows[i].std_rel_l2, 0.0);
    EXPECT_GT(a.rows[i].samples, 0u);
  }
  o.seed = 10;
  EXPECT_NE(evaluate(p, c, test, o).rows[2].mean_rel_l2, a.rows[2].mean_rel_l2);
}

TEST(Evaluate, FullObservationNoWorseThanMaskedInMedian) {
  // Trend statistic over 20 masks: rate 0 is the same for every mask, the
  // median masked error is compared against it.
  const auto c = tiny_model();
  const auto p = init_params<float>(c, 3);
  const auto test = test_split(1);
  EvalOptions o;
  o.patterns = {MaskPattern::patchwise};
  o.test_rates = {0.0};
  o.patch_size = 4;
  const double clean = evaluate(p, c, test, o).rows[0].mean_rel_l2;
  std::vector<double> masked;
  for (std::uint64_t s = 0; s < 20; ++s) {
    o.seed = s;
    o.test_rates = {0.5};
    masked.push_back(evaluate(p, c, test, o).rows[0].mean_rel_l2);
  }
  std::nth_element(masked.begin(), masked.begin() + 10, masked.end());
  EXPECT_LE(clean, masked[10]);
}

TEST(Evaluate, CsvHasOneLinePerRow) {
  const auto c = tiny_model();
  const auto p = init_params<float>(c, 3);
  EvalOptions o;
  o.test_rates = {0.25, 0.5};
  const auto r = evaluate(p, c, test_split(2), o);
  const auto path = fs::temp_directory_path() / "lano-unit-eval.csv";
  r.write_csv(path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 1 + r.rows.size());
  fs::remove(path);
}

TEST(Evaluate, Errors) {
  const auto c = tiny_model();
  const auto p = init_params<float>(c, 3);
  EXPECT_THROW(evaluate(p, c, {}, EvalOptions{}), ValueError);
  EvalOptions o;
  o.test_rates = {};
  EXPECT_THROW(evaluate(p, c, test_split(1), o), ValueError);
}

TEST(Ablate, UnknownAxisAndValuesRejected) {
  ExperimentData d{test_split(2), test_split(1), test_split(1)};
  AblationOptions o;
  o.model = tiny_model();
  o.axis = "depth";
  EXPECT_THROW(ablate(d, o), ValueError);
  o.axis = "wo";
  o.values = {"XX"};
  EXPECT_THROW(ablate(d, o), ValueError);
}

TEST(Ablate, MixerAxisReportsBothMixers) {
  ExperimentData d{test_split(2), test_split(1), test_split(1)};
  AblationOptions o;
  o.model = tiny_model();
  o.train.epochs = 1;
  o.train.mask = MaskSpec{MaskPattern::pointwise, 0.25, 1};
  o.eval.patterns = {MaskPattern::pointwise};
  o.axis = "mixer";
  const auto r = ablate(d, o);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].label, "mixer=attention");
  EXPECT_EQ(r.rows[1].label, "mixer=mlp");
}

TEST(BenchMatrix, SixCellsPerPattern) {
  ExperimentData d{test_split(2), test_split(1), test_split(1)};
  BenchMatrixOptions o;
  o.model = tiny_model();
  o.model.layers = 1;
  o.train.epochs = 1;
  o.train.record_wall_time = false;
  const auto r = bench_matrix(d, o);
  ASSERT_EQ(r.rows.size(), 12u);
  const double expect[6][2] = {{0.05, 0.05}, {0.05, 0.25}, {0.25, 0.25}, {0.25, 0.50}, {0.50, 0.50}, {0.50, 0.75}};
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t i = 0; i < 6; ++i) {
      const auto& row = r.rows[p * 6 + i];
      EXPECT_DOUBLE_EQ(row.train_rate, expect[i][0]);
      EXPECT_DOUBLE_EQ(row.test_rate, expect[i][1]);
      EXPECT_EQ(row.pattern, p == 0 ? MaskPattern::pointwise : MaskPattern::patchwise);
    }
  }
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const auto dir = fs::temp_directory_path() / "lano-unit-ckpt";
  fs::create_directories(dir);
  auto c = tiny_model();
  c.variant = DecodeVariant::recalc;
  const auto p = init_params<float>(c, 5, InitOptions{true});
  save_checkpoint(dir / "a.pobw", c, p);
  const auto ck = load_checkpoint(dir / "a.pobw");
  EXPECT_EQ(ck.config.to_keyvalue().to_text(), c.to_keyvalue().to_text());
  auto a = const_cast<ModelParams<float>&>(p).named();
  auto b = const_cast<ModelParams<float>&>(ck.params).named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(std::equal(a[i].second->values().begin(), a[i].second->values().end(), b[i].second->values().begin()));
  }
  std::ifstream in(dir / "a.pobw", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  std::ofstream(dir / "b.pobw", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_checkpoint(dir / "b.pobw"), FormatError);
  std::ofstream(dir / "c.pobw", std::ios::binary) << bytes << "x";
  EXPECT_THROW(load_checkpoint(dir / "c.pobw"), FormatError);
  fs::remove_all(dir);
}

TEST(Roundtrips, AllFormatsByteExact) {
  EXPECT_TRUE(check_roundtrips(VerifyOptions{}).passed);
}
