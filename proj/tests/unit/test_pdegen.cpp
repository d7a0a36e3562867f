#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "lano/error.hpp"
#include "lano/pdegen.hpp"
#include "lano/rng.hpp"
#include "lano/verify.hpp"

using namespace lano;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto d = fs::temp_directory_path() / ("lano-unit-" + tag + "-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Grid, CoordsUniformAndIncreasing) {
  const auto c = GridGeometry{4, 8}.coords();
  ASSERT_EQ(c.size(), 4u * 8u * 2u);
  for (std::size_t x = 1; x < 8; ++x) EXPECT_NEAR(c[x * 2] - c[(x - 1) * 2], 1.0 / 8.0, 1e-15);
  for (std::size_t y = 1; y < 4; ++y) EXPECT_NEAR(c[y * 16 + 1] - c[(y - 1) * 16 + 1], 1.0 / 4.0, 1e-15);
  for (double v : c) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(DiffusionReaction, ZeroFieldWithoutOffsetStaysZero) {
  DiffusionReactionParams p;
  p.k = 0.0;
  DiffusionReactionSolver s(GridGeometry::square(16), p);
  std::vector<double> z(256, 0.0);
  s.set_state(z, z);
  for (int i = 0; i < 50; ++i) s.step();
  for (double v : s.u()) EXPECT_EQ(v, 0.0);
  for (double v : s.v()) EXPECT_EQ(v, 0.0);
}

TEST(DiffusionReaction, ConstantFieldFollowsReactionOde) {
  EXPECT_TRUE(check_dr_reaction_ode(VerifyOptions{}).passed);
}

TEST(DiffusionReaction, DiffusionOnlyConservesMeans) {
  for (std::uint64_t seed : {0u, 5u}) {
    VerifyOptions o;
    o.seed = seed;
    const auto c = check_dr_mean_conservation(o);
    EXPECT_TRUE(c.passed) << c.metric;
  }
}

TEST(DiffusionReaction, Seed0At64IsStable) {
  const auto t = solve_diffusion_reaction(GridGeometry::square(64), 0, 20);
  EXPECT_EQ(t.channels, 2u);
  EXPECT_EQ(t.steps, 20u);
  double energy = 0.0;
  for (std::size_t i = 0; i < t.frames.size(); i += 2) energy += double(t.frames[i]) * t.frames[i];
  EXPECT_TRUE(std::isfinite(energy));
  EXPECT_GT(energy, 0.0);
}

TEST(DiffusionReaction, UnstableStepRejected) {
  DiffusionReactionParams p;
  p.dt = 10.0;
  EXPECT_THROW(DiffusionReactionSolver(GridGeometry::square(64), p), ValueError);
}

TEST(DiffusionReaction, BlowUpReportsStep) {
  DiffusionReactionParams p;
  p.diffusion = false;
  DiffusionReactionSolver s(GridGeometry::square(4), p);
  s.set_state(std::vector<double>(16, -50.0), std::vector<double>(16, 0.0));
  try {
    for (int i = 0; i < 1000; ++i) s.step();
    FAIL() << "expected divergence";
  } catch (const SolverDiverged& e) {
    EXPECT_GE(e.step(), 0);
  }
}

TEST(DiffusionReaction, SameSeedIsBitIdentical) {
  const auto a = solve_diffusion_reaction(GridGeometry::square(16), 3, 4);
  const auto b = solve_diffusion_reaction(GridGeometry::square(16), 3, 4);
  EXPECT_EQ(a.frames, b.frames);
  const auto c = solve_diffusion_reaction(GridGeometry::square(16), 4, 4);
  EXPECT_NE(a.frames, c.frames);
}

TEST(NavierStokes, ZeroStateWithoutForcingStaysZero) {
  NavierStokesParams p;
  p.forcing = false;
  NavierStokesSolver s(16, p);
  s.set_vorticity(std::vector<double>(256, 0.0));
  for (int i = 0; i < 20; ++i) s.step();
  for (double v : s.vorticity()) EXPECT_EQ(v, 0.0);
}

TEST(NavierStokes, SingleModeViscousDecay) {
  const auto c = check_ns_viscous_decay(VerifyOptions{});
  EXPECT_TRUE(c.passed) << c.metric;
}

TEST(NavierStokes, MeanVorticityConserved) {
  const auto c = check_ns_mean_conservation(VerifyOptions{});
  EXPECT_TRUE(c.passed) << c.metric;
}

TEST(NavierStokes, AdvectionIsEnergyNeutral) {
  const auto c = check_ns_energy(VerifyOptions{});
  EXPECT_TRUE(c.passed) << c.metric;
}

TEST(NavierStokes, RejectsBadArguments) {
  NavierStokesParams p;
  p.viscosity = 0.0;
  EXPECT_THROW(solve_navier_stokes(GridGeometry::square(16), 0, 3, p), ValueError);
  EXPECT_THROW(solve_navier_stokes(GridGeometry::square(12), 0, 3), ValueError);
}

TEST(NavierStokes, SameSeedIsBitIdentical) {
  NavierStokesParams p;
  p.substeps = 5;
  const auto a = solve_navier_stokes(GridGeometry::square(16), 2, 3, p);
  const auto b = solve_navier_stokes(GridGeometry::square(16), 2, 3, p);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.channels, 1u);
}

TEST(Ingest, ConstantFieldNormalizesToZero) {
  ChannelStats stats{{2.0}, {1.0}};
  std::vector<std::vector<double>> raw{std::vector<double>(4, 2.0), std::vector<double>(4, 2.0)};
  const auto t = ingest_external(raw, GridGeometry{2, 2}, 1, stats);
  for (float v : t.frames) EXPECT_EQ(v, 0.0f);
}

TEST(Ingest, KnownStatistics) {
  // Two frames, one channel: values 1,3 / 5,7 -> mean 4, population std sqrt(5).
  std::vector<std::vector<double>> raw{{1.0, 3.0}, {5.0, 7.0}};
  Trajectory tr;
  tr.height = 1;
  tr.width = 2;
  tr.channels = 1;
  tr.steps = 2;
  tr.frames = {1, 3, 5, 7};
  const std::vector<Trajectory> ts{tr};
  const auto stats = channel_statistics(ts);
  EXPECT_NEAR(stats.mean[0], 4.0, 1e-12);
  EXPECT_NEAR(stats.stddev[0], std::sqrt(5.0), 1e-12);
  const auto t = ingest_external(raw, GridGeometry{1, 2}, 1, stats);
  EXPECT_NEAR(t.frames[0], -3.0 / std::sqrt(5.0), 1e-6);
  EXPECT_NEAR(t.frames[3], 3.0 / std::sqrt(5.0), 1e-6);
}

TEST(Ingest, RejectsNanAndRaggedFrames) {
  ChannelStats stats{{0.0}, {1.0}};
  std::vector<std::vector<double>> nan{{1.0, std::numeric_limits<double>::quiet_NaN()}};
  EXPECT_THROW(ingest_external(nan, GridGeometry{1, 2}, 1, stats), ValueError);
  std::vector<std::vector<double>> ragged{{1.0, 2.0}, {1.0}};
  EXPECT_THROW(ingest_external(ragged, GridGeometry{1, 2}, 1, stats), ShapeError);
}

TEST(DatasetFile, RoundTripIsExact) {
  const auto dir = temp_dir("ds");
  std::vector<Trajectory> ts{solve_diffusion_reaction(GridGeometry{8, 12}, 1, 3)};
  write_dataset(dir / "a.pobd", ts);
  const auto back = read_dataset(dir / "a.pobd");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].frames, ts[0].frames);
  EXPECT_EQ(back[0].height, 8u);
  EXPECT_EQ(back[0].width, 12u);
  EXPECT_EQ(back[0].seed, 1u);
  fs::remove_all(dir);
}

TEST(DatasetFile, TruncatedAndCorruptFilesRejected) {
  const auto dir = temp_dir("dsbad");
  std::vector<Trajectory> ts{solve_diffusion_reaction(GridGeometry::square(8), 1, 3)};
  write_dataset(dir / "a.pobd", ts);
  std::ifstream in(dir / "a.pobd", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});

  auto write = [&](const std::string& b) { std::ofstream(dir / "b.pobd", std::ios::binary) << b; };
  write(bytes.substr(0, 24));  // header only
  EXPECT_THROW(read_dataset(dir / "b.pobd"), FormatError);
  auto swapped = bytes;
  std::swap(swapped[4], swapped[7]);  // version 1 as big-endian
  write(swapped);
  EXPECT_THROW(read_dataset(dir / "b.pobd"), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  write(magic);
  EXPECT_THROW(read_dataset(dir / "b.pobd"), FormatError);
  fs::remove_all(dir);
}

TEST(Dataset, GenerateWritesDisjointSplits) {
  const auto dir = temp_dir("gen");
  GenerateOptions g;
  g.grid = 8;
  g.train = 4;
  g.steps = 3;
  g.seed = 11;
  const auto m = generate_dataset(dir, g);
  EXPECT_EQ(m.split("train").count, 4u);
  EXPECT_EQ(m.split("val").count, 1u);
  EXPECT_EQ(m.split("test").count, 1u);
  const auto train = load_split(dir / "manifest.txt", "train");
  const auto test = load_split(dir / "manifest.txt", "test");
  for (const auto& a : train) {
    for (const auto& b : test) EXPECT_NE(a.seed, b.seed);
  }
  EXPECT_EQ(train[0].seed, mix_seed(11, 0));
  EXPECT_EQ(test[0].seed, mix_seed(11, 5));
  fs::remove_all(dir);
}
