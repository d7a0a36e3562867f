#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "lano/error.hpp"
#include "lano/masking.hpp"

using namespace lano;

namespace {

std::size_t observed(const ObservationMask& m) { return static_cast<std::size_t>(std::count(m.bits.begin(), m.bits.end(), 1)); }

}  // namespace

TEST(PointwiseMask, RateZeroIsFull) {
  const auto m = gen_pointwise_mask(16, 16, 0.0, 3);
  EXPECT_EQ(observed(m), 256u);
  EXPECT_EQ(m.pattern, MaskPattern::pointwise);
}

TEST(PointwiseMask, MeanObservedFraction) {
  double total = 0.0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) total += gen_pointwise_mask(64, 64, 0.25, s).observed_fraction();
  EXPECT_NEAR(total / seeds, 0.75, 0.01);
}

TEST(PointwiseMask, RateOneRejected) {
  EXPECT_THROW(gen_pointwise_mask(8, 8, 1.0, 0), ValueError);
  EXPECT_THROW(gen_pointwise_mask(8, 8, -0.1, 0), ValueError);
}

TEST(PatchwiseMask, CountsAtPatch4) {
  const auto m = gen_patchwise_mask(64, 64, 0.25, 4, 7);
  EXPECT_EQ(64u * 64u - observed(m), 1024u);
  std::size_t blocks = 0;
  for (std::size_t by = 0; by < 16; ++by) {
    for (std::size_t bx = 0; bx < 16; ++bx) {
      std::size_t zeros = 0;
      for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) zeros += m.at(by * 4 + y, bx * 4 + x) ? 0 : 1;
      }
      EXPECT_TRUE(zeros == 0 || zeros == 16);  // union of whole blocks
      blocks += zeros == 16;
    }
  }
  EXPECT_EQ(blocks, 64u);
}

TEST(PatchwiseMask, CountsAtPatch8) {
  const auto m = gen_patchwise_mask(64, 64, 0.25, 8, 7);
  EXPECT_EQ((64u * 64u - observed(m)) / 64u, 16u);
}

TEST(PatchwiseMask, RateZeroAndErrors) {
  EXPECT_EQ(observed(gen_patchwise_mask(16, 16, 0.0, 4, 1)), 256u);
  EXPECT_THROW(gen_patchwise_mask(8, 8, 0.25, 16, 1), ValueError);
}

TEST(PatchwiseMask, ClippedTilingWhenNotDivisible) {
  // 10x10 with patch 4: 3x3 blocks, the last row/column 2 wide.
  const auto m = gen_patchwise_mask(10, 10, 0.5, 4, 2);
  EXPECT_EQ(m.height, 10u);
  const std::size_t missing = 100 - observed(m);
  EXPECT_GT(missing, 0u);
  EXPECT_LT(missing, 100u);
}

TEST(Mask, SeedDeterminesBits) {
  EXPECT_EQ(gen_patchwise_mask(32, 32, 0.3, 4, 9).bits, gen_patchwise_mask(32, 32, 0.3, 4, 9).bits);
  EXPECT_NE(gen_patchwise_mask(32, 32, 0.3, 4, 9).bits, gen_patchwise_mask(32, 32, 0.3, 4, 10).bits);
  EXPECT_EQ(gen_pointwise_mask(32, 32, 0.3, 9).bits, gen_pointwise_mask(32, 32, 0.3, 9).bits);
}

TEST(Mpt, ZeroRateKeepsMask) {
  const auto m = gen_patchwise_mask(32, 32, 0.25, 4, 1);
  const auto r = mpt_augment(m, 0.0, 5);
  EXPECT_EQ(r.augmented.bits, m.bits);
  EXPECT_EQ(observed(r.artificial), 32u * 32u);
}

TEST(Mpt, FullMaskGivesFreshPatchMask) {
  const auto full = ObservationMask::full(64, 64);
  auto base = gen_patchwise_mask(64, 64, 0.25, 4, 0);
  base.bits.assign(base.bits.size(), 1);  // full mask carrying the patch family
  const auto r = mpt_augment(base, 0.25, 3);
  EXPECT_EQ(r.augmented.bits, r.artificial.bits);
  EXPECT_EQ(64u * 64u - observed(r.augmented), 1024u);
  EXPECT_EQ(full.bits.size(), r.augmented.bits.size());
}

TEST(Mpt, NeverUnmasks) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto m = gen_pointwise_mask(16, 16, 0.4, s);
    const auto r = mpt_augment(m, 0.3, s + 100);
    EXPECT_LE(observed(r.augmented), observed(m));
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
      EXPECT_EQ(r.augmented.bits[i], m.bits[i] & r.artificial.bits[i]);
    }
  }
}

TEST(Mpt, CrossPatternUsesOtherFamily) {
  const auto m = gen_patchwise_mask(32, 32, 0.25, 4, 1);
  const auto r = mpt_augment(m, 0.5, 2, MptOptions{true});
  EXPECT_EQ(r.artificial.pattern, MaskPattern::pointwise);
}

TEST(ApplyMask, IdentityZeroingIdempotent) {
  std::vector<float> frames(2 * 4 * 4 * 3);
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = static_cast<float>(i) + 1.0f;
  const auto full = ObservationMask::full(4, 4);
  EXPECT_EQ(apply_mask(frames, 3, full), frames);

  auto m = full;
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 2; ++x) m.bits[y * 4 + x] = 0;
  }
  const auto once = apply_mask(frames, 3, m);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t i = ((t * 4 + y) * 4 + x) * 3 + c;
          EXPECT_EQ(once[i], (y < 2 && x < 2) ? 0.0f : frames[i]);
        }
      }
    }
  }
  EXPECT_EQ(apply_mask(once, 3, m), once);
  EXPECT_THROW(apply_mask(std::vector<float>(5), 3, m), ShapeError);
}

TEST(MaskFile, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "lano-unit-mask.pobm";
  const auto m = gen_patchwise_mask(13, 11, 0.3, 3, 8);
  write_mask(path, m);
  const auto back = read_mask(path);
  EXPECT_EQ(back.bits, m.bits);
  EXPECT_EQ(back.height, 13u);
  EXPECT_EQ(back.width, 11u);
  EXPECT_EQ(back.patch_size, 3u);
  EXPECT_EQ(back.seed, 8u);
  EXPECT_EQ(back.pattern, MaskPattern::patchwise);
  std::filesystem::remove(path);
}
