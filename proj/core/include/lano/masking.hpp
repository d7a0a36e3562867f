#pragma once

// Observation masks (1 = observed), mask-to-predict augmentation and mask
// files.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace lano {

enum class MaskPattern : std::uint8_t { pointwise = 0, patchwise = 1 };

std::string_view to_string(MaskPattern pattern);
/// Accepts "point", "pointwise", "patch", "patchwise".
MaskPattern parse_mask_pattern(std::string_view text);

struct ObservationMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 1 = observed
  MaskPattern pattern = MaskPattern::pointwise;
  double missing_rate = 0.0;
  std::size_t patch_size = 1;
  std::uint64_t seed = 0;

  static ObservationMask full(std::size_t height, std::size_t width);
  std::size_t points() const { return height * width; }
  std::size_t observed() const;
  double observed_fraction() const;
  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
};

/// Pattern parameters without the grid; the seed is supplied per draw.
struct MaskSpec {
  MaskPattern pattern = MaskPattern::patchwise;
  double missing_rate = 0.25;
  std::size_t patch_size = 4;
};

/// Each cell is unobserved independently with probability `missing_rate`.
ObservationMask gen_pointwise_mask(std::size_t height, std::size_t width, double missing_rate,
                                   std::uint64_t seed);

/// Tiles the grid into patch_size blocks anchored at the origin (the last
/// row/column of blocks is clipped when the extent is not a multiple) and
/// zeroes round(rate * blocks) distinct blocks.
ObservationMask gen_patchwise_mask(std::size_t height, std::size_t width, double missing_rate,
                                   std::size_t patch_size, std::uint64_t seed);

ObservationMask generate_mask(const MaskSpec& spec, std::size_t height, std::size_t width,
                              std::uint64_t seed);

struct MptOptions {
  /// Draw the artificial mask from the other pattern family.
  bool cross_pattern = false;
};

struct MptMasks {
  ObservationMask augmented;   // M AND H_hat
  ObservationMask artificial;  // H_hat
};

MptMasks mpt_augment(const ObservationMask& mask, double artificial_rate, std::uint64_t seed,
                     const MptOptions& options = {});

/// Zeroes unobserved cells of every frame/channel; `frames` is (t, y, x, c).
std::vector<float> apply_mask(std::span<const float> frames, std::size_t channels,
                              const ObservationMask& mask);

void write_mask(const std::filesystem::path& path, const ObservationMask& mask);
ObservationMask read_mask(const std::filesystem::path& path);

}  // namespace lano
