#include "lano/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "lano/error.hpp"
#include "lano/rng.hpp"

namespace lano {

namespace {

constexpr std::uint32_t kMaskVersion = 1;

void check_rate(double rate, const char* what) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ValueError(std::string(what) + ": missing rate must lie in [0, 1), got " + std::to_string(rate));
  }
}

void check_grid(std::size_t height, std::size_t width, const char* what) {
  if (height == 0 || width == 0) throw ValueError(std::string(what) + ": empty grid");
}

}  // namespace

std::string_view to_string(MaskPattern pattern) {
  return pattern == MaskPattern::pointwise ? "pointwise" : "patchwise";
}

MaskPattern parse_mask_pattern(std::string_view text) {
  if (text == "point" || text == "pointwise") return MaskPattern::pointwise;
  if (text == "patch" || text == "patchwise") return MaskPattern::patchwise;
  throw ValueError("unknown mask pattern '" + std::string(text) + "'");
}

ObservationMask ObservationMask::full(std::size_t height, std::size_t width) {
  ObservationMask m;
  m.height = height;
  m.width = width;
  m.bits.assign(height * width, 1);
  return m;
}

std::size_t ObservationMask::observed() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double ObservationMask::observed_fraction() const {
  return bits.empty() ? 0.0 : static_cast<double>(observed()) / static_cast<double>(bits.size());
}

ObservationMask gen_pointwise_mask(std::size_t height, std::size_t width, double missing_rate,
                                   std::uint64_t seed) {
  check_rate(missing_rate, "pointwise mask");
  check_grid(height, width, "pointwise mask");
  ObservationMask m = ObservationMask::full(height, width);
  m.pattern = MaskPattern::pointwise;
  m.missing_rate = missing_rate;
  m.patch_size = 1;
  m.seed = seed;
  Rng rng(seed);
  for (auto& b : m.bits) b = rng.uniform() >= missing_rate ? 1 : 0;
  return m;
}

ObservationMask gen_patchwise_mask(std::size_t height, std::size_t width, double missing_rate,
                                   std::size_t patch_size, std::uint64_t seed) {
  check_rate(missing_rate, "patchwise mask");
  check_grid(height, width, "patchwise mask");
  if (patch_size == 0) throw ValueError("patchwise mask: patch size must be positive");
  if (patch_size > height || patch_size > width) {
    throw ValueError("patchwise mask: patch " + std::to_string(patch_size) + " larger than grid " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  ObservationMask m = ObservationMask::full(height, width);
  m.pattern = MaskPattern::patchwise;
  m.missing_rate = missing_rate;
  m.patch_size = patch_size;
  m.seed = seed;

  const std::size_t by = (height + patch_size - 1) / patch_size;
  const std::size_t bx = (width + patch_size - 1) / patch_size;
  const std::size_t blocks = by * bx;
  const auto chosen = static_cast<std::size_t>(std::llround(missing_rate * static_cast<double>(blocks)));
  std::vector<std::size_t> order(blocks);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first `chosen` entries are a uniform sample.
  for (std::size_t i = 0; i < chosen; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(blocks - i));
    std::swap(order[i], order[j]);
  }
  for (std::size_t i = 0; i < chosen; ++i) {
    const std::size_t y0 = (order[i] / bx) * patch_size;
    const std::size_t x0 = (order[i] % bx) * patch_size;
    for (std::size_t y = y0; y < std::min(y0 + patch_size, height); ++y) {
      for (std::size_t x = x0; x < std::min(x0 + patch_size, width); ++x) m.bits[y * width + x] = 0;
    }
  }
  return m;
}

ObservationMask generate_mask(const MaskSpec& spec, std::size_t height, std::size_t width,
                              std::uint64_t seed) {
  if (spec.pattern == MaskPattern::pointwise) return gen_pointwise_mask(height, width, spec.missing_rate, seed);
  return gen_patchwise_mask(height, width, spec.missing_rate, spec.patch_size, seed);
}

MptMasks mpt_augment(const ObservationMask& mask, double artificial_rate, std::uint64_t seed,
                     const MptOptions& options) {
  check_rate(artificial_rate, "mpt_augment");
  MaskPattern pattern = mask.pattern;
  if (options.cross_pattern) {
    pattern = pattern == MaskPattern::pointwise ? MaskPattern::patchwise : MaskPattern::pointwise;
  }
  std::size_t patch = mask.patch_size;
  if (pattern == MaskPattern::patchwise && patch <= 1) patch = 4;
  patch = std::min({patch, mask.height, mask.width});
  MaskSpec spec{pattern, artificial_rate, patch};
  MptMasks out;
  out.artificial = generate_mask(spec, mask.height, mask.width, seed);
  out.augmented = mask;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    out.augmented.bits[i] = static_cast<std::uint8_t>(mask.bits[i] & out.artificial.bits[i]);
  }
  return out;
}

std::vector<float> apply_mask(std::span<const float> frames, std::size_t channels,
                              const ObservationMask& mask) {
  const std::size_t fsize = mask.points() * channels;
  if (channels == 0 || fsize == 0 || frames.size() % fsize != 0) {
    throw ShapeError("apply_mask: " + std::to_string(frames.size()) + " values do not tile frames of " +
                     std::to_string(mask.height) + "x" + std::to_string(mask.width) + "x" +
                     std::to_string(channels));
  }
  std::vector<float> out(frames.begin(), frames.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask.bits[(i % fsize) / channels]) out[i] = 0.0f;
  }
  return out;
}

void write_mask(const std::filesystem::path& path, const ObservationMask& mask) {
  if (mask.height > 0xFFFF || mask.width > 0xFFFF || mask.patch_size > 0xFFFF) {
    throw ValueError("mask file: extents exceed 16 bits");
  }
  detail::ByteWriter w;
  w.bytes("POBM", 4);
  w.u32(kMaskVersion);
  w.u8(static_cast<std::uint8_t>(mask.pattern));
  w.f32(static_cast<float>(mask.missing_rate));
  w.u16(static_cast<std::uint16_t>(mask.patch_size));
  w.u64(mask.seed);
  w.u16(static_cast<std::uint16_t>(mask.height));
  w.u16(static_cast<std::uint16_t>(mask.width));
  std::vector<unsigned char> packed((mask.bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) packed[i / 8] |= static_cast<unsigned char>(0x80u >> (i % 8));
  }
  w.bytes(packed.data(), packed.size());
  detail::write_file_bytes(path.string(), w.data());
}

ObservationMask read_mask(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  detail::ByteReader r(bytes.data(), bytes.size(), "mask '" + path.string() + "'");
  r.expect_magic("POBM");
  r.expect_version(kMaskVersion);
  ObservationMask m;
  const auto pattern = r.u8();
  if (pattern > 1) throw FormatError("mask '" + path.string() + "': unknown pattern " + std::to_string(pattern));
  m.pattern = static_cast<MaskPattern>(pattern);
  m.missing_rate = r.f32();
  m.patch_size = r.u16();
  m.seed = r.u64();
  m.height = r.u16();
  m.width = r.u16();
  const std::size_t n = m.height * m.width;
  std::vector<unsigned char> packed((n + 7) / 8);
  r.bytes(packed.data(), packed.size());
  if (!r.done()) throw FormatError("mask '" + path.string() + "': trailing bytes");
  m.bits.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.bits[i] = (packed[i / 8] >> (7 - i % 8)) & 1u;
  return m;
}

}  // namespace lano
