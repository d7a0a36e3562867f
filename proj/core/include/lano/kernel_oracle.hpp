#pragma once

// Dense reference for one latent operator layer: the propagator branch is
// rewritten as a per-head scalar kernel k_h(x, xi) = sum_k phi_hk(x) psi_hk(xi)
// followed by a channel map, and evaluated by brute-force summation.

#include <cstddef>
#include <vector>

#include "lano/model.hpp"

namespace lano {

struct KernelOracleResult {
  std::size_t points = 0;
  std::size_t heads = 0;
  std::size_t channels = 0;
  std::vector<double> kernel;     // [H, N, N], row x*, column xi
  std::vector<double> integral;   // [N, C], kernel contraction through the channel maps
  std::vector<double> bias;       // [C], affine part of the head merge
  std::vector<double> identity;   // [N, C], residual self-update (the layer input)
  std::vector<double> total;      // integral + bias + identity
  std::vector<double> mask_next;  // [N]

  double kernel_at(std::size_t h, std::size_t x, std::size_t xi) const {
    return kernel[(h * points + x) * points + xi];
  }
};

constexpr std::size_t kKernelOracleMaxPoints = 256;

/// `y` is the layer input [N, C] row-major, `mask` the current mask [N].
/// Throws ValueError above kKernelOracleMaxPoints points or for the MLP token
/// mixer, which is not linear in the tokens.
KernelOracleResult kernel_oracle(const LayerParams<double>& layer, const ModelConfig& config, std::size_t height,
                                 std::size_t width, const std::vector<double>& y, const std::vector<double>& mask);

}  // namespace lano
