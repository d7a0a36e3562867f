#pragma once

// Cubic fill of unobserved cells, the reference completion used before
// standard training in the interpolate-then-train pipeline.

#include <span>
#include <vector>

#include "lano/masking.hpp"

namespace lano {

/// `frames` is (t, y, x, c). Each unobserved cell gets the average of a row
/// and a column estimate, each a Lagrange polynomial through up to two
/// nearest observed cells on either side (cubic when all four exist). Cells
/// with neither estimate take the value of the nearest filled cell (breadth
/// first). Observed cells are copied unchanged. Needs >= 4 observed cells.
std::vector<float> interp_fill(std::span<const float> frames, std::size_t channels, const ObservationMask& mask);

}  // namespace lano
