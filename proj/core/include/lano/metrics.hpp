#pragma once

#include <span>

namespace lano {

/// ||pred - truth||_2 / ||truth||_2 over all values. Throws ValueError for a
/// zero-norm truth and ShapeError for a size mismatch.
double relative_l2(std::span<const float> pred, std::span<const float> truth);
double relative_l2(std::span<const double> pred, std::span<const double> truth);

}  // namespace lano
