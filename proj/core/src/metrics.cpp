#include "lano/metrics.hpp"

#include <cmath>
#include <string>

#include "lano/error.hpp"

namespace lano {

namespace {

template <typename T>
double rel_l2(std::span<const T> pred, std::span<const T> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("relative_l2: shape mismatch " + std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()));
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    num += d * d;
    den += static_cast<double>(truth[i]) * static_cast<double>(truth[i]);
  }
  if (!(den > 0.0)) throw ValueError("relative_l2: ground truth has zero norm");
  return std::sqrt(num / den);
}

}  // namespace

double relative_l2(std::span<const float> pred, std::span<const float> truth) { return rel_l2(pred, truth); }
double relative_l2(std::span<const double> pred, std::span<const double> truth) { return rel_l2(pred, truth); }

}  // namespace lano
