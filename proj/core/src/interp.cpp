#include "lano/interp.hpp"

#include <deque>
#include <string>

#include "lano/error.hpp"

namespace lano {

namespace {

// Lagrange interpolation at t through (xs[i], ys[i]).
double lagrange(const double* xs, const double* ys, std::size_t n, double t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) w *= (t - xs[j]) / (xs[i] - xs[j]);
    }
    acc += w * ys[i];
  }
  return acc;
}

// Estimate along one line of `len` cells: value(i), observed(i) accessors.
template <typename V, typename O>
bool line_estimate(std::size_t pos, std::size_t len, V value, O observed, double& out) {
  double xs[4], ys[4];
  std::size_t n = 0, left = 0, right = 0;
  for (std::size_t i = pos; i-- > 0 && left < 2;) {
    if (observed(i)) {
      xs[n] = static_cast<double>(i);
      ys[n++] = value(i);
      ++left;
    }
  }
  for (std::size_t i = pos + 1; i < len && right < 2; ++i) {
    if (observed(i)) {
      xs[n] = static_cast<double>(i);
      ys[n++] = value(i);
      ++right;
    }
  }
  if (left == 0 || right == 0) return false;
  out = lagrange(xs, ys, n, static_cast<double>(pos));
  return true;
}

}  // namespace

std::vector<float> interp_fill(std::span<const float> frames, std::size_t channels, const ObservationMask& mask) {
  const std::size_t H = mask.height, W = mask.width, N = H * W;
  const std::size_t fsize = N * channels;
  if (channels == 0 || fsize == 0 || frames.size() % fsize != 0) {
    throw ShapeError("interp_fill: " + std::to_string(frames.size()) + " values do not tile " +
                     std::to_string(H) + "x" + std::to_string(W) + "x" + std::to_string(channels) + " frames");
  }
  if (mask.observed() < 4) throw ValueError("interp_fill: need at least 4 observed points");
  std::vector<float> out(frames.begin(), frames.end());
  if (mask.observed() == N) return out;

  const std::size_t T = frames.size() / fsize;
  std::vector<double> est(N);
  std::vector<std::uint8_t> filled(N);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      auto at = [&](std::size_t y, std::size_t x) {
        return static_cast<double>(frames[t * fsize + (y * W + x) * channels + c]);
      };
      for (std::size_t i = 0; i < N; ++i) filled[i] = mask.bits[i];
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          if (mask.at(y, x)) continue;
          double sum = 0.0, v = 0.0;
          int count = 0;
          if (line_estimate(x, W, [&](std::size_t i) { return at(y, i); }, [&](std::size_t i) { return mask.at(y, i); },
                            v)) {
            sum += v;
            ++count;
          }
          if (line_estimate(y, H, [&](std::size_t i) { return at(i, x); }, [&](std::size_t i) { return mask.at(i, x); },
                            v)) {
            sum += v;
            ++count;
          }
          if (count) {
            est[y * W + x] = sum / count;
            filled[y * W + x] = 1;
          }
        }
      }
      // Nearest-valid fallback for cells with no estimate.
      std::deque<std::size_t> queue;
      std::vector<double> val(N);
      for (std::size_t i = 0; i < N; ++i) {
        val[i] = mask.bits[i] ? at(i / W, i % W) : est[i];
        if (filled[i]) queue.push_back(i);
      }
      while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        const std::size_t y = i / W, x = i % W;
        const std::size_t nb[4] = {y > 0 ? i - W : N, y + 1 < H ? i + W : N, x > 0 ? i - 1 : N, x + 1 < W ? i + 1 : N};
        for (std::size_t j : nb) {
          if (j < N && !filled[j]) {
            filled[j] = 1;
            val[j] = val[i];
            queue.push_back(j);
          }
        }
      }
      for (std::size_t i = 0; i < N; ++i) {
        if (!mask.bits[i]) out[t * fsize + i * channels + c] = static_cast<float>(val[i]);
      }
    }
  }
  return out;
}

}  // namespace lano
