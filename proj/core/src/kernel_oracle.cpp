#include "lano/kernel_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lano/error.hpp"

namespace lano {

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

void softmax_inplace(double* v, std::size_t n) {
  double mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - mx);
    s += v[i];
  }
  for (std::size_t i = 0; i < n; ++i) v[i] /= s;
}

// Per-head two-layer MLP with GELU on rows of `in` [N, I]; weights [H, I, J],
// [H, 1, J], [H, J, L], [H, 1, L]. Returns softmax(logits / tau) as [N, L].
std::vector<double> slice_map(const std::vector<double>& in, std::size_t N, std::size_t I, std::size_t h,
                              const Tensor<double>& w1, const Tensor<double>& b1, const Tensor<double>& w2,
                              const Tensor<double>& b2, double tau) {
  const std::size_t J = w1.dim(2), L = w2.dim(2);
  std::vector<double> out(N * L), hidden(J);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < J; ++j) {
      double a = b1[h * J + j];
      for (std::size_t i = 0; i < I; ++i) a += in[n * I + i] * w1[(h * I + i) * J + j];
      hidden[j] = gelu(a);
    }
    for (std::size_t l = 0; l < L; ++l) {
      double a = b2[h * L + l];
      for (std::size_t j = 0; j < J; ++j) a += hidden[j] * w2[(h * J + j) * L + l];
      out[n * L + l] = a / tau;
    }
    softmax_inplace(out.data() + n * L, L);
  }
  return out;
}

}  // namespace

KernelOracleResult kernel_oracle(const LayerParams<double>& layer, const ModelConfig& cfg, std::size_t height,
                                 std::size_t width, const std::vector<double>& y, const std::vector<double>& mask) {
  const std::size_t N = height * width, C = cfg.channels, H = cfg.heads, Ch = cfg.head_channels();
  const std::size_t L = cfg.latent_tokens;
  if (N > kKernelOracleMaxPoints) {
    throw ValueError("kernel_oracle: " + std::to_string(N) + " points exceed the dense limit of " +
                     std::to_string(kKernelOracleMaxPoints));
  }
  if (cfg.token_mixer == TokenMixer::mlp) throw ValueError("kernel_oracle: mlp token mixer is not linear in the tokens");
  if (y.size() != N * C || mask.size() != N) throw ShapeError("kernel_oracle: input size mismatch");

  // Layer norm of the input.
  std::vector<double> x(N * C);
  for (std::size_t n = 0; n < N; ++n) {
    double mu = 0.0, var = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += y[n * C + c];
    mu /= static_cast<double>(C);
    for (std::size_t c = 0; c < C; ++c) var += (y[n * C + c] - mu) * (y[n * C + c] - mu);
    var /= static_cast<double>(C);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t c = 0; c < C; ++c) {
      x[n * C + c] = (y[n * C + c] - mu) * inv * layer.ln1_gamma[c] + layer.ln1_beta[c];
    }
  }

  // Propagated mask.
  const long r = static_cast<long>(cfg.pconv_kernel / 2);
  const std::size_t k = cfg.pconv_kernel;
  std::vector<double> mnext(mask), ratio(N, 1.0);
  if (cfg.boundary_first) {
    for (long yy = 0; yy < static_cast<long>(height); ++yy) {
      for (long xx = 0; xx < static_cast<long>(width); ++xx) {
        double count = 0.0;
        for (long dy = -r; dy <= r; ++dy) {
          for (long dx = -r; dx <= r; ++dx) {
            const long py = yy + dy, px = xx + dx;
            if (py < 0 || px < 0 || py >= static_cast<long>(height) || px >= static_cast<long>(width)) continue;
            count += mask[static_cast<std::size_t>(py) * width + static_cast<std::size_t>(px)] != 0.0 ? 1.0 : 0.0;
          }
        }
        const std::size_t i = static_cast<std::size_t>(yy) * width + static_cast<std::size_t>(xx);
        mnext[i] = count > 0.0 ? 1.0 : 0.0;
        ratio[i] = count > 0.0 ? static_cast<double>(k * k) / count : 0.0;
      }
    }
  }

  std::vector<double> coords(N * 2);
  for (std::size_t i = 0; i < N; ++i) {
    coords[2 * i] = static_cast<double>(i % width) / static_cast<double>(width);
    coords[2 * i + 1] = static_cast<double>(i / width) / static_cast<double>(height);
  }

  KernelOracleResult res;
  res.points = N;
  res.heads = H;
  res.channels = C;
  res.kernel.assign(H * N * N, 0.0);
  res.integral.assign(N * C, 0.0);
  res.mask_next = mnext;

  std::vector<double> xh(N * Ch);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < Ch; ++c) xh[n * Ch + c] = x[n * C + h * Ch + c];
    }
    // Encoder weights psi(xi, k) = S(xi, k) / (sum_xi S(xi, k) + eps).
    auto s = slice_map(xh, N, Ch, h, layer.slice_w1, layer.slice_b1, layer.slice_w2, layer.slice_b2, cfg.temperature);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t l = 0; l < L; ++l) s[n * L + l] *= mask[n];
    }
    std::vector<double> psi(N * L);
    for (std::size_t l = 0; l < L; ++l) {
      double col = 0.0;
      for (std::size_t n = 0; n < N; ++n) col += s[n * L + l];
      for (std::size_t n = 0; n < N; ++n) psi[n * L + l] = s[n * L + l] / (col + cfg.epsilon);
    }

    // Decoder weights phi(x*, k).
    std::vector<double> d(N * L, 0.0);
    if (cfg.variant == DecodeVariant::recalc) {
      d = slice_map(coords, N, 2, h, layer.pos_w1, layer.pos_b1, layer.pos_w2, layer.pos_b2, cfg.temperature);
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t l = 0; l < L; ++l) d[n * L + l] *= mnext[n];
      }
    } else if (cfg.boundary_first) {
      for (std::size_t l = 0; l < L; ++l) {
        const std::size_t ch = h * L + l;
        for (long yy = 0; yy < static_cast<long>(height); ++yy) {
          for (long xx = 0; xx < static_cast<long>(width); ++xx) {
            double acc = 0.0;
            for (long dy = -r; dy <= r; ++dy) {
              for (long dx = -r; dx <= r; ++dx) {
                const long py = yy + dy, px = xx + dx;
                if (py < 0 || px < 0 || py >= static_cast<long>(height) || px >= static_cast<long>(width)) continue;
                const double wk = layer.pconv_w[(ch * k + static_cast<std::size_t>(dy + r)) * k + static_cast<std::size_t>(dx + r)];
                acc += wk * s[(static_cast<std::size_t>(py) * width + static_cast<std::size_t>(px)) * L + l];
              }
            }
            const std::size_t i = static_cast<std::size_t>(yy) * width + static_cast<std::size_t>(xx);
            d[i * L + l] = acc * ratio[i] + layer.pconv_b[ch] * mnext[i];
          }
        }
      }
    } else {
      d = s;
    }
    std::vector<double> phi(N * L);
    for (std::size_t n = 0; n < N; ++n) {
      double norm = 1.0 - mnext[n] + 1e-12;
      for (std::size_t l = 0; l < L; ++l) norm += std::abs(d[n * L + l]);
      for (std::size_t l = 0; l < L; ++l) phi[n * L + l] = d[n * L + l] / norm;
    }

    // Token transformation A [L, L] and channel map V [Ch, Ch].
    std::vector<double> a(L * L, 0.0), v(Ch * Ch, 0.0);
    for (std::size_t l = 0; l < L; ++l) a[l * L + l] = 1.0;
    for (std::size_t c = 0; c < Ch; ++c) v[c * Ch + c] = 1.0;
    if (cfg.token_mixer == TokenMixer::attention) {
      std::vector<double> z(L * Ch, 0.0), q(L * Ch, 0.0), kk(L * Ch, 0.0);
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t c = 0; c < Ch; ++c) z[l * Ch + c] += psi[n * L + l] * xh[n * Ch + c];
        }
      }
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t o = 0; o < Ch; ++o) {
          for (std::size_t c = 0; c < Ch; ++c) {
            q[l * Ch + o] += z[l * Ch + c] * layer.attn_q[(h * Ch + c) * Ch + o];
            kk[l * Ch + o] += z[l * Ch + c] * layer.attn_k[(h * Ch + c) * Ch + o];
          }
        }
      }
      const double sc = 1.0 / std::sqrt(static_cast<double>(Ch));
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < L; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < Ch; ++c) dot += q[i * Ch + c] * kk[j * Ch + c];
          a[i * L + j] = dot * sc;
        }
        softmax_inplace(a.data() + i * L, L);
      }
      for (std::size_t c = 0; c < Ch * Ch; ++c) v[c] = layer.attn_v[h * Ch * Ch + c];
    }

    // kappa_h(x*, xi) = sum_k sum_j phi(x*, k) A(k, j) psi(xi, j).
    std::vector<double> phia(N * L, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t kq = 0; kq < L; ++kq) {
        const double p = phi[n * L + kq];
        if (p == 0.0) continue;
        for (std::size_t j = 0; j < L; ++j) phia[n * L + j] += p * a[kq * L + j];
      }
    }
    double* kap = res.kernel.data() + h * N * N;
    for (std::size_t xs = 0; xs < N; ++xs) {
      for (std::size_t xi = 0; xi < N; ++xi) {
        double acc = 0.0;
        for (std::size_t j = 0; j < L; ++j) acc += phia[xs * L + j] * psi[xi * L + j];
        kap[xs * N + xi] = acc;
      }
    }

    // Contraction with the head features, then the channel maps.
    std::vector<double> u(N * Ch, 0.0), uv(N * Ch, 0.0);
    for (std::size_t xs = 0; xs < N; ++xs) {
      for (std::size_t xi = 0; xi < N; ++xi) {
        const double kv = kap[xs * N + xi];
        if (kv == 0.0) continue;
        for (std::size_t c = 0; c < Ch; ++c) u[xs * Ch + c] += kv * xh[xi * Ch + c];
      }
      for (std::size_t o = 0; o < Ch; ++o) {
        double acc = 0.0;
        for (std::size_t c = 0; c < Ch; ++c) acc += u[xs * Ch + c] * v[c * Ch + o];
        uv[xs * Ch + o] = acc;
      }
      for (std::size_t o = 0; o < C; ++o) {
        double acc = 0.0;
        for (std::size_t c = 0; c < Ch; ++c) acc += uv[xs * Ch + c] * layer.merge_w[(h * Ch + c) * C + o];
        res.integral[xs * C + o] += acc;
      }
    }
  }

  res.bias.assign(layer.merge_b.values().begin(), layer.merge_b.values().end());
  res.identity = y;
  res.total.resize(N * C);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      res.total[n * C + c] = res.integral[n * C + c] + res.bias[c] + res.identity[n * C + c];
    }
  }
  return res;
}

}  // namespace lano
