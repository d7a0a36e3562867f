#include "lano/pdegen.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include "lano/error.hpp"
#include "lano/rng.hpp"

namespace lano {

std::string_view to_string(PdeKind kind) {
  switch (kind) {
    case PdeKind::navier_stokes: return "navier_stokes";
    case PdeKind::diffusion_reaction: return "diffusion_reaction";
    case PdeKind::external: return "external";
  }
  return "unknown";
}

PdeKind parse_pde_kind(std::string_view text) {
  if (text == "ns" || text == "navier_stokes") return PdeKind::navier_stokes;
  if (text == "dr" || text == "diffusion_reaction") return PdeKind::diffusion_reaction;
  if (text == "external") return PdeKind::external;
  throw ValueError("unknown pde kind '" + std::string(text) + "'");
}

std::vector<double> GridGeometry::coords() const {
  std::vector<double> c(points() * 2);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      c[2 * i] = static_cast<double>(x) / static_cast<double>(width);
      c[2 * i + 1] = static_cast<double>(y) / static_cast<double>(height);
    }
  }
  return c;
}

namespace {

void check_finite_bounded(std::span<const double> values, double bound, std::size_t step,
                          const char* what) {
  for (double v : values) {
    if (!std::isfinite(v) || std::abs(v) > bound) {
      throw SolverDiverged(std::string(what) + ": solution diverged at step " + std::to_string(step),
                           static_cast<int>(step));
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Diffusion-reaction
// ---------------------------------------------------------------------------

std::vector<double> band_limited_noise(GridGeometry grid, std::size_t modes, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = grid.points();
  std::vector<double> f(n, 0.0);
  const auto m = static_cast<long>(modes);
  for (long kx = 0; kx <= m; ++kx) {
    for (long ky = -m; ky <= m; ++ky) {
      if (kx == 0 && ky <= 0) continue;  // half plane, no mean mode
      const double a = rng.normal();
      const double b = rng.normal();
      for (std::size_t y = 0; y < grid.height; ++y) {
        for (std::size_t x = 0; x < grid.width; ++x) {
          const double phase = 2.0 * std::numbers::pi *
                               (static_cast<double>(kx) * static_cast<double>(x) / static_cast<double>(grid.width) +
                                static_cast<double>(ky) * static_cast<double>(y) / static_cast<double>(grid.height));
          f[y * grid.width + x] += a * std::cos(phase) + b * std::sin(phase);
        }
      }
    }
  }
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (double& v : f) v = (v - mean) * inv;
  return f;
}

DiffusionReactionSolver::DiffusionReactionSolver(GridGeometry grid, DiffusionReactionParams params)
    : grid_(grid), p_(params) {
  if (grid.height < 3 || grid.width < 3) throw ValueError("diffusion-reaction: grid must be at least 3x3");
  if (p_.dt <= 0.0) throw ValueError("diffusion-reaction: dt must be positive");
  if (p_.dt > stability_limit()) {
    throw ValueError("diffusion-reaction: dt " + format_double(p_.dt) + " exceeds stability bound " +
                     format_double(stability_limit()));
  }
  const std::size_t n = grid.points();
  u_.assign(n, 0.0);
  v_.assign(n, 0.0);
  lu_.assign(n, 0.0);
  lv_.assign(n, 0.0);
}

double DiffusionReactionSolver::stability_limit() const {
  const double h = p_.domain_length / static_cast<double>(std::max(grid_.height, grid_.width));
  const double d = std::max(p_.diffusion_u, p_.diffusion_v);
  return d > 0.0 ? h * h / (4.0 * d) : std::numeric_limits<double>::infinity();
}

void DiffusionReactionSolver::set_state(std::span<const double> u, std::span<const double> v) {
  if (u.size() != u_.size() || v.size() != v_.size()) {
    throw ShapeError("diffusion-reaction: state size mismatch");
  }
  std::copy(u.begin(), u.end(), u_.begin());
  std::copy(v.begin(), v.end(), v_.begin());
}

void DiffusionReactionSolver::step() {
  const std::size_t H = grid_.height, W = grid_.width;
  const double hx = p_.domain_length / static_cast<double>(W);
  const double hy = p_.domain_length / static_cast<double>(H);
  const double ix2 = 1.0 / (hx * hx), iy2 = 1.0 / (hy * hy);
  auto laplacian = [&](const std::vector<double>& f, std::vector<double>& out) {
    for (std::size_t y = 0; y < H; ++y) {
      const std::size_t yu = (y + H - 1) % H, yd = (y + 1) % H;
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t xl = (x + W - 1) % W, xr = (x + 1) % W;
        const double c = f[y * W + x];
        out[y * W + x] = (f[y * W + xl] - 2.0 * c + f[y * W + xr]) * ix2 +
                         (f[yu * W + x] - 2.0 * c + f[yd * W + x]) * iy2;
      }
    }
  };
  if (p_.diffusion) {
    laplacian(u_, lu_);
    laplacian(v_, lv_);
  }
  const double dt = p_.dt;
  for (std::size_t i = 0; i < u_.size(); ++i) {
    const double u = u_[i], v = v_[i];
    double du = 0.0, dv = 0.0;
    if (p_.diffusion) {
      du += p_.diffusion_u * lu_[i];
      dv += p_.diffusion_v * lv_[i];
    }
    if (p_.reaction) {
      du += u - u * u * u - p_.k - v;
      dv += u - v;
    }
    u_[i] = u + dt * du;
    v_[i] = v + dt * dv;
  }
  ++steps_;
  check_finite_bounded(u_, p_.divergence_bound, steps_, "diffusion-reaction");
  check_finite_bounded(v_, p_.divergence_bound, steps_, "diffusion-reaction");
}

Trajectory solve_diffusion_reaction(GridGeometry grid, std::uint64_t seed, std::size_t t_steps,
                                    const DiffusionReactionParams& params) {
  if (t_steps < 2) throw ValueError("diffusion-reaction: need at least 2 frames");
  DiffusionReactionSolver solver(grid, params);
  const std::size_t modes =
      params.ic_modes > 0 ? params.ic_modes : std::max<std::size_t>(1, std::min(grid.height, grid.width) / 16);
  const auto u0 = band_limited_noise(grid, modes, mix_seed(seed, 0));
  const auto v0 = band_limited_noise(grid, modes, mix_seed(seed, 1));
  solver.set_state(u0, v0);

  Trajectory traj;
  traj.kind = PdeKind::diffusion_reaction;
  traj.dt = params.dt * static_cast<double>(params.substeps);
  traj.seed = seed;
  traj.steps = t_steps;
  traj.height = grid.height;
  traj.width = grid.width;
  traj.channels = 2;
  traj.frames.resize(t_steps * grid.points() * 2);
  for (std::size_t t = 0; t < t_steps; ++t) {
    if (t > 0) {
      for (std::size_t s = 0; s < params.substeps; ++s) solver.step();
    }
    float* dst = traj.frames.data() + t * grid.points() * 2;
    for (std::size_t i = 0; i < grid.points(); ++i) {
      dst[2 * i] = static_cast<float>(solver.u()[i]);
      dst[2 * i + 1] = static_cast<float>(solver.v()[i]);
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Navier-Stokes
// ---------------------------------------------------------------------------

namespace {

using cplx = std::complex<double>;

class FftPlan2d {
 public:
  FftPlan2d(std::size_t n, int sign) : n_(n) {
    buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n * n));
    plan_ = fftw_plan_dft_2d(static_cast<int>(n), static_cast<int>(n), buf_, buf_, sign, FFTW_ESTIMATE);
  }
  ~FftPlan2d() {
    fftw_destroy_plan(plan_);
    fftw_free(buf_);
  }
  FftPlan2d(const FftPlan2d&) = delete;
  FftPlan2d& operator=(const FftPlan2d&) = delete;

  // In-place transform of `data` (length n*n, row-major).
  void run(std::vector<cplx>& data) {
    std::copy(data.begin(), data.end(), reinterpret_cast<cplx*>(buf_));
    fftw_execute(plan_);
    std::copy_n(reinterpret_cast<const cplx*>(buf_), n_ * n_, data.begin());
  }

 private:
  std::size_t n_;
  fftw_complex* buf_ = nullptr;
  fftw_plan plan_ = nullptr;
};

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

long wavenumber(std::size_t j, std::size_t n) {
  return j <= n / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(n);
}

}  // namespace

struct NavierStokesSolver::Impl {
  std::size_t n;
  NavierStokesParams p;
  FftPlan2d forward;   // physical -> spectral (unnormalized)
  FftPlan2d backward;  // spectral -> physical (unnormalized)
  std::vector<cplx> w_hat;
  std::vector<cplx> f_hat;
  std::vector<double> kx, ky, k2;  // angular wavenumbers (2*pi*integer)
  std::vector<double> dkx, dky;    // derivative wavenumbers with Nyquist zeroed
  std::vector<double> dealias;
  std::vector<cplx> t0, t1, t2, t3;

  Impl(std::size_t n_, NavierStokesParams p_)
      : n(n_), p(p_), forward(n_, FFTW_FORWARD), backward(n_, FFTW_BACKWARD) {
    const std::size_t N = n * n;
    w_hat.assign(N, 0.0);
    f_hat.assign(N, 0.0);
    kx.resize(N);
    ky.resize(N);
    k2.resize(N);
    dkx.resize(N);
    dky.resize(N);
    dealias.resize(N);
    const double two_pi = 2.0 * std::numbers::pi;
    const long cutoff = static_cast<long>(n) / 3;
    for (std::size_t iy = 0; iy < n; ++iy) {
      for (std::size_t ix = 0; ix < n; ++ix) {
        const std::size_t i = iy * n + ix;
        const long mx = wavenumber(ix, n), my = wavenumber(iy, n);
        kx[i] = two_pi * static_cast<double>(mx);
        ky[i] = two_pi * static_cast<double>(my);
        k2[i] = kx[i] * kx[i] + ky[i] * ky[i];
        dkx[i] = (ix == n / 2) ? 0.0 : kx[i];
        dky[i] = (iy == n / 2) ? 0.0 : ky[i];
        dealias[i] = (std::abs(mx) <= cutoff && std::abs(my) <= cutoff) ? 1.0 : 0.0;
      }
    }
    if (p.forcing) {
      std::vector<cplx> f(N);
      for (std::size_t iy = 0; iy < n; ++iy) {
        for (std::size_t ix = 0; ix < n; ++ix) {
          const double x = static_cast<double>(ix) / static_cast<double>(n);
          const double y = static_cast<double>(iy) / static_cast<double>(n);
          const double s = two_pi * (x + y);
          f[iy * n + ix] = 0.1 * (std::sin(s) + std::cos(s));
        }
      }
      forward.run(f);
      f_hat = std::move(f);
    }
    t0.resize(N);
    t1.resize(N);
    t2.resize(N);
    t3.resize(N);
  }

  // Spectral advection term u . grad(w), dealiased.
  void advection(const std::vector<cplx>& wh, std::vector<cplx>& out) {
    const std::size_t N = n * n;
    const double inv_n2 = 1.0 / static_cast<double>(N);
    const cplx I(0.0, 1.0);
    for (std::size_t i = 0; i < N; ++i) {
      const cplx psi = k2[i] > 0.0 ? wh[i] / k2[i] : cplx(0.0);
      t0[i] = I * dky[i] * psi * inv_n2;     // u = d(psi)/dy
      t1[i] = -I * dkx[i] * psi * inv_n2;    // v = -d(psi)/dx
      t2[i] = I * dkx[i] * wh[i] * inv_n2;   // dw/dx
      t3[i] = I * dky[i] * wh[i] * inv_n2;   // dw/dy
    }
    backward.run(t0);
    backward.run(t1);
    backward.run(t2);
    backward.run(t3);
    out.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      out[i] = t0[i].real() * t2[i].real() + t1[i].real() * t3[i].real();
    }
    forward.run(out);
    for (std::size_t i = 0; i < N; ++i) out[i] *= dealias[i];
  }

  void step() {
    const std::size_t N = n * n;
    const double dt = p.dt;
    std::vector<cplx> n1, n2;
    if (p.nonlinear) advection(w_hat, n1);
    std::vector<cplx> pred(N);
    for (std::size_t i = 0; i < N; ++i) {
      const double a = 0.5 * dt * p.viscosity * k2[i];
      const cplx rhs = (1.0 - a) * w_hat[i] + dt * (f_hat[i] - (p.nonlinear ? n1[i] : cplx(0.0)));
      pred[i] = rhs / (1.0 + a);
    }
    if (!p.nonlinear) {
      w_hat = std::move(pred);
      return;
    }
    advection(pred, n2);
    for (std::size_t i = 0; i < N; ++i) {
      const double a = 0.5 * dt * p.viscosity * k2[i];
      const cplx rhs = (1.0 - a) * w_hat[i] + dt * (f_hat[i] - 0.5 * (n1[i] + n2[i]));
      w_hat[i] = rhs / (1.0 + a);
    }
  }
};

NavierStokesSolver::NavierStokesSolver(std::size_t n, NavierStokesParams params) {
  if (!is_power_of_two(n) || n < 4) throw ValueError("navier-stokes: grid extent must be a power of two >= 4");
  if (params.viscosity < 0.0) throw ValueError("navier-stokes: viscosity must be non-negative");
  if (params.dt <= 0.0) throw ValueError("navier-stokes: dt must be positive");
  impl_ = std::make_unique<Impl>(n, params);
}

NavierStokesSolver::~NavierStokesSolver() = default;

void NavierStokesSolver::set_vorticity(std::span<const double> w) {
  const std::size_t N = impl_->n * impl_->n;
  if (w.size() != N) throw ShapeError("navier-stokes: vorticity size mismatch");
  std::vector<cplx> tmp(w.begin(), w.end());
  impl_->forward.run(tmp);
  impl_->w_hat = std::move(tmp);
}

std::vector<double> NavierStokesSolver::vorticity() const {
  const std::size_t N = impl_->n * impl_->n;
  std::vector<cplx> tmp = impl_->w_hat;
  impl_->backward.run(tmp);
  std::vector<double> w(N);
  for (std::size_t i = 0; i < N; ++i) w[i] = tmp[i].real() / static_cast<double>(N);
  return w;
}

void NavierStokesSolver::step() {
  impl_->step();
  ++steps_;
  for (const auto& c : impl_->w_hat) {
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
      throw SolverDiverged("navier-stokes: solution diverged at step " + std::to_string(steps_),
                           static_cast<int>(steps_));
    }
  }
}

double NavierStokesSolver::mean_vorticity() const {
  const double N = static_cast<double>(impl_->n * impl_->n);
  return impl_->w_hat[0].real() / N;
}

double NavierStokesSolver::kinetic_energy() const {
  // 0.5 * mean(|u|^2) = 0.5 * sum_k |w_hat|^2 / |k|^2 / N^2 (Parseval).
  const double N = static_cast<double>(impl_->n * impl_->n);
  double e = 0.0;
  for (std::size_t i = 0; i < impl_->w_hat.size(); ++i) {
    if (impl_->k2[i] > 0.0) e += std::norm(impl_->w_hat[i]) / impl_->k2[i];
  }
  return 0.5 * e / (N * N);
}

std::vector<double> gaussian_random_vorticity(std::size_t n, std::uint64_t seed) {
  constexpr double alpha = 2.5;
  constexpr double tau = 7.0;
  const double sigma = std::pow(tau, 0.5 * (2.0 * alpha - 2.0));
  Rng rng(seed);
  const std::size_t N = n * n;
  std::vector<cplx> coeff(N);
  const double four_pi2 = 4.0 * std::numbers::pi * std::numbers::pi;
  for (std::size_t iy = 0; iy < n; ++iy) {
    for (std::size_t ix = 0; ix < n; ++ix) {
      const double mx = static_cast<double>(wavenumber(ix, n));
      const double my = static_cast<double>(wavenumber(iy, n));
      const double re = rng.normal();
      const double im = rng.normal();
      if (ix == 0 && iy == 0) continue;
      const double amp = std::sqrt(2.0) * sigma * std::pow(four_pi2 * (mx * mx + my * my) + tau * tau, -alpha / 2.0);
      coeff[iy * n + ix] = amp * cplx(re, im);
    }
  }
  FftPlan2d plan(n, FFTW_BACKWARD);
  plan.run(coeff);
  std::vector<double> w(N);
  for (std::size_t i = 0; i < N; ++i) w[i] = coeff[i].real();
  return w;
}

Trajectory solve_navier_stokes(GridGeometry grid, std::uint64_t seed, std::size_t t_steps,
                               const NavierStokesParams& params) {
  if (t_steps < 2) throw ValueError("navier-stokes: need at least 2 frames");
  if (grid.height != grid.width) throw ValueError("navier-stokes: grid must be square");
  if (params.viscosity <= 0.0) throw ValueError("navier-stokes: viscosity must be positive");
  const std::size_t sub = std::max<std::size_t>(1, params.subsample);
  const std::size_t n = grid.height * sub;
  NavierStokesSolver solver(n, params);
  solver.set_vorticity(gaussian_random_vorticity(n, mix_seed(seed, 0)));

  Trajectory traj;
  traj.kind = PdeKind::navier_stokes;
  traj.dt = params.dt * static_cast<double>(params.substeps);
  traj.seed = seed;
  traj.steps = t_steps;
  traj.height = grid.height;
  traj.width = grid.width;
  traj.channels = 1;
  traj.frames.resize(t_steps * grid.points());
  for (std::size_t t = 0; t < t_steps; ++t) {
    if (t > 0) {
      for (std::size_t s = 0; s < params.substeps; ++s) solver.step();
    }
    const auto w = solver.vorticity();
    check_finite_bounded(w, params.divergence_bound, solver.steps_taken(), "navier-stokes");
    float* dst = traj.frames.data() + t * grid.points();
    for (std::size_t y = 0; y < grid.height; ++y) {
      for (std::size_t x = 0; x < grid.width; ++x) {
        dst[y * grid.width + x] = static_cast<float>(w[(y * sub) * n + x * sub]);
      }
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// External data
// ---------------------------------------------------------------------------

ChannelStats channel_statistics(std::span<const Trajectory> trajectories) {
  ChannelStats stats;
  if (trajectories.empty()) return stats;
  const std::size_t C = trajectories.front().channels;
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  std::size_t count = 0;
  for (const auto& t : trajectories) {
    if (t.channels != C) throw ShapeError("channel_statistics: channel count differs across trajectories");
    for (std::size_t i = 0; i < t.frames.size(); ++i) sum[i % C] += t.frames[i];
    count += t.frames.size() / C;
  }
  stats.mean.resize(C);
  stats.stddev.resize(C);
  for (std::size_t c = 0; c < C; ++c) stats.mean[c] = sum[c] / static_cast<double>(count);
  for (const auto& t : trajectories) {
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
      const double d = t.frames[i] - stats.mean[i % C];
      sq[i % C] += d * d;
    }
  }
  for (std::size_t c = 0; c < C; ++c) stats.stddev[c] = std::sqrt(sq[c] / static_cast<double>(count));
  return stats;
}

Trajectory ingest_external(const std::vector<std::vector<double>>& raw_frames, GridGeometry grid,
                           std::size_t channels, const ChannelStats& stats) {
  if (raw_frames.empty()) throw ValueError("ingest: no frames");
  if (channels == 0) throw ValueError("ingest: zero channels");
  if (stats.mean.size() != channels || stats.stddev.size() != channels) {
    throw ShapeError("ingest: statistics cover " + std::to_string(stats.mean.size()) +
                     " channels, data has " + std::to_string(channels));
  }
  const std::size_t fsize = grid.points() * channels;
  Trajectory traj;
  traj.kind = PdeKind::external;
  traj.steps = raw_frames.size();
  traj.height = grid.height;
  traj.width = grid.width;
  traj.channels = channels;
  traj.frames.reserve(raw_frames.size() * fsize);
  for (std::size_t t = 0; t < raw_frames.size(); ++t) {
    const auto& f = raw_frames[t];
    if (f.size() != fsize) {
      throw ShapeError("ingest: frame " + std::to_string(t) + " has " + std::to_string(f.size()) +
                       " values, expected " + std::to_string(fsize));
    }
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (!std::isfinite(f[i])) {
        throw ValueError("ingest: non-finite value in frame " + std::to_string(t) + " at index " +
                         std::to_string(i));
      }
      const std::size_t c = i % channels;
      const double sd = stats.stddev[c] > 0.0 ? stats.stddev[c] : 1.0;
      traj.frames.push_back(static_cast<float>((f[i] - stats.mean[c]) / sd));
    }
  }
  return traj;
}

}  // namespace lano
