#pragma once

// Synthetic PDE trajectories on periodic regular grids, dataset files and
// manifests.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lano/keyvalue.hpp"

namespace lano {

enum class PdeKind : std::uint8_t { navier_stokes = 0, diffusion_reaction = 1, external = 2 };

std::string_view to_string(PdeKind kind);
/// Accepts "ns", "navier_stokes", "dr", "diffusion_reaction", "external".
PdeKind parse_pde_kind(std::string_view text);

struct GridGeometry {
  std::size_t height = 0;
  std::size_t width = 0;

  static GridGeometry square(std::size_t n) { return {n, n}; }
  std::size_t points() const { return height * width; }
  /// Row-major (y, x) pairs flattened as [N, 2] holding (x, y) in [0, 1),
  /// uniformly spaced at 1/width and 1/height.
  std::vector<double> coords() const;
};

/// Frames are stored (t, y, x, c) as 32-bit floats.
struct Trajectory {
  PdeKind kind = PdeKind::external;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> frames;

  std::size_t frame_size() const { return height * width * channels; }
  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(frames).subspan(t * frame_size(), frame_size());
  }
  float at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return frames[((t * height + y) * width + x) * channels + c];
  }
  GridGeometry grid() const { return {height, width}; }
};

// ---------------------------------------------------------------------------
// Diffusion-reaction (2-D FitzHugh-Nagumo)
// ---------------------------------------------------------------------------

struct DiffusionReactionParams {
  double diffusion_u = 1e-3;
  double diffusion_v = 5e-3;
  double k = 5e-3;
  double domain_length = 2.0;  // [-1, 1]^2
  double dt = 0.01;
  std::size_t substeps = 25;   // solver steps between recorded frames
  bool reaction = true;
  bool diffusion = true;
  std::size_t ic_modes = 0;     // band limit of the initial condition; 0 uses max(1, extent / 16)
  double divergence_bound = 1e3;
};

/// Explicit-Euler integrator on a periodic grid; the state is kept in double.
class DiffusionReactionSolver {
 public:
  DiffusionReactionSolver(GridGeometry grid, DiffusionReactionParams params);

  void set_state(std::span<const double> u, std::span<const double> v);
  std::span<const double> u() const { return u_; }
  std::span<const double> v() const { return v_; }
  /// Advances one solver step; throws SolverDiverged if any |value| exceeds
  /// the bound.
  void step();
  std::size_t steps_taken() const { return steps_; }
  double stability_limit() const;

 private:
  GridGeometry grid_;
  DiffusionReactionParams p_;
  std::vector<double> u_, v_, lu_, lv_;
  std::size_t steps_ = 0;
};

/// Band-limited random field with zero mean and unit variance.
std::vector<double> band_limited_noise(GridGeometry grid, std::size_t modes, std::uint64_t seed);

Trajectory solve_diffusion_reaction(GridGeometry grid, std::uint64_t seed, std::size_t t_steps,
                                    const DiffusionReactionParams& params = {});

// ---------------------------------------------------------------------------
// Navier-Stokes (vorticity form, pseudo-spectral)
// ---------------------------------------------------------------------------

struct NavierStokesParams {
  double viscosity = 1e-3;
  double dt = 1e-2;
  std::size_t substeps = 100;  // solver steps between recorded frames
  bool forcing = true;
  bool nonlinear = true;
  /// Record every `subsample`-th grid point of the solver grid.
  std::size_t subsample = 1;
  double divergence_bound = 1e3;
};

/// Vorticity equation on [0,1)^2: Crank-Nicolson viscous term, Heun
/// (explicit, second order) advection, 2/3-rule dealiasing.
class NavierStokesSolver {
 public:
  NavierStokesSolver(std::size_t n, NavierStokesParams params);
  ~NavierStokesSolver();
  NavierStokesSolver(const NavierStokesSolver&) = delete;
  NavierStokesSolver& operator=(const NavierStokesSolver&) = delete;

  void set_vorticity(std::span<const double> w);
  /// Physical-space vorticity, row-major (y, x).
  std::vector<double> vorticity() const;
  void step();
  double mean_vorticity() const;
  double kinetic_energy() const;
  std::size_t steps_taken() const { return steps_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t steps_ = 0;
};

/// Gaussian random field with covariance sigma^2 (-Lap + tau^2)^(-alpha),
/// sigma = 7^1.5, tau = 7, alpha = 2.5.
std::vector<double> gaussian_random_vorticity(std::size_t n, std::uint64_t seed);

Trajectory solve_navier_stokes(GridGeometry grid, std::uint64_t seed, std::size_t t_steps,
                               const NavierStokesParams& params = {});

// ---------------------------------------------------------------------------
// External data
// ---------------------------------------------------------------------------

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

ChannelStats channel_statistics(std::span<const Trajectory> trajectories);

/// Builds a trajectory from raw frames (each H*W*C, (y, x, c) order),
/// normalizing every channel with the given statistics. Constant channels
/// (zero deviation) map to zero.
Trajectory ingest_external(const std::vector<std::vector<double>>& raw_frames, GridGeometry grid,
                           std::size_t channels, const ChannelStats& stats);

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

/// Writes trajectories as consecutive POBD records.
void write_dataset(const std::filesystem::path& path, std::span<const Trajectory> trajectories);
std::vector<Trajectory> read_dataset(const std::filesystem::path& path);

struct DatasetManifest {
  PdeKind kind = PdeKind::external;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t steps = 0;
  double dt = 0.0;
  std::uint64_t base_seed = 0;
  struct Split {
    std::string name;
    std::string file;
    std::size_t count = 0;
    std::uint64_t first_seed = 0;
  };
  std::vector<Split> splits;
  ChannelStats stats;
  KeyValue extra;  // solver parameters and other provenance

  KeyValue to_keyvalue() const;
  static DatasetManifest from_keyvalue(const KeyValue& kv);
  void save(const std::filesystem::path& path) const { to_keyvalue().save(path); }
  static DatasetManifest load(const std::filesystem::path& path) {
    return from_keyvalue(KeyValue::load(path));
  }
  const Split& split(const std::string& name) const;
};

/// Reads one split listed in a manifest (paths relative to the manifest) and
/// fills in the time step.
std::vector<Trajectory> load_split(const std::filesystem::path& manifest_path, const std::string& split);

struct GenerateOptions {
  PdeKind kind = PdeKind::diffusion_reaction;
  std::size_t grid = 64;
  std::size_t train = 10;
  std::size_t val = 0;   // 0 selects max(1, train / 10)
  std::size_t test = 0;  // 0 selects max(1, train / 10)
  std::size_t steps = 20;
  std::uint64_t seed = 0;
  DiffusionReactionParams dr;
  NavierStokesParams ns;
  std::size_t ns_solver_grid = 64;  // Navier-Stokes solves at max(grid, this) and subsamples
};

/// Generates train/val/test splits with disjoint seeds, writes
/// `<dir>/{train,val,test}.pobd` and `<dir>/manifest.txt`; returns the manifest.
DatasetManifest generate_dataset(const std::filesystem::path& dir, const GenerateOptions& options);

}  // namespace lano
