#pragma once

// Oracle checks run at 64-bit precision on untrained, randomly initialized
// models. Each check reports its worst observed metric against a threshold.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lano {

struct VerifyCheck {
  std::string name;
  bool passed = false;
  double metric = 0.0;
  double threshold = 0.0;
  double seconds = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::size_t kernel_instances = 100;
  std::size_t coverage_seeds = 100;
  /// Negative control: the model skips decode-map normalization, which the
  /// kernel oracle must detect.
  bool corrupt_decode_normalization = false;
  /// Scratch directory for round-trip files; empty uses the system temp dir.
  std::filesystem::path scratch_dir;
};

/// Every differentiable primitive against central finite differences.
VerifyCheck check_primitive_gradients(const VerifyOptions& o);
/// Matrix product against a triple loop.
VerifyCheck check_matmul_oracle(const VerifyOptions& o);
/// Full MPT loss gradient of a D=2, C=16, L=4, 2-head model on an 8x8 grid
/// against central finite differences (step 1e-5); metric is the worst
/// parameter-group relative error.
VerifyCheck check_model_gradients(const VerifyOptions& o);
/// Propagator branch against the dense kernel contraction on random
/// instances with the token mixer disabled; also checks that kernel columns
/// vanish at unobserved points and the residual identity term.
VerifyCheck check_kernel_oracle(const VerifyOptions& o);
/// Same comparison with the attention mixer folded into the kernel.
VerifyCheck check_kernel_oracle_attention(const VerifyOptions& o);
/// 64x64 patch-4 masks at 50% missing, k=3, 8 layers: the propagated mask
/// equals the 8-step Chebyshev dilation of the observed set, hence is all
/// ones whenever every hole has radius <= 8. The metric counts cells where
/// propagation and dilation disagree; the detail reports how many masks are
/// not fully covered.
VerifyCheck check_mask_coverage(const VerifyOptions& o);
/// Dataset, mask and checkpoint files survive write/read/write byte for byte.
VerifyCheck check_roundtrips(const VerifyOptions& o);
/// Two identical short training runs produce identical metrics logs.
VerifyCheck check_training_determinism(const VerifyOptions& o);
/// Single Fourier mode under viscosity only decays as exp(-nu |k|^2 t).
VerifyCheck check_ns_viscous_decay(const VerifyOptions& o);
/// Mean vorticity is conserved per step with forcing and advection on.
VerifyCheck check_ns_mean_conservation(const VerifyOptions& o);
/// Without viscosity and forcing, kinetic energy drifts < 1e-6 per step.
VerifyCheck check_ns_energy(const VerifyOptions& o);
/// Diffusion only: spatial means conserved per step.
VerifyCheck check_dr_mean_conservation(const VerifyOptions& o);
/// A constant field follows the reaction ODE exactly.
VerifyCheck check_dr_reaction_ode(const VerifyOptions& o);

std::vector<std::string> verify_check_names();
/// Runs the named checks ("all" for every one).
std::vector<VerifyCheck> run_verify(const VerifyOptions& o, const std::vector<std::string>& names = {"all"});
void write_verify_csv(const std::filesystem::path& path, const std::vector<VerifyCheck>& checks);

}  // namespace lano
