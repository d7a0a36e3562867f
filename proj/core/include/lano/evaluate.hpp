#pragma once

// Test-split evaluation under fresh masks, the train/test rate matrix and the
// ablation harness. Reports are written as CSV.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/pdegen.hpp"
#include "lano/training.hpp"

namespace lano {

struct EvalRow {
  std::string label;  // free-form tag (ablation value, matrix cell, ...)
  MaskPattern pattern = MaskPattern::pointwise;
  std::size_t patch_size = 1;
  double train_rate = 0.0;
  double test_rate = 0.0;
  double mean_rel_l2 = 0.0;
  double median_rel_l2 = 0.0;
  double std_rel_l2 = 0.0;  // spread over trajectories
  std::size_t samples = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::string fingerprint;  // of the model and evaluation settings

  void write_csv(const std::filesystem::path& path) const;
};

struct EvalOptions {
  std::vector<MaskPattern> patterns{MaskPattern::patchwise};
  std::vector<double> test_rates{0.25};
  std::size_t patch_size = 4;
  std::uint64_t seed = 0;
  /// Windows per test trajectory (the last ones); 0 uses every window.
  std::size_t windows = 0;
  double train_rate = 0.0;  // recorded in the report only
  bool interp_fill = false;
  std::string label;
};

/// One row per (pattern, test rate). Each test trajectory gets a fresh mask
/// seeded from (seed, rate index, trajectory index).
EvalReport evaluate(const ModelParams<float>& params, const ModelConfig& config, const std::vector<Trajectory>& test,
                    const EvalOptions& options);

struct ExperimentData {
  std::vector<Trajectory> train, val, test;
};

struct AblationOptions {
  /// tokens, wo, mixer, patch, mpt.
  std::string axis;
  /// Axis values; empty selects the defaults of the axis (tokens 1,8,16,32,64;
  /// wo full,BF,TM,MPT; mixer attention,mlp; patch 2,4,8; mpt off,on).
  std::vector<std::string> values;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
};

/// Trains and evaluates one configuration per axis value. Model and train
/// configs are the base; the axis value overrides one field.
EvalReport ablate(const ExperimentData& data, const AblationOptions& options);

struct BenchMatrixOptions {
  ModelConfig model;
  TrainConfig train;
  std::vector<MaskPattern> patterns{MaskPattern::pointwise, MaskPattern::patchwise};
  std::size_t patch_size = 4;
  std::uint64_t eval_seed = 0;
  std::size_t windows = 0;
};

/// Train rates 5/25/50% tested at {5,25}, {25,50}, {50,75}% for each pattern:
/// 6 rows per pattern.
EvalReport bench_matrix(const ExperimentData& data, const BenchMatrixOptions& options);

}  // namespace lano
