#pragma once

// Mask-to-predict training: one-step loss on observed points, artificial
// masks on the inputs, consistency with the clean-input prediction, AdamW
// and a one-cycle learning-rate schedule.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lano/keyvalue.hpp"
#include "lano/masking.hpp"
#include "lano/model.hpp"
#include "lano/pdegen.hpp"

namespace lano {

struct TrainConfig {
  double learning_rate = 1e-3;  // peak of the one-cycle schedule
  double weight_decay = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  MaskSpec mask;                     // training observation masks
  bool mpt = true;
  double mpt_max_rate = -1.0;        // artificial rate ~ U[0, this]; < 0 uses mask.missing_rate
  bool mpt_cross_pattern = false;
  double consistency_weight = 0.1;   // lambda

  std::uint64_t seed = 0;
  /// Windows drawn per trajectory and epoch; 0 uses every window.
  std::size_t windows_per_trajectory = 0;
  /// Validation windows per trajectory (the last ones); 0 uses every window.
  std::size_t val_windows = 0;
  /// Interpolate-then-train reference: inputs are cubic-filled and the model
  /// sees a full mask.
  bool interp_fill = false;
  /// When false the wall_seconds column is written as 0 so logs are
  /// byte-identical across runs.
  bool record_wall_time = true;

  void validate() const;
  KeyValue to_keyvalue() const;
  static TrainConfig from_keyvalue(const KeyValue& kv);
};

/// Mean squared error over points with mask = 1, averaged over channels.
/// pred and target are [N, C_phys].
template <typename T>
Tensor<T> masked_one_step_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::vector<std::uint8_t>& mask);

/// Mean squared difference over the whole domain; no gradient reaches
/// `pred_clean`.
template <typename T>
Tensor<T> consistency_loss(const Tensor<T>& pred_masked, const Tensor<T>& pred_clean);

/// Supervised loss on `mask` of the prediction from `mask_aug`-masked inputs,
/// plus lambda times the consistency with `clean_pred` (the prediction from
/// `mask`-masked inputs, used as a fixed target). `clean_pred` may be
/// undefined when lambda is 0.
template <typename T>
Tensor<T> mpt_loss(const ModelParams<T>& params, const ModelConfig& config, std::size_t height, std::size_t width,
                   const std::vector<T>& frames, const Tensor<T>& target, const std::vector<std::uint8_t>& mask,
                   const std::vector<std::uint8_t>& mask_aug, double lambda, const Tensor<T>& clean_pred);

/// Learning rate at `step` of `total_steps`: cosine ramp from peak/div_factor
/// to the peak at round(pct_start * (total - 1)), then cosine decay to
/// peak/final_div_factor at the last step.
double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& config);

/// Decoupled-weight-decay Adam over a parameter set.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay);
  explicit AdamW(const TrainConfig& c) : AdamW(c.beta1, c.beta2, c.adam_eps, c.weight_decay) {}

  /// Applies one update from the accumulated gradients. Throws
  /// TrainingDiverged naming the first parameter with a non-finite gradient.
  template <typename T>
  void step(ModelParams<T>& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  double b1_, b2_, eps_, wd_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_rel_l2 = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams<float> best_params;
  double best_val_rel_l2 = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochMetrics> history;
};

struct TrainData {
  std::vector<Trajectory> train;
  std::vector<Trajectory> val;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;   // best-validation parameters
  std::optional<std::filesystem::path> metrics_csv;
};

/// Fixed training mask of trajectory `index`; also used for validation with
/// a different stream.
ObservationMask trajectory_mask(const MaskSpec& spec, std::size_t height, std::size_t width, std::uint64_t seed,
                                std::uint64_t stream, std::size_t index);

/// Mean full-domain relative L2 of one-step predictions over `windows` last
/// windows of each trajectory (0 = all), each trajectory observed through its
/// own mask.
double one_step_error(const ModelParams<float>& params, const ModelConfig& config,
                      const std::vector<Trajectory>& trajectories, const std::vector<ObservationMask>& masks,
                      std::size_t windows, bool interp);

TrainResult train(const TrainData& data, const ModelConfig& model_config, const TrainConfig& train_config,
                  const TrainOutputs& outputs = {});

extern const char* const kMetricsHeader;

}  // namespace lano
