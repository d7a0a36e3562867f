#include "lano/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "lano/checkpoint.hpp"
#include "lano/error.hpp"
#include "lano/interp.hpp"
#include "lano/metrics.hpp"
#include "lano/ops.hpp"
#include "lano/rng.hpp"

namespace lano {

const char* const kMetricsHeader = "epoch,step,lr,train_loss,val_rel_l2,wall_seconds";

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValueError("train config: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(pct_start > 0.0 && pct_start < 1.0)) fail("pct_start must lie in (0, 1)");
  if (!(div_factor > 0.0) || !(final_div_factor > 0.0)) fail("division factors must be > 0");
  if (!(consistency_weight >= 0.0)) fail("consistency_weight must be >= 0");
  if (!(mask.missing_rate >= 0.0 && mask.missing_rate < 1.0)) fail("mask rate must lie in [0, 1)");
  if (mpt_max_rate >= 1.0) fail("mpt_max_rate must be < 1");
}

KeyValue TrainConfig::to_keyvalue() const {
  KeyValue kv;
  kv.set("learning_rate", learning_rate);
  kv.set("weight_decay", weight_decay);
  kv.set("epochs", static_cast<std::uint64_t>(epochs));
  kv.set("batch_size", static_cast<std::uint64_t>(batch_size));
  kv.set("pct_start", pct_start);
  kv.set("div_factor", div_factor);
  kv.set("final_div_factor", final_div_factor);
  kv.set("beta1", beta1);
  kv.set("beta2", beta2);
  kv.set("adam_eps", adam_eps);
  kv.set("mask_pattern", std::string(to_string(mask.pattern)));
  kv.set("mask_rate", mask.missing_rate);
  kv.set("mask_patch", static_cast<std::uint64_t>(mask.patch_size));
  kv.set("mpt", mpt);
  kv.set("mpt_max_rate", mpt_max_rate);
  kv.set("mpt_cross_pattern", mpt_cross_pattern);
  kv.set("consistency_weight", consistency_weight);
  kv.set("seed", seed);
  kv.set("windows_per_trajectory", static_cast<std::uint64_t>(windows_per_trajectory));
  kv.set("val_windows", static_cast<std::uint64_t>(val_windows));
  kv.set("interp_fill", interp_fill);
  kv.set("record_wall_time", record_wall_time);
  return kv;
}

TrainConfig TrainConfig::from_keyvalue(const KeyValue& kv) {
  TrainConfig c;
  auto d = [&](const char* k, double& v) { if (kv.has(k)) v = kv.get_double(k); };
  auto u = [&](const char* k, std::size_t& v) { if (kv.has(k)) v = kv.get_uint(k); };
  auto b = [&](const char* k, bool& v) { if (kv.has(k)) v = kv.get_bool(k); };
  d("learning_rate", c.learning_rate);
  d("weight_decay", c.weight_decay);
  u("epochs", c.epochs);
  u("batch_size", c.batch_size);
  d("pct_start", c.pct_start);
  d("div_factor", c.div_factor);
  d("final_div_factor", c.final_div_factor);
  d("beta1", c.beta1);
  d("beta2", c.beta2);
  d("adam_eps", c.adam_eps);
  if (kv.has("mask_pattern")) c.mask.pattern = parse_mask_pattern(kv.get("mask_pattern"));
  d("mask_rate", c.mask.missing_rate);
  u("mask_patch", c.mask.patch_size);
  b("mpt", c.mpt);
  d("mpt_max_rate", c.mpt_max_rate);
  b("mpt_cross_pattern", c.mpt_cross_pattern);
  d("consistency_weight", c.consistency_weight);
  if (kv.has("seed")) c.seed = kv.get_uint("seed");
  u("windows_per_trajectory", c.windows_per_trajectory);
  u("val_windows", c.val_windows);
  b("interp_fill", c.interp_fill);
  b("record_wall_time", c.record_wall_time);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> masked_one_step_loss(const Tensor<T>& pred, const Tensor<T>& target, const std::vector<std::uint8_t>& mask) {
  if (pred.shape() != target.shape() || pred.rank() != 2 || pred.dim(0) != mask.size()) {
    throw ShapeError("masked_one_step_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                     shape_string(target.shape()) + " (mask of " + std::to_string(mask.size()) + ")");
  }
  std::vector<T> m(mask.size());
  std::size_t observed = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    m[i] = mask[i] ? T(1) : T(0);
    observed += mask[i] ? 1 : 0;
  }
  if (observed == 0) throw ValueError("masked_one_step_loss: mask has no observed point");
  auto err = square(pred - target) * Tensor<T>({mask.size(), 1}, std::move(m));
  return scale(sum(err), static_cast<T>(1.0 / static_cast<double>(observed * pred.dim(1))));
}

template <typename T>
Tensor<T> consistency_loss(const Tensor<T>& pred_masked, const Tensor<T>& pred_clean) {
  if (pred_masked.shape() != pred_clean.shape()) {
    throw ShapeError("consistency_loss: shape mismatch " + shape_string(pred_masked.shape()) + " vs " +
                     shape_string(pred_clean.shape()));
  }
  return mean(square(pred_masked - stop_gradient(pred_clean)));
}

template <typename T>
Tensor<T> mpt_loss(const ModelParams<T>& params, const ModelConfig& config, std::size_t height, std::size_t width,
                   const std::vector<T>& frames, const Tensor<T>& target, const std::vector<std::uint8_t>& mask,
                   const std::vector<std::uint8_t>& mask_aug, double lambda, const Tensor<T>& clean_pred) {
  auto pred = lano_forward(height, width, frames, mask_aug, params, config);
  auto loss = masked_one_step_loss(pred, target, mask);
  if (lambda > 0.0) {
    if (!clean_pred.defined()) throw ValueError("mpt_loss: consistency term needs the clean prediction");
    loss = loss + scale(consistency_loss(pred, clean_pred), static_cast<T>(lambda));
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& c) {
  const double peak = c.learning_rate;
  const double initial = peak / c.div_factor;
  const double final_lr = peak / c.final_div_factor;
  if (total_steps <= 1) return peak;
  const std::size_t last = total_steps - 1;
  step = std::min(step, last);
  const auto peak_step = static_cast<std::size_t>(std::llround(c.pct_start * static_cast<double>(last)));
  auto cosine = [](double from, double to, double frac) {
    return to + (from - to) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  };
  if (step <= peak_step) {
    if (peak_step == 0) return peak;
    return cosine(initial, peak, static_cast<double>(step) / static_cast<double>(peak_step));
  }
  return cosine(peak, final_lr, static_cast<double>(step - peak_step) / static_cast<double>(last - peak_step));
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

template <typename T>
void AdamW::step(ModelParams<T>& params, double lr) {
  auto named = params.named();
  if (m_.empty()) {
    m_.resize(named.size());
    v_.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
      m_[i].assign(named[i].second->numel(), 0.0);
      v_[i].assign(named[i].second->numel(), 0.0);
    }
  }
  if (m_.size() != named.size()) throw ValueError("AdamW: parameter set changed between steps");
  for (auto& [name, t] : named) {
    if (!t->has_grad()) continue;
    for (T g : t->grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw TrainingDiverged("AdamW: non-finite gradient in parameter '" + name + "'");
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor<T>& p = *named[i].second;
    auto values = p.values();
    const bool has = p.has_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has ? static_cast<double>(p.grad()[j]) : 0.0;
      m[j] = b1_ * m[j] + (1.0 - b1_) * g;
      v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
      double theta = static_cast<double>(values[j]);
      theta *= 1.0 - lr * wd_;
      theta -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
      values[j] = static_cast<T>(theta);
    }
  }
}

template void AdamW::step<float>(ModelParams<float>&, double);
template void AdamW::step<double>(ModelParams<double>&, double);

// ---------------------------------------------------------------------------
// Loop
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kTrainMaskStream = 1;
constexpr std::uint64_t kValMaskStream = 2;
constexpr std::uint64_t kInitStream = 3;
constexpr std::uint64_t kShuffleStream = 4;
constexpr std::uint64_t kMptStream = 5;

struct Window {
  std::size_t traj;
  std::size_t index;  // frame index of the target
};

std::vector<float> history_frames(const Trajectory& t, std::size_t target, std::size_t history) {
  const std::size_t fs = t.frame_size();
  const auto first = t.frames.begin() + static_cast<std::ptrdiff_t>((target - history) * fs);
  return std::vector<float>(first, first + static_cast<std::ptrdiff_t>(history * fs));
}

Tensor<float> target_tensor(const Trajectory& t, std::size_t index) {
  const auto f = t.frame(index);
  return Tensor<float>({t.height * t.width, t.channels}, std::vector<float>(f.begin(), f.end()));
}

void check_data(const std::vector<Trajectory>& trajs, const ModelConfig& config, const char* split) {
  for (const auto& t : trajs) {
    if (t.channels != config.physical_channels) {
      throw ValueError(std::string(split) + " trajectory has " + std::to_string(t.channels) +
                       " channels, model expects " + std::to_string(config.physical_channels));
    }
    if (t.steps < config.history + 1) {
      throw ValueError(std::string(split) + " trajectory has " + std::to_string(t.steps) +
                       " frames, history " + std::to_string(config.history) + " needs at least one more");
    }
  }
}

std::string csv_row(const EpochMetrics& m) {
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", m.wall_seconds);
  return std::to_string(m.epoch) + "," + std::to_string(m.step) + "," + format_double(m.lr) + "," +
         format_double(m.train_loss) + "," + format_double(m.val_rel_l2) + "," + wall;
}

}  // namespace

ObservationMask trajectory_mask(const MaskSpec& spec, std::size_t height, std::size_t width, std::uint64_t seed,
                                std::uint64_t stream, std::size_t index) {
  return generate_mask(spec, height, width, mix_seed(mix_seed(seed, stream), index));
}

double one_step_error(const ModelParams<float>& params, const ModelConfig& config,
                      const std::vector<Trajectory>& trajectories, const std::vector<ObservationMask>& masks,
                      std::size_t windows, bool interp) {
  NoGradScope<float> no_grad(nullptr);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    const std::size_t first = windows == 0 ? config.history : std::max(config.history, t.steps - windows);
    for (std::size_t w = first; w < t.steps; ++w) {
      auto frames = history_frames(t, w, config.history);
      auto bits = masks[i].bits;
      if (interp) {
        frames = interp_fill(frames, t.channels, masks[i]);
        std::fill(bits.begin(), bits.end(), std::uint8_t{1});
      }
      auto pred = lano_forward(t.height, t.width, frames, bits, params, config);
      total += relative_l2(pred.values(), t.frame(w));
      ++count;
    }
  }
  if (count == 0) throw ValueError("one_step_error: no windows to evaluate");
  return total / static_cast<double>(count);
}

TrainResult train(const TrainData& data, const ModelConfig& mc, const TrainConfig& tc, const TrainOutputs& outputs) {
  mc.validate();
  tc.validate();
  if (data.train.empty()) throw ValueError("train: empty training split");
  check_data(data.train, mc, "train");
  check_data(data.val, mc, "val");

  std::vector<ObservationMask> train_masks, val_masks;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    train_masks.push_back(trajectory_mask(tc.mask, data.train[i].height, data.train[i].width, tc.seed,
                                          kTrainMaskStream, i));
  }
  for (std::size_t i = 0; i < data.val.size(); ++i) {
    val_masks.push_back(trajectory_mask(tc.mask, data.val[i].height, data.val[i].width, tc.seed, kValMaskStream, i));
  }

  auto params = init_params<float>(mc, mix_seed(tc.seed, kInitStream));
  params.set_requires_grad(true);
  AdamW opt(tc);

  const bool use_mpt = tc.mpt && !tc.interp_fill;
  const double max_rate = std::min(tc.mpt_max_rate < 0.0 ? tc.mask.missing_rate : tc.mpt_max_rate, 0.999);
  const double lambda = use_mpt ? tc.consistency_weight : 0.0;

  std::size_t per_epoch = 0;
  for (const auto& t : data.train) {
    const std::size_t n = t.steps - mc.history;
    per_epoch += tc.windows_per_trajectory ? std::min(n, tc.windows_per_trajectory) : n;
  }
  const std::size_t steps_per_epoch = (per_epoch + tc.batch_size - 1) / tc.batch_size;
  const std::size_t total_steps = steps_per_epoch * tc.epochs;

  std::ofstream csv;
  if (outputs.metrics_csv) {
    csv.open(*outputs.metrics_csv, std::ios::trunc);
    if (!csv) throw Error("cannot open '" + outputs.metrics_csv->string() + "' for writing");
    csv << kMetricsHeader << '\n';
  }

  TrainResult result;
  result.best_params = params.clone();
  result.best_val_rel_l2 = std::numeric_limits<double>::infinity();
  const auto start = std::chrono::steady_clock::now();
  std::size_t step = 0;
  Rng shuffle_rng(mix_seed(tc.seed, kShuffleStream));

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<Window> windows;
    windows.reserve(per_epoch);
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      std::vector<std::size_t> idx;
      for (std::size_t w = mc.history; w < data.train[i].steps; ++w) idx.push_back(w);
      std::size_t take = idx.size();
      if (tc.windows_per_trajectory && tc.windows_per_trajectory < idx.size()) {
        take = tc.windows_per_trajectory;
        for (std::size_t k = 0; k < take; ++k) {
          std::swap(idx[k], idx[k + shuffle_rng.uniform_index(idx.size() - k)]);
        }
      }
      for (std::size_t k = 0; k < take; ++k) windows.push_back({i, idx[k]});
    }
    for (std::size_t k = windows.size(); k > 1; --k) {
      std::swap(windows[k - 1], windows[shuffle_rng.uniform_index(k)]);
    }

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b0 = 0; b0 < windows.size(); b0 += tc.batch_size) {
      const std::size_t b1 = std::min(windows.size(), b0 + tc.batch_size);
      const float inv_b = 1.0f / static_cast<float>(b1 - b0);
      for (std::size_t b = b0; b < b1; ++b) {
        const auto& win = windows[b];
        const auto& traj = data.train[win.traj];
        const auto& m = train_masks[win.traj];
        auto frames = history_frames(traj, win.index, mc.history);
        const auto target = target_tensor(traj, win.index);
        auto mask_in = m.bits;
        auto mask_aug = m.bits;
        if (tc.interp_fill) {
          frames = interp_fill(frames, traj.channels, m);
          std::fill(mask_in.begin(), mask_in.end(), std::uint8_t{1});
          mask_aug = mask_in;
        } else if (use_mpt) {
          Rng r(mix_seed(mix_seed(tc.seed, kMptStream), step * tc.batch_size + (b - b0)));
          const double rate = r.uniform(0.0, max_rate);
          auto aug = mpt_augment(m, rate, r.next_u64(), MptOptions{tc.mpt_cross_pattern});
          if (aug.augmented.observed() > 0) mask_aug = std::move(aug.augmented.bits);
        }
        Tensor<float> clean;
        if (lambda > 0.0) {
          NoGradScope<float> no_grad(nullptr);
          clean = lano_forward(traj.height, traj.width, frames, mask_in, params, mc);
        }
        GradientTape<float> tape;
        TapeScope<float> scope(tape);
        auto loss = mpt_loss(params, mc, traj.height, traj.width, frames, target, m.bits, mask_aug, lambda, clean);
        const double lv = loss.item();
        if (!std::isfinite(lv)) {
          throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + ": non-finite loss");
        }
        loss_sum += lv;
        tape.backward(scale(loss, inv_b));
      }
      lr = one_cycle_lr(step, total_steps, tc);
      opt.step(params, lr);
      params.zero_grad();
      ++step;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.step = step;
    em.lr = lr;
    em.train_loss = loss_sum / static_cast<double>(windows.size());
    em.val_rel_l2 = data.val.empty() ? em.train_loss
                                     : one_step_error(params, mc, data.val, val_masks, tc.val_windows, tc.interp_fill);
    em.wall_seconds =
        tc.record_wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;
    result.history.push_back(em);
    if (csv.is_open()) csv << csv_row(em) << '\n' << std::flush;

    if (!std::isfinite(em.val_rel_l2)) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ": non-finite validation error");
    }
    if (em.val_rel_l2 < result.best_val_rel_l2) {
      result.best_val_rel_l2 = em.val_rel_l2;
      result.best_epoch = epoch;
      result.best_params = params.clone();
      if (outputs.checkpoint) save_checkpoint(*outputs.checkpoint, mc, result.best_params, tc.to_keyvalue());
    }
  }
  result.best_params.set_requires_grad(false);
  return result;
}

#define LANO_TRAINING_INSTANTIATE(T)                                                                         \
  template Tensor<T> masked_one_step_loss<T>(const Tensor<T>&, const Tensor<T>&,                            \
                                             const std::vector<std::uint8_t>&);                             \
  template Tensor<T> consistency_loss<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mpt_loss<T>(const ModelParams<T>&, const ModelConfig&, std::size_t, std::size_t,       \
                                 const std::vector<T>&, const Tensor<T>&, const std::vector<std::uint8_t>&, \
                                 const std::vector<std::uint8_t>&, double, const Tensor<T>&);

LANO_TRAINING_INSTANTIATE(float)
LANO_TRAINING_INSTANTIATE(double)

}  // namespace lano
