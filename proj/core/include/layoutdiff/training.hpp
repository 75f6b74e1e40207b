#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layoutdiff/data.hpp"
#include "layoutdiff/diffusion.hpp"
#include "layoutdiff/model.hpp"
#include "layoutdiff/rng.hpp"

namespace layoutdiff {

struct TrainConfig {
  int epochs = 400;
  int batch_size = 32;
  double learning_rate = 3e-4;
  PlanMode t_sampling = PlanMode::uniform;
  Task task = Task::uncond;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  /// In epochs; 0 writes only the final checkpoint.
  int save_every = 0;
  /// In epochs; 0 disables validation.
  int val_every = 0;
  /// Each draw of a training sample picks one of its four mirror images.
  bool mirror_augment = false;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// desk: 32 / 3e-4 / 400 epochs with mirror augmentation; pku: 32 / 1e-4 / 500; cgl: 128 / 2e-4 / 500.
/// Constrained tasks switch to 400 epochs with quad step sampling.
TrainConfig train_preset(std::string_view name, Task task = Task::uncond);

/// Mean squared error over every entry.
double loss(const Mat& eps, const Mat& eps_hat);

/// uniform: integer uniform on [1, T]; quad: ceil(T * u^2), u uniform on (0, 1].
int sample_timestep(int steps, PlanMode mode, Rng& rng);

/// Adam moments, one pair per parameter in store order.
struct AdamState {
  std::vector<Mat> m, v;
  long step = 0;
};

/// Clips the global gradient norm and applies one Adam update.
/// Returns the pre-clip norm.
double adam_update(nn::ParamStore& params, AdamState& state, double lr, double clip);

/// Network inputs and regression targets for one batch.
struct TrainingBatch {
  Mat x_t, target;
  /// 1 where the loss is scored, 0 on entries given as conditions.
  Mat weight;
  std::vector<int> steps;
  Conditioning cond;
};

/// Draws t, the noise and (for constrained tasks) a mask per sample, in batch
/// order. Masked entries of x_t hold the clean x0 values.
TrainingBatch prepare_batch(std::span<const PreparedSample* const> batch, const ModelConfig& mc,
                            const NoiseSchedule& sched, const CategorySet& cats, const TrainConfig& cfg, Rng& rng);

/// One optimization step on a batch. Constrained tasks draw a fresh mask per
/// sample, feed the clean values at masked entries and score only the rest;
/// a batch whose masks cover everything changes nothing and returns 0.
/// Throws NumericError on a non-finite loss.
double train_step(Denoiser& model, std::span<const PreparedSample* const> batch, const NoiseSchedule& sched,
                  const CategorySet& cats, const TrainConfig& cfg, AdamState& adam, Rng& rng);

/// Mean loss over `samples` with frozen parameters; its randomness comes
/// from `seed` alone.
double validation_loss(const Denoiser& model, std::span<const PreparedSample> samples, const NoiseSchedule& sched,
                       const CategorySet& cats, const TrainConfig& cfg, std::uint64_t seed);

/// Everything besides parameters needed to continue a run.
struct TrainState {
  int epoch = 0;
  long step = 0;
  std::string rng_state;
  AdamState adam;
};

struct TrainRecord {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;
  std::optional<double> val_loss;
};

struct TrainOptions {
  /// Receives checkpoint.bin and train_log.jsonl; empty disables both.
  std::filesystem::path out_dir;
  /// Continue from out_dir/checkpoint.bin when it exists.
  bool resume = false;
  /// Stop after this many epochs in this call (for tests); 0 = run to cfg.epochs.
  int max_epochs = 0;
  std::function<void(const TrainRecord&)> on_record;
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<double> val_losses;
  TrainState state;
};

/// Throws ConfigError when `train_set` is empty.
TrainResult train(Denoiser& model, const NoiseSchedule& sched, const CategorySet& cats,
                  std::span<const PreparedSample> train_set, std::span<const PreparedSample> val_set,
                  const TrainConfig& cfg, const TrainOptions& opts = {});

}  // namespace layoutdiff
