#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "layoutdiff/diffusion.hpp"
#include "layoutdiff/model.hpp"
#include "layoutdiff/training.hpp"

namespace layoutdiff {

/// Binary container: "LDIFFCKP", format version, a JSON header (model and
/// train configs, categories, schedule, run state, tensor table), then raw
/// little-endian doubles for parameters and Adam moments.
struct Checkpoint {
  ModelConfig model;
  CategorySet categories = CategorySet::poster();
  int schedule_steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  TrainConfig train;
  TrainState state;
  std::vector<std::pair<std::string, Mat>> params;

  NoiseSchedule schedule() const { return make_schedule(schedule_steps, beta_start, beta_end); }
};

inline constexpr int kCheckpointVersion = 1;

Checkpoint make_checkpoint(const Denoiser& model, const CategorySet& cats, const NoiseSchedule& sched,
                           const TrainConfig& cfg, const TrainState& state);

/// Atomic: writes a temporary file and renames it.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws IoError on malformed files and ConfigError on a version mismatch.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies parameters into `model`. Throws ConfigError listing every
/// differing config field, or a missing / misshapen tensor.
void load_parameters(Denoiser& model, const Checkpoint& ckpt);

/// Builds a model from the stored config and loads its parameters.
Denoiser restore_model(const Checkpoint& ckpt);

/// Names of ModelConfig fields that differ, formatted "field: a vs b".
std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b);

}  // namespace layoutdiff
