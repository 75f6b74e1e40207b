#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "layoutdiff/diffusion.hpp"
#include "layoutdiff/metrics.hpp"

namespace layoutdiff::validation {

using LogFn = std::function<void(const std::string&)>;

struct PipelineConfig {
  std::uint64_t seed = 7;
  int n_samples = 256;
  int n_eval = 64;
  int plan_steps = 25;
  PlanMode plan = PlanMode::quad;
  double refine_variance = 0.01;
  int renders = 8;
  /// Overrides the preset epoch count when positive (smoke runs).
  int epochs = 0;
};

struct PipelineResult {
  std::vector<double> losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  metrics::Report generated;
  metrics::Report ground_truth;
  int refine_better = 0;
  int refine_total = 0;
  double seconds = 0.0;
};

/// Desk-scale experiment in `dir`: synthetic corpus, unconditional training,
/// sampling on held-out canvases, metrics, refinement and renders. Every
/// output except train_log.jsonl is a pure function of the config.
PipelineResult run_pipeline(const std::filesystem::path& dir, const PipelineConfig& cfg, const LogFn& log = {});

/// Files under `dir` that must be bitwise reproducible, relative and sorted.
std::vector<std::filesystem::path> reproducible_outputs(const std::filesystem::path& dir);

}  // namespace layoutdiff::validation
