#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layoutdiff/validation/pipeline.hpp"

namespace layoutdiff::validation {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  /// Measured values next to their thresholds.
  std::string detail;
  double seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 7;
  /// Scratch space; two pipeline runs go to run_a/ and run_b/.
  std::filesystem::path work_dir = "acceptance_out";
  LogFn log;
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts);

/// One "[PASS]/[FAIL] <id>. <name>: <detail>" line per criterion; no timings,
/// so identical runs give identical tables.
std::string format_table(const std::vector<CriterionResult>& results);

}  // namespace layoutdiff::validation
