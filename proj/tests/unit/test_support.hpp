#pragma once

#include <filesystem>
#include <string>

#include "layoutdiff/data.hpp"

namespace testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("layoutdiff_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small synthetic corpus shared by the data, training and CLI tests.
inline const std::filesystem::path& small_corpus() {
  static const std::filesystem::path root = [] {
    const auto p = scratch("corpus");
    layoutdiff::generate_synthetic(p, 40, 5);
    return p;
  }();
  return root;
}

}  // namespace testing
