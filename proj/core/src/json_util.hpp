#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "layoutdiff/layout.hpp"
#include "layoutdiff/model.hpp"

namespace layoutdiff::detail {

nlohmann::json categories_to_json(const CategorySet& cats);
CategorySet categories_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::string read_text(const std::filesystem::path& path);
/// Writes to `<path>.tmp` and renames over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace layoutdiff::detail
