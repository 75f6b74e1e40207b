#include "json_util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "layoutdiff/error.hpp"

namespace layoutdiff::detail {

nlohmann::json categories_to_json(const CategorySet& cats) {
  nlohmann::json names = nlohmann::json::array(), under = nlohmann::json::array(), text = nlohmann::json::array();
  for (int i = 1; i < cats.size(); ++i) names.push_back(cats.name(i));
  for (int i : cats.underlay_indices()) under.push_back(cats.name(i));
  for (int i : cats.text_indices()) text.push_back(cats.name(i));
  return {{"names", names}, {"underlay", under}, {"text", text}};
}

CategorySet categories_from_json(const nlohmann::json& j) {
  try {
    return CategorySet(j.at("names").get<std::vector<std::string>>(), j.at("underlay").get<std::vector<std::string>>(),
                       j.at("text").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed category set: ") + e.what());
  }
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},         {"n_heads", c.n_heads},         {"ffn_dim", c.ffn_dim},
          {"img_ffn_dim", c.img_ffn_dim}, {"enc_layers", c.enc_layers},   {"dec_layers", c.dec_layers},
          {"img_layers", c.img_layers},   {"cgbfp_layers", c.cgbfp_layers}, {"cgbfp_queries", c.cgbfp_queries},
          {"patch_size", c.patch_size},   {"img_h", c.img_h},             {"img_w", c.img_w},
          {"n_max", c.n_max},             {"n_categories", c.n_categories}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_model = j.at("d_model");
    c.n_heads = j.at("n_heads");
    c.ffn_dim = j.at("ffn_dim");
    c.img_ffn_dim = j.at("img_ffn_dim");
    c.enc_layers = j.at("enc_layers");
    c.dec_layers = j.at("dec_layers");
    c.img_layers = j.at("img_layers");
    c.cgbfp_layers = j.at("cgbfp_layers");
    c.cgbfp_queries = j.at("cgbfp_queries");
    c.patch_size = j.at("patch_size");
    c.img_h = j.at("img_h");
    c.img_w = j.at("img_w");
    c.n_max = j.at("n_max");
    c.n_categories = j.at("n_categories");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace layoutdiff::detail
