#include "layoutdiff/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "layoutdiff/error.hpp"

namespace layoutdiff {

namespace {

std::vector<int> resolve(const std::vector<std::string>& all, const std::vector<std::string>& wanted) {
  std::vector<int> out;
  for (const auto& name : wanted) {
    auto it = std::find(all.begin(), all.end(), name);
    if (it == all.end()) throw DomainError("category '" + name + "' is not in the category set");
    const int index = static_cast<int>(it - all.begin());
    if (index == 0) throw DomainError("the empty category cannot be flagged");
    out.push_back(index);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

CategorySet::CategorySet(const std::vector<std::string>& names, const std::vector<std::string>& underlay_names,
                         const std::vector<std::string>& text_names) {
  names_.reserve(names.size() + 1);
  names_.push_back("empty");
  for (const auto& n : names) {
    if (n.empty()) throw DomainError("category names must be nonempty");
    if (std::find(names_.begin(), names_.end(), n) != names_.end())
      throw DomainError("duplicate category name '" + n + "'");
    names_.push_back(n);
  }
  underlay_ = resolve(names_, underlay_names);
  text_ = resolve(names_, text_names);
}

CategorySet CategorySet::poster() { return CategorySet({"logo", "text", "underlay"}, {"underlay"}, {"text"}); }

CategorySet CategorySet::poster_with_embellishment() {
  return CategorySet({"logo", "text", "underlay", "embellishment"}, {"underlay"}, {"text"});
}

const std::string& CategorySet::name(int index) const {
  if (!valid(index)) throw DomainError("category index " + std::to_string(index) + " out of range");
  return names_[static_cast<std::size_t>(index)];
}

int CategorySet::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw DomainError("unknown category '" + std::string(name) + "'");
  return static_cast<int>(it - names_.begin());
}

bool CategorySet::is_underlay(int index) const {
  return std::binary_search(underlay_.begin(), underlay_.end(), index);
}

bool CategorySet::is_text(int index) const { return std::binary_search(text_.begin(), text_.end(), index); }

Box clamp_box(const Box& box) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  return {c(box.x), c(box.y), c(box.w), c(box.h)};
}

LayoutTensor tokenize(const Layout& layout, const CategorySet& cats, int n_max) {
  if (n_max < 1) throw DomainError("n_max must be positive");
  if (static_cast<int>(layout.elements.size()) > n_max)
    throw CapacityError("layout has " + std::to_string(layout.elements.size()) + " elements, capacity is " +
                        std::to_string(n_max));
  const int n_cat = cats.size();
  LayoutTensor out{Mat::Constant(n_max, n_cat + 4, -1.0)};
  // Padding row: one-hot on the empty category, zero box.
  out.values.col(0).setConstant(1.0);
  for (std::size_t i = 0; i < layout.elements.size(); ++i) {
    const auto& el = layout.elements[i];
    if (!cats.valid(el.category)) throw DomainError("invalid category index " + std::to_string(el.category));
    if (el.empty()) continue;
    const auto r = static_cast<Eigen::Index>(i);
    out.values(r, 0) = -1.0;
    out.values(r, el.category) = 1.0;
    const Box b = clamp_box(el.box);
    for (int k = 0; k < 4; ++k) out.values(r, n_cat + k) = to_signed(b[k]);
  }
  return out;
}

std::vector<LayoutElement> decode_rows(const LayoutTensor& tensor, const CategorySet& cats) {
  const int n_cat = cats.size();
  if (tensor.cols() != n_cat + 4)
    throw DomainError("tensor has " + std::to_string(tensor.cols()) + " columns, expected " +
                      std::to_string(n_cat + 4));
  if (!tensor.values.allFinite()) throw NumericError("layout tensor contains NaN or Inf");
  std::vector<LayoutElement> rows(static_cast<std::size_t>(tensor.rows()));
  for (int r = 0; r < tensor.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < n_cat; ++c)
      if (tensor.values(r, c) > tensor.values(r, best)) best = c;
    auto& el = rows[static_cast<std::size_t>(r)];
    el.category = best;
    if (best == 0) continue;
    for (int k = 0; k < 4; ++k) el.box[k] = std::clamp(to_unit(tensor.values(r, n_cat + k)), 0.0, 1.0);
  }
  return rows;
}

Layout detokenize(const LayoutTensor& tensor, const CategorySet& cats) {
  Layout out;
  for (const auto& el : decode_rows(tensor, cats))
    if (!el.empty()) out.elements.push_back(el);
  return out;
}

Layout canonicalize(const Layout& layout) {
  Layout out = layout;
  for (auto& el : out.elements) el.box = el.empty() ? Box{} : clamp_box(el.box);
  std::stable_partition(out.elements.begin(), out.elements.end(), [](const LayoutElement& e) { return !e.empty(); });
  return out;
}

std::string layout_to_json(const Layout& layout, const CategorySet& cats) {
  nlohmann::json j;
  j["canvas"] = {{"h", layout.canvas_h}, {"w", layout.canvas_w}};
  j["elements"] = nlohmann::json::array();
  for (const auto& el : layout.elements)
    j["elements"].push_back({{"category", cats.name(el.category)}, {"box", {el.box.x, el.box.y, el.box.w, el.box.h}}});
  return j.dump(2);
}

Layout layout_from_json(std::string_view text, const CategorySet& cats) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed layout JSON: ") + e.what());
  }
  Layout out;
  try {
    out.canvas_h = j.at("canvas").at("h").get<int>();
    out.canvas_w = j.at("canvas").at("w").get<int>();
    for (const auto& e : j.at("elements")) {
      LayoutElement el;
      el.category = cats.index_of(e.at("category").get<std::string>());
      const auto& b = e.at("box");
      if (!b.is_array() || b.size() != 4) throw IoError("element box must have four numbers");
      for (int k = 0; k < 4; ++k) el.box[k] = b.at(static_cast<std::size_t>(k)).get<double>();
      out.elements.push_back(el);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("layout JSON does not match schema: ") + e.what());
  }
  return out;
}

void write_layout(const std::filesystem::path& path, const Layout& layout, const CategorySet& cats) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << layout_to_json(layout, cats) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

Layout read_layout(const std::filesystem::path& path, const CategorySet& cats) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return layout_from_json(ss.str(), cats);
}

}  // namespace layoutdiff

namespace layoutdiff {

PixelRect pixel_rect(const Box& box, int height, int width) {
  auto lo = [](double edge, int n) { return std::clamp(static_cast<int>(std::ceil(edge * n - 0.5)), 0, n); };
  return {lo(box.left(), width), lo(box.top(), height), lo(box.right(), width), lo(box.bottom(), height)};
}

}  // namespace layoutdiff
