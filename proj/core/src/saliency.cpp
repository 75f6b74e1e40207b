#include "layoutdiff/saliency.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "layoutdiff/error.hpp"

namespace layoutdiff {

SaliencyMap::SaliencyMap(Image pixels) : pixels_(std::move(pixels)) {
  if (pixels_.empty()) throw DomainError("saliency map must be nonempty");
  if (pixels_.channels != 1) throw DomainError("saliency map must be single-channel");
  for (double v : pixels_.data)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("saliency values must lie in [0, 1]");
}

SaliencyMap SaliencyMap::constant(int height, int width, double value) {
  return SaliencyMap(Image(height, width, 1, value));
}

SaliencyMap SaliencyMap::load(const std::filesystem::path& path) { return SaliencyMap(read_png(path, 1)); }

BinaryMask binarize(const SaliencyMap& map, double s) {
  if (!(s >= 0.0 && s < 1.0)) throw DomainError("binarization threshold must lie in [0, 1)");
  BinaryMask mask{map.height(), map.width(), {}};
  mask.bits.resize(static_cast<std::size_t>(map.height()) * map.width());
  for (int y = 0; y < map.height(); ++y)
    for (int x = 0; x < map.width(); ++x) mask.at(y, x) = map.at(y, x) > s ? 1 : 0;
  return mask;
}

SalientBoxSet extract_boxes(const BinaryMask& mask, int k_max, double min_area) {
  struct Component {
    long area = 0;
    std::size_t first_pixel = 0;
    int x0, y0, x1, y1;
  };
  const int h = mask.height;
  const int w = mask.width;
  std::vector<int> label(mask.bits.size(), -1);
  std::vector<Component> comps;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      if (!mask.bits[idx] || label[idx] >= 0) continue;
      const int id = static_cast<int>(comps.size());
      Component c{0, idx, x, y, x, y};
      label[idx] = id;
      stack.assign(1, {y, x});
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        ++c.area;
        c.x0 = std::min(c.x0, cx);
        c.x1 = std::max(c.x1, cx);
        c.y0 = std::min(c.y0, cy);
        c.y1 = std::max(c.y1, cy);
        constexpr int dy[4] = {-1, 1, 0, 0};
        constexpr int dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k];
          const int nx = cx + dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
          if (mask.bits[n] && label[n] < 0) {
            label[n] = id;
            stack.emplace_back(ny, nx);
          }
        }
      }
      comps.push_back(c);
    }
  }

  const double total = static_cast<double>(h) * w;
  std::erase_if(comps, [&](const Component& c) { return c.area / total < min_area; });
  std::sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    return a.area != b.area ? a.area > b.area : a.first_pixel < b.first_pixel;
  });
  if (static_cast<int>(comps.size()) > k_max) comps.resize(static_cast<std::size_t>(std::max(k_max, 0)));

  SalientBoxSet out;
  for (const auto& c : comps)
    out.boxes.push_back(Box::from_edges(static_cast<double>(c.x0) / w, static_cast<double>(c.y0) / h,
                                        static_cast<double>(c.x1 + 1) / w, static_cast<double>(c.y1 + 1) / h));
  return out;
}

SalientBoxSet extract_boxes(const SaliencyMap& map, const BoxExtractionParams& params) {
  auto set = extract_boxes(binarize(map, params.threshold), params.k_max, params.min_area);
  set.threshold_used = params.threshold;
  return set;
}

SaliencyMap fuse_max(const SaliencyMap& a, const SaliencyMap& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DomainError("fuse_max needs saliency maps of identical dimensions");
  Image out = a.image();
  const auto& bd = b.image().data;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(out.data[i], bd[i]);
  return SaliencyMap(std::move(out));
}

std::string boxes_to_json(const SalientBoxSet& set) {
  nlohmann::json j;
  j["threshold"] = set.threshold_used;
  j["boxes"] = nlohmann::json::array();
  for (const auto& b : set.boxes) j["boxes"].push_back({b.x, b.y, b.w, b.h});
  return j.dump(2);
}

}  // namespace layoutdiff
