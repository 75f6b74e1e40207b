#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "layoutdiff/data.hpp"
#include "layoutdiff/error.hpp"
#include "layoutdiff/metrics.hpp"
#include "test_support.hpp"

using namespace layoutdiff;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Minimal valid sample written by hand.
void write_sample(const fs::path& root, const std::string& id, int elements) {
  fs::create_directories(root / "canvases");
  fs::create_directories(root / "saliency");
  fs::create_directories(root / "layouts");
  write_png(root / "canvases" / (id + ".png"), Image(16, 12, 3, 0.5));
  write_png(root / "saliency" / (id + ".png"), Image(16, 12, 1, 0.1));
  Layout l;
  l.canvas_h = 16;
  l.canvas_w = 12;
  for (int i = 0; i < elements; ++i) l.elements.push_back({1 + i % 3, {0.5, 0.05 + 0.08 * i, 0.3, 0.05}});
  write_layout(root / "layouts" / (id + ".json"), l, CategorySet::poster());
}

}  // namespace

TEST_CASE("8:1:1 split of 100 samples, oversize samples excluded") {
  const auto root = testing::scratch("ingest");
  for (int i = 0; i < 100; ++i) write_sample(root, "s" + std::to_string(1000 + i), 3);
  write_sample(root, "big", 12);
  const CorpusManifest m = ingest(root, CategorySet::poster(), 4);
  CHECK(m.ids(Split::train).size() == 80);
  CHECK(m.ids(Split::val).size() == 10);
  CHECK(m.ids(Split::test).size() == 10);
  REQUIRE(m.excluded.size() == 1);
  CHECK(m.excluded[0].id == "big");

  std::set<std::string> seen;
  for (Split s : {Split::train, Split::val, Split::test})
    for (const auto& id : m.ids(s)) CHECK(seen.insert(id).second);
  CHECK(seen.size() == 100);

  const std::string first = slurp(root / "manifest.json");
  CHECK(manifest_from_json(first) == m);
  CHECK(read_manifest(root) == m);
  ingest(root, CategorySet::poster(), 4);
  CHECK(slurp(root / "manifest.json") == first);
  CHECK(!(ingest(root, CategorySet::poster(), 5) == m));
}

TEST_CASE("ingestion ignores directory order") {
  const auto a = testing::scratch("order_a"), b = testing::scratch("order_b");
  const std::vector<std::string> ids{"k", "c", "x", "a", "q", "m", "d", "z", "e", "b"};
  for (const auto& id : ids) write_sample(a, id, 2);
  for (auto it = ids.rbegin(); it != ids.rend(); ++it) write_sample(b, *it, 2);
  CHECK(ingest(a, CategorySet::poster(), 1).samples == ingest(b, CategorySet::poster(), 1).samples);
}

TEST_CASE("unpaired and malformed samples are excluded") {
  const auto root = testing::scratch("malformed");
  write_sample(root, "ok", 2);
  write_sample(root, "nosal", 2);
  fs::remove(root / "saliency" / "nosal.png");
  write_sample(root, "broken", 2);
  std::ofstream(root / "layouts" / "broken.json") << "{ nope";
  const CorpusManifest m = ingest(root, CategorySet::poster());
  CHECK(m.samples.size() == 1);
  CHECK(m.excluded.size() == 2);
  CHECK_THROWS_AS(ingest(testing::scratch("empty"), CategorySet::poster()), IoError);
}

TEST_CASE("synthetic corpus guarantees") {
  const auto& root = testing::small_corpus();
  const CorpusManifest m = read_manifest(root);
  CHECK(m.samples.size() == 40);
  CHECK(m.generator_seed == std::optional<std::uint64_t>(5));
  const CategorySet& cats = m.categories;
  for (const auto& e : m.samples) {
    const Layout l = read_layout(root / "layouts" / (e.id + ".json"), cats);
    const CanvasBundle b = load_bundle(root, e.id);
    const auto und = metrics::und(l, cats);
    CHECK(*und.strict == 1.0);
    CHECK(metrics::ove(l, cats) == 0.0);
    CHECK(metrics::occ(l, b.saliency, cats) <= 0.05 + 0.01);
    for (double v : b.saliency.image().data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("synthetic generation is reproducible") {
  const auto a = testing::scratch("syn_a"), b = testing::scratch("syn_b");
  generate_synthetic(a, 6, 99);
  generate_synthetic(b, 6, 99);
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
}

TEST_CASE("loaded samples match the model resolution") {
  const auto& root = testing::small_corpus();
  const CorpusManifest m = read_manifest(root);
  const ModelConfig cfg = model_preset("desk", m.categories.size());
  const auto train = load_split(root, m, Split::train, cfg);
  REQUIRE(!train.empty());
  const PreparedSample& s = train.front();
  CHECK(s.cond.patches.rows() == cfg.patch_count());
  CHECK(s.cond.patches.cols() == cfg.patch_dim());
  CHECK(s.cond.patches.cwiseAbs().maxCoeff() <= 1.0);
  CHECK(s.x0.rows() == cfg.n_max);

  const PreparedSample twice = mirror_sample(mirror_sample(s, m.categories, cfg, true, true), m.categories, cfg, true, true);
  CHECK(twice.bundle.canvas == s.bundle.canvas);
  for (std::size_t i = 0; i < s.layout.size(); ++i)
    for (int k = 0; k < 4; ++k)
      CHECK(twice.layout.elements[i].box[k] == doctest::Approx(s.layout.elements[i].box[k]).epsilon(1e-12));

  CHECK_THROWS_AS(load_sample(root, "nope", m.categories, cfg), IoError);
  CHECK_THROWS_AS(load_sample(root, s.id, CategorySet::poster_with_embellishment(), cfg), ConfigError);
}
