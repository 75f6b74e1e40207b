#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "layoutdiff/bundle.hpp"
#include "layoutdiff/layout.hpp"
#include "layoutdiff/model.hpp"
#include "layoutdiff/saliency.hpp"

namespace layoutdiff {

enum class Split { train, val, test };
Split parse_split(std::string_view name);
std::string_view split_name(Split split);

struct ManifestEntry {
  std::string id;
  Split split = Split::train;
  bool operator==(const ManifestEntry&) const = default;
};

struct ExcludedSample {
  std::string id;
  std::string reason;
  bool operator==(const ExcludedSample&) const = default;
};

/// Corpus directory layout:
///   canvases/<id>.png   RGB
///   saliency/<id>.png   8-bit gray
///   layouts/<id>.json
///   manifest.json
struct CorpusManifest {
  CategorySet categories = CategorySet::poster();
  /// Sorted by split, then by shuffled position.
  std::vector<ManifestEntry> samples;
  std::vector<ExcludedSample> excluded;
  std::uint64_t split_seed = 0;
  std::optional<std::uint64_t> generator_seed;
  /// FNV-1a of everything above, hex.
  std::string config_hash;

  std::vector<std::string> ids(Split split) const;
  bool operator==(const CorpusManifest&) const = default;
};

std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(std::string_view text);
CorpusManifest read_manifest(const std::filesystem::path& root);

/// Validates every sample under `root`, drops unpaired, malformed and
/// oversized ones (recorded in `excluded`), then splits 8:1:1 after a seeded
/// shuffle of the sorted ids. Writes manifest.json. Throws IoError when no
/// sample survives.
CorpusManifest ingest(const std::filesystem::path& root, const CategorySet& cats, std::uint64_t seed = 0,
                      int n_max = kDefaultMaxElements);

struct SyntheticSpec {
  int height = 192;
  int width = 128;
  int min_objects = 1;
  int max_objects = 3;
  /// Text elements per layout, each on its own underlay.
  int min_texts = 2;
  int max_texts = 2;
  /// Ground truths must keep their occlusion at or below this.
  double occ_ceiling = 0.05;
  /// Horizontal / vertical gap between a text box and its underlay edge.
  double underlay_margin_x = 0.06;
  double underlay_margin_y = 0.04;
  int max_retries = 100;
};

/// Writes `n` synthetic samples (posters with a salient band and a layout in
/// the free band) into `root` and ingests them with the same seed.
CorpusManifest generate_synthetic(const std::filesystem::path& root, int n, std::uint64_t seed,
                                  const SyntheticSpec& spec = {});

/// One sample in memory: source-resolution bundle plus network inputs.
struct PreparedSample {
  std::string id;
  Layout layout;
  LayoutTensor x0;
  SampleCondition cond;
  CanvasBundle bundle;
};

/// Canvas, saliency and salient boxes of one corpus sample at source resolution.
CanvasBundle load_bundle(const std::filesystem::path& root, const std::string& id,
                         const BoxExtractionParams& box_params = {});

/// Reads, validates and resizes one sample. Throws IoError naming the id.
PreparedSample load_sample(const std::filesystem::path& root, const std::string& id, const CategorySet& cats,
                           const ModelConfig& cfg, const BoxExtractionParams& box_params = {});

/// The same sample reflected top-bottom and/or left-right: images, layout
/// and salient boxes all mirrored.
PreparedSample mirror_sample(const PreparedSample& sample, const CategorySet& cats, const ModelConfig& cfg,
                             bool vertical, bool horizontal, const BoxExtractionParams& box_params = {});

std::vector<PreparedSample> load_split(const std::filesystem::path& root, const CorpusManifest& manifest, Split split,
                                       const ModelConfig& cfg, const BoxExtractionParams& box_params = {});

/// Sample indices for one epoch, shuffled from (seed, epoch); the last batch
/// may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed, int epoch);

}  // namespace layoutdiff
