#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "relict/volume.hpp"

namespace relict {

namespace fs = std::filesystem;

// NIfTI-1 single-file volumes (.nii or .nii.gz). Only 3D images are accepted;
// spacing comes from pixdim[1..3], scl_slope/scl_inter are applied when the
// slope is nonzero, and orientation beyond spacing is ignored. `id` defaults
// to the file name without the NIfTI extension.
Volume3D load_volume(const fs::path& path, std::optional<std::string> id = std::nullopt);
SegmentationMask load_mask(const fs::path& path, std::optional<std::string> id = std::nullopt);

// Writes float64 voxels (masks: int32), gzip-compressed when the path ends in
// ".gz".
void write_volume(const Volume3D& volume, const fs::path& path);
void write_mask(const SegmentationMask& mask, const fs::path& path);

// RVEC: "RVEC1", u32 LE dim, dim float32 LE values.
EmbeddingVector load_embedding(const fs::path& path, std::optional<std::string> id = std::nullopt);
void write_embedding(const EmbeddingVector& embedding, const fs::path& path);

// RMAP: "RMAP1", four u32 LE (C, d, h, w), then channel-major float32 LE values.
FeatureMap4D load_feature_map(const fs::path& path, std::optional<std::string> id = std::nullopt);
void write_feature_map(const FeatureMap4D& map, const fs::path& path);

// Zero-mean, unit population standard deviation copy of `v`. A constant input
// yields an all-zero volume and appends a message to `warnings` if given.
Volume3D zscore_normalize(const Volume3D& v, std::vector<std::string>* warnings = nullptr);

enum class CorpusRole { training, synthetic };

std::string_view to_string(CorpusRole role);

struct CorpusEntry {
  std::string id;
  fs::path volume;
  std::optional<fs::path> mask;
  std::optional<fs::path> embedding;
  std::optional<fs::path> feature_map;
};

struct CorpusManifest {
  CorpusRole role = CorpusRole::training;
  std::vector<CorpusEntry> entries;
};

// Parses a manifest JSON file. Relative paths resolve against the manifest's
// directory. Throws FormatError on bad JSON/schema and CorpusError on
// duplicate ids or missing files.
CorpusManifest read_manifest(const fs::path& path);
void write_manifest(const CorpusManifest& manifest, const fs::path& path);

struct ImageBundle {
  std::string id;
  std::shared_ptr<const Volume3D> volume;
  std::shared_ptr<const SegmentationMask> mask;
  std::shared_ptr<const EmbeddingVector> embedding;
};

struct Corpus {
  CorpusRole role = CorpusRole::training;
  std::vector<ImageBundle> images;

  const ImageBundle* find(std::string_view id) const;
};

struct CorpusLoadOptions {
  // Output grid of the adaptive pooling applied to RMAP feature maps before
  // flattening them into embeddings.
  std::array<std::size_t, 3> pool_shape{4, 4, 4};
  unsigned workers = 1;
};

// Loads every entry or throws; no partially loaded corpus is ever returned.
// An entry's explicit embedding takes precedence over its feature map.
Corpus load_corpus(const CorpusManifest& manifest, const CorpusLoadOptions& options = {});

}  // namespace relict
