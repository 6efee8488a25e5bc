#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "relict/volume.hpp"
#include "relict/volume_io.hpp"

namespace relict::testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// i.i.d. uniform [0, 1) voxels.
Volume3D uniform_volume(const std::string& id, Dims dims, std::mt19937_64& rng, Spacing spacing = {1, 1, 1});

// Gaussian noise smoothed by repeated box filtering, rescaled to [0, 1].
std::vector<double> smoothed_field(Dims dims, std::mt19937_64& rng, int radius = 2, int passes = 3);
Volume3D smoothed_volume(const std::string& id, Dims dims, std::mt19937_64& rng, Spacing spacing = {1, 1, 1});

// `source` plus N(0, sigma^2) noise per voxel.
Volume3D with_noise(const Volume3D& source, const std::string& id, double sigma, std::mt19937_64& rng);

// Labels 0..max_label uniformly at random.
SegmentationMask uniform_mask(const std::string& id, Dims dims, std::int32_t max_label, std::mt19937_64& rng,
                              Spacing spacing = {1, 1, 1});

// Foreground where a fresh smoothed field exceeds its `quantile`.
SegmentationMask blob_mask(const std::string& id, Dims dims, double quantile, std::mt19937_64& rng,
                           Spacing spacing = {1, 1, 1});

// Volume pooled to `grid`^3 and flattened, standing in for a network embedding.
EmbeddingVector pooled_embedding(const Volume3D& volume, std::size_t grid = 4);

ImageBundle bundle(Volume3D volume, std::optional<SegmentationMask> mask = std::nullopt,
                   std::optional<EmbeddingVector> embedding = std::nullopt);

// Writes volumes (.nii), masks and embeddings under `dir` and returns the
// manifest path.
fs::path write_corpus(const Corpus& corpus, const fs::path& dir);

struct ReplicaFixture {
  Corpus training;
  Corpus synthetic;
  // Synthetic id -> source training id, copies only.
  std::map<std::string, std::string> copies;
};

struct ReplicaFixtureOptions {
  std::size_t training = 100;
  std::size_t copies = 10;
  std::size_t fresh = 10;
  std::size_t edge = 32;
  // Copy noise sigma as a fraction of the source's intensity range.
  double noise_fraction = 0.01;
  bool masks = false;
  // Weight of a field shared by every volume, standing in for common anatomy.
  double shared_fraction = 0.0;
  std::uint64_t seed = 1;
};

// Smoothed-random training volumes. Synthetics are noisy copies of distinct
// randomly chosen training images plus fresh volumes, shuffled, with ids that
// do not reveal which is which. With `masks`, training images get blob masks,
// copies reuse their source's mask and fresh images get new ones.
ReplicaFixture make_replica_fixture(const ReplicaFixtureOptions& options);

}  // namespace relict::testing
