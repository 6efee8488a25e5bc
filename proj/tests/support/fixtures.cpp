#include "fixtures.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "relict/feature_metrics.hpp"

namespace relict::testing {

TempDir::TempDir(const std::string& prefix) {
  static std::atomic<int> counter{0};
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = fs::temp_directory_path() / fmt::format("{}-{}-{}", prefix, stamp, counter++);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Volume3D uniform_volume(const std::string& id, Dims dims, std::mt19937_64& rng, Spacing spacing) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(dims.count());
  for (auto& x : v) x = u(rng);
  return Volume3D(id, dims, spacing, std::move(v));
}

namespace {

void box_pass(std::vector<double>& v, Dims d, int axis, int radius) {
  std::vector<double> out(v.size());
  const std::size_t n = d[axis];
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        std::size_t c[3] = {x, y, z};
        double sum = 0.0;
        for (int o = -radius; o <= radius; ++o) {
          // Reflect at the borders.
          long long i = static_cast<long long>(c[axis]) + o;
          if (i < 0) i = -i - 1;
          if (i >= static_cast<long long>(n)) i = 2 * static_cast<long long>(n) - i - 1;
          i = std::clamp<long long>(i, 0, static_cast<long long>(n) - 1);
          std::size_t q[3] = {x, y, z};
          q[axis] = static_cast<std::size_t>(i);
          sum += v[d.index(q[0], q[1], q[2])];
        }
        out[d.index(x, y, z)] = sum / (2 * radius + 1);
      }
    }
  }
  v.swap(out);
}

}  // namespace

std::vector<double> smoothed_field(Dims dims, std::mt19937_64& rng, int radius, int passes) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dims.count());
  for (auto& x : v) x = g(rng);
  for (int p = 0; p < passes; ++p) {
    for (int axis = 0; axis < 3; ++axis) box_pass(v, dims, axis, radius);
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo;
  const double range = *hi - *lo;
  for (auto& x : v) x = range > 0 ? (x - a) / range : 0.0;
  return v;
}

Volume3D smoothed_volume(const std::string& id, Dims dims, std::mt19937_64& rng, Spacing spacing) {
  return Volume3D(id, dims, spacing, smoothed_field(dims, rng));
}

Volume3D with_noise(const Volume3D& source, const std::string& id, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> v(source.voxels().begin(), source.voxels().end());
  for (auto& x : v) x += g(rng);
  return Volume3D(id, source.dims(), source.spacing(), std::move(v));
}

SegmentationMask uniform_mask(const std::string& id, Dims dims, std::int32_t max_label, std::mt19937_64& rng,
                              Spacing spacing) {
  std::uniform_int_distribution<std::int32_t> u(0, max_label);
  std::vector<std::int32_t> labels(dims.count());
  for (auto& l : labels) l = u(rng);
  return SegmentationMask(id, dims, spacing, std::move(labels));
}

SegmentationMask blob_mask(const std::string& id, Dims dims, double quantile, std::mt19937_64& rng,
                           Spacing spacing) {
  const auto field = smoothed_field(dims, rng);
  auto sorted = field;
  const auto k = static_cast<std::size_t>(quantile * static_cast<double>(sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double cut = sorted[k];
  std::vector<std::int32_t> labels(field.size());
  for (std::size_t i = 0; i < field.size(); ++i) labels[i] = field[i] > cut ? 1 : 0;
  return SegmentationMask(id, dims, spacing, std::move(labels));
}

EmbeddingVector pooled_embedding(const Volume3D& volume, std::size_t grid) {
  const Dims& d = volume.dims();
  FeatureMap4D map(volume.id(), {1, d.nz, d.ny, d.nx},
                   std::vector<double>(volume.voxels().begin(), volume.voxels().end()));
  return flatten(adaptive_avg_pool(map, {grid, grid, grid}));
}

ImageBundle bundle(Volume3D volume, std::optional<SegmentationMask> mask, std::optional<EmbeddingVector> embedding) {
  ImageBundle b;
  b.id = volume.id();
  b.volume = std::make_shared<const Volume3D>(std::move(volume));
  if (mask) b.mask = std::make_shared<const SegmentationMask>(std::move(*mask));
  if (embedding) b.embedding = std::make_shared<const EmbeddingVector>(std::move(*embedding));
  return b;
}

fs::path write_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  CorpusManifest manifest;
  manifest.role = corpus.role;
  for (const auto& image : corpus.images) {
    CorpusEntry entry;
    entry.id = image.id;
    entry.volume = dir / (image.id + ".nii");
    write_volume(*image.volume, entry.volume);
    if (image.mask) {
      entry.mask = dir / (image.id + "_seg.nii");
      write_mask(*image.mask, *entry.mask);
    }
    if (image.embedding) {
      entry.embedding = dir / (image.id + ".rvec");
      write_embedding(*image.embedding, *entry.embedding);
    }
    manifest.entries.push_back(std::move(entry));
  }
  const auto path = dir / "manifest.json";
  write_manifest(manifest, path);
  return path;
}

ReplicaFixture make_replica_fixture(const ReplicaFixtureOptions& o) {
  std::mt19937_64 rng(o.seed);
  const Dims dims{o.edge, o.edge, o.edge};
  ReplicaFixture f;
  f.training.role = CorpusRole::training;
  f.synthetic.role = CorpusRole::synthetic;

  const std::vector<double> shared = smoothed_field(dims, rng);
  const auto make_volume = [&](const std::string& id) {
    auto v = smoothed_field(dims, rng);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = o.shared_fraction * shared[i] + (1.0 - o.shared_fraction) * v[i];
    return Volume3D(id, dims, {1, 1, 1}, std::move(v));
  };

  std::vector<std::optional<SegmentationMask>> training_masks;
  for (std::size_t i = 0; i < o.training; ++i) {
    auto v = make_volume(fmt::format("train_{:03}", i));
    std::optional<SegmentationMask> mask;
    if (o.masks) mask = blob_mask(v.id(), dims, 0.9, rng);
    training_masks.push_back(mask);
    auto emb = pooled_embedding(v);
    f.training.images.push_back(bundle(std::move(v), std::move(mask), std::move(emb)));
  }

  std::vector<std::size_t> order(o.training);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> slots(o.copies + o.fresh);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);

  std::vector<ImageBundle> synthetic(slots.size());
  for (std::size_t c = 0; c < o.copies; ++c) {
    const ImageBundle& src = f.training.images[order[c]];
    const std::string id = fmt::format("syn_{:03}", slots[c]);
    const auto [lo, hi] = src.volume->intensity_range();
    auto v = with_noise(*src.volume, id, o.noise_fraction * (hi - lo), rng);
    std::optional<SegmentationMask> mask;
    if (o.masks) {
      const auto& m = *training_masks[order[c]];
      mask = SegmentationMask(id, m.dims(), m.spacing(), std::vector<std::int32_t>(m.labels().begin(), m.labels().end()));
    }
    auto emb = pooled_embedding(v);
    synthetic[slots[c]] = bundle(std::move(v), std::move(mask), std::move(emb));
    f.copies[id] = src.id;
  }
  for (std::size_t k = 0; k < o.fresh; ++k) {
    const std::size_t slot = slots[o.copies + k];
    auto v = make_volume(fmt::format("syn_{:03}", slot));
    std::optional<SegmentationMask> mask;
    if (o.masks) mask = blob_mask(v.id(), dims, 0.9, rng);
    auto emb = pooled_embedding(v);
    synthetic[slot] = bundle(std::move(v), std::move(mask), std::move(emb));
  }
  f.synthetic.images = std::move(synthetic);
  return f;
}

}  // namespace relict::testing
