#include "relict/feature_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "relict/errors.hpp"

namespace relict {

namespace {

struct Bin {
  std::size_t begin;
  std::size_t end;
};

std::vector<Bin> pooling_bins(std::size_t in, std::size_t out) {
  std::vector<Bin> bins(out);
  for (std::size_t i = 0; i < out; ++i) {
    bins[i].begin = (i * in) / out;
    bins[i].end = ((i + 1) * in + out - 1) / out;
  }
  return bins;
}

void require_same_dim(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) {
    throw DimensionError(fmt::format("embedding dims differ: {} ({}) vs {} ({})", u.id(), u.dim(),
                                     v.id(), v.dim()));
  }
}

}  // namespace

FeatureMap4D adaptive_avg_pool(const FeatureMap4D& map, PoolShape out) {
  const auto& in = map.shape();
  if (out.depth == 0 || out.height == 0 || out.width == 0 || out.depth > in.depth ||
      out.height > in.height || out.width > in.width) {
    throw DimensionError(fmt::format("{}: cannot pool ({}, {}, {}) to ({}, {}, {})", map.id(),
                                     in.depth, in.height, in.width, out.depth, out.height,
                                     out.width));
  }
  const auto bd = pooling_bins(in.depth, out.depth);
  const auto bh = pooling_bins(in.height, out.height);
  const auto bw = pooling_bins(in.width, out.width);

  FeatureMap4D::Shape shape{in.channels, out.depth, out.height, out.width};
  std::vector<double> values;
  values.reserve(shape.count());
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (const Bin& d : bd) {
      for (const Bin& h : bh) {
        for (const Bin& w : bw) {
          double sum = 0.0;
          for (std::size_t z = d.begin; z < d.end; ++z) {
            for (std::size_t y = h.begin; y < h.end; ++y) {
              for (std::size_t x = w.begin; x < w.end; ++x) sum += map.at(c, z, y, x);
            }
          }
          const auto cells = static_cast<double>((d.end - d.begin) * (h.end - h.begin) * (w.end - w.begin));
          values.push_back(sum / cells);
        }
      }
    }
  }
  return FeatureMap4D(map.id(), shape, std::move(values));
}

EmbeddingVector flatten(const FeatureMap4D& map) {
  const auto v = map.values();
  return EmbeddingVector(map.id(), std::vector<double>(v.begin(), v.end()));
}

double embedding_rmse(const EmbeddingVector& u, const EmbeddingVector& v) {
  require_same_dim(u, v);
  const auto a = u.values();
  const auto b = v.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(a.size()));
}

double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  require_same_dim(u, v);
  const auto a = u.values();
  const auto b = v.values();
  double dot = 0.0;
  double aa = 0.0;
  double bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) {
    throw DegenerateInputError(fmt::format("cosine similarity of zero-norm embedding ({})",
                                           aa == 0.0 ? u.id() : v.id()));
  }
  return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace relict
