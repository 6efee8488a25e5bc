#pragma once

#include <cstddef>

#include "relict/volume.hpp"

namespace relict {

struct PoolShape {
  std::size_t depth = 4;
  std::size_t height = 4;
  std::size_t width = 4;
};

// Per channel, output cell i along an axis of input length n and output
// length m averages input cells [floor(i*n/m), ceil((i+1)*n/m)).
FeatureMap4D adaptive_avg_pool(const FeatureMap4D& map, PoolShape out);

// Channel-major flattening; the embedding keeps the map's id.
EmbeddingVector flatten(const FeatureMap4D& map);

double embedding_rmse(const EmbeddingVector& u, const EmbeddingVector& v);

// Throws DegenerateInputError if either vector has zero norm.
double cosine_similarity(const EmbeddingVector& u, const EmbeddingVector& v);

}  // namespace relict
