#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "relict/volume.hpp"

namespace relict {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

// Counts for `label`, treating `a` as prediction and `b` as reference.
ConfusionCounts confusion_counts(const SegmentationMask& a, const SegmentationMask& b,
                                 std::int32_t label);

// 2TP / (2TP + FP + FN); 1.0 when the label is absent from both masks.
double dice_binary(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label);

// Unweighted mean of dice_binary over the union of both label sets.
// Throws DegenerateInputError when both masks are entirely background.
double dice_multiclass(const SegmentationMask& a, const SegmentationMask& b);

struct SurfacePointSet {
  std::int32_t label = 0;
  // Linear voxel indices in ascending order.
  std::vector<std::size_t> voxels;
  // Voxel centers in millimeters (index * spacing), parallel to `voxels`.
  std::vector<std::array<double, 3>> points;

  std::size_t size() const noexcept { return voxels.size(); }
  bool empty() const noexcept { return voxels.empty(); }
};

// Voxels carrying `label` with at least one of their six face neighbours
// outside the label or outside the grid.
SurfacePointSet extract_surface(const SegmentationMask& mask, std::int32_t label);

// Exact squared Euclidean distance (mm^2) from every voxel center to the
// nearest seed voxel, honouring anisotropic spacing. Voxels are +inf when
// there are no seeds.
std::vector<double> squared_distance_transform(const Dims& dims, const Spacing& spacing,
                                               std::span<const std::size_t> seeds);

enum class DistanceStrategy {
  // Brute force when the two surfaces together hold fewer than 10^4 points,
  // distance transform otherwise.
  automatic,
  brute_force,
  distance_transform,
};

// Stand-in ASD for a label whose surface is empty in exactly one mask:
// 0.95 times the corner-to-corner diagonal of the grid extent in mm.
double empty_surface_fallback(const Dims& dims, const Spacing& spacing);

// Symmetric average surface distance in mm. Both surfaces empty gives 0; one
// empty gives empty_surface_fallback.
double asd_binary(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label,
                  DistanceStrategy strategy = DistanceStrategy::automatic);

// Unweighted mean of per-label ASD over the union of both label sets.
// Throws DegenerateInputError when both masks are entirely background.
double asd_multiclass(const SegmentationMask& a, const SegmentationMask& b,
                      DistanceStrategy strategy = DistanceStrategy::automatic);

// Surfaces and distance maps of one mask, computed once and reused across
// many comparisons.
class PreparedMask {
 public:
  struct LabelData {
    std::int32_t label = 0;
    std::vector<std::size_t> surface;
    std::vector<double> squared_distance;
  };

  // Prepares every label in the mask, or only `labels` when non-empty.
  explicit PreparedMask(std::shared_ptr<const SegmentationMask> mask,
                        std::span<const std::int32_t> labels = {});

  const SegmentationMask& mask() const noexcept { return *mask_; }
  const LabelData* find(std::int32_t label) const noexcept;
  std::size_t memory_bytes() const noexcept;

  // Approximate footprint of preparing `label_count` labels on `dims`.
  static std::size_t estimate_bytes(const Dims& dims, std::size_t label_count);

 private:
  std::shared_ptr<const SegmentationMask> mask_;
  std::vector<LabelData> labels_;
};

double asd_binary(const PreparedMask& a, const PreparedMask& b, std::int32_t label);
double asd_multiclass(const PreparedMask& a, const PreparedMask& b);

}  // namespace relict
