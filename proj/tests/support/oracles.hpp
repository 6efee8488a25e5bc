#pragma once

// Slow, direct implementations used as independent references for the
// library's metrics. They share no code with the library.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "relict/evaluation.hpp"
#include "relict/volume.hpp"

namespace relict::oracle {

double mae(const Volume3D& a, const Volume3D& b);
double rmse(const Volume3D& a, const Volume3D& b);

// Non-separable 3D Gaussian window applied at every valid center, two-pass
// weighted moments.
double mean_ssim(const Volume3D& a, const Volume3D& b, double sigma = 1.5, double truncate = 3.5,
                 double k1 = 0.01, double k2 = 0.03);

// Set arithmetic on voxel coordinate sets.
double dice(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label);
double dice_macro(const SegmentationMask& a, const SegmentationMask& b);

// Surface voxels by explicit 6-neighbour test, grid exterior counted as
// background; nearest-point search by exhaustive pairs.
std::vector<std::array<double, 3>> surface_points(const SegmentationMask& m, std::int32_t label);
double asd(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label);
double asd_macro(const SegmentationMask& a, const SegmentationMask& b);

// Best balanced accuracy over all thresholds that can change a decision:
// below the minimum, every midpoint between distinct sorted values, and above
// the maximum.
double best_balanced_accuracy(const std::vector<double>& values, const std::vector<bool>& replica);

// Balanced accuracy of `value < threshold` as replica.
double balanced_accuracy_at(const std::vector<double>& values, const std::vector<bool>& replica, double threshold);

}  // namespace relict::oracle
