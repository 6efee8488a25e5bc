#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "relict/volume.hpp"

namespace relict {

// Mean absolute error over all voxels. Throws DimensionError on grid mismatch.
double mae(const Volume3D& a, const Volume3D& b);

// Root mean squared error over all voxels.
double rmse(const Volume3D& a, const Volume3D& b);

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double sigma = 1.5;
  double truncate = 3.5;
  // Dynamic range L. When unset, max - min over the union of both volumes.
  std::optional<double> data_range;

  // Window radius in voxels: floor(truncate * sigma + 0.5), 5 for the defaults.
  std::size_t radius() const;
  std::size_t window_size() const { return 2 * radius() + 1; }
};

// Normalized 1D Gaussian taps of length window_size().
std::vector<double> gaussian_window(const SsimParams& params);

// Mean of the SSIM map over every voxel whose Gaussian window fits entirely in
// the grid. Local means, variances and covariance are Gaussian-weighted
// population moments. Throws WindowError if any axis is shorter than the
// window and DimensionError on grid mismatch.
double mean_ssim(const Volume3D& a, const Volume3D& b, const SsimParams& params = {});

}  // namespace relict
