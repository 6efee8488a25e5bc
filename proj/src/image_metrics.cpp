#include "relict/image_metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "relict/errors.hpp"

namespace relict {

namespace {

void require_same_grid(const Volume3D& a, const Volume3D& b) {
  if (!(a.dims() == b.dims())) {
    throw DimensionError(fmt::format("grid mismatch: {} is {}, {} is {}", a.id(), to_string(a.dims()),
                                     b.id(), to_string(b.dims())));
  }
}

void validate(const SsimParams& p) {
  if (!(p.k1 > 0.0) || !(p.k2 > 0.0) || !(p.sigma > 0.0) || !(p.truncate > 0.0)) {
    throw RangeError(fmt::format("SSIM parameters must be positive (k1={}, k2={}, sigma={}, truncate={})",
                                 p.k1, p.k2, p.sigma, p.truncate));
  }
  if (p.data_range && !(*p.data_range > 0.0)) {
    throw RangeError(fmt::format("SSIM data range must be positive, got {}", *p.data_range));
  }
}

// Correlates `in` with `taps` along one axis, keeping only outputs whose
// support lies inside the grid.
std::vector<double> filter_valid(const std::vector<double>& in, Dims& dims, int axis,
                                 const std::vector<double>& taps) {
  const std::size_t r = taps.size() / 2;
  Dims out_dims = dims;
  std::size_t stride = 1;
  if (axis == 0) {
    out_dims.nx -= 2 * r;
  } else if (axis == 1) {
    out_dims.ny -= 2 * r;
    stride = dims.nx;
  } else {
    out_dims.nz -= 2 * r;
    stride = dims.nx * dims.ny;
  }
  std::vector<double> out(out_dims.count());
  for (std::size_t z = 0; z < out_dims.nz; ++z) {
    for (std::size_t y = 0; y < out_dims.ny; ++y) {
      for (std::size_t x = 0; x < out_dims.nx; ++x) {
        const std::size_t base = dims.index(x, y, z);
        double acc = 0.0;
        for (std::size_t t = 0; t < taps.size(); ++t) acc += taps[t] * in[base + t * stride];
        out[out_dims.index(x, y, z)] = acc;
      }
    }
  }
  dims = out_dims;
  return out;
}

std::vector<double> gaussian_filter_valid(std::vector<double> field, Dims dims,
                                          const std::vector<double>& taps) {
  for (int axis = 0; axis < 3; ++axis) field = filter_valid(field, dims, axis, taps);
  return field;
}

}  // namespace

double mae(const Volume3D& a, const Volume3D& b) {
  require_same_grid(a, b);
  const auto x = a.voxels();
  const auto y = b.voxels();
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(x[i] - y[i]);
  return sum / static_cast<double>(x.size());
}

double rmse(const Volume3D& a, const Volume3D& b) {
  require_same_grid(a, b);
  const auto x = a.voxels();
  const auto y = b.voxels();
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(x.size()));
}

std::size_t SsimParams::radius() const {
  return static_cast<std::size_t>(std::floor(truncate * sigma + 0.5));
}

std::vector<double> gaussian_window(const SsimParams& params) {
  validate(params);
  const std::size_t r = params.radius();
  std::vector<double> taps(2 * r + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(r);
    taps[i] = std::exp(-0.5 * d * d / (params.sigma * params.sigma));
    sum += taps[i];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

double mean_ssim(const Volume3D& a, const Volume3D& b, const SsimParams& params) {
  require_same_grid(a, b);
  const std::vector<double> taps = gaussian_window(params);
  const Dims dims = a.dims();
  for (std::size_t axis = 0; axis < 3; ++axis) {
    if (dims[axis] < taps.size()) {
      throw WindowError(fmt::format("grid {} is smaller than the {}-voxel SSIM window",
                                    to_string(dims), taps.size()));
    }
  }

  double range = 0.0;
  if (params.data_range) {
    range = *params.data_range;
  } else {
    const auto [alo, ahi] = a.intensity_range();
    const auto [blo, bhi] = b.intensity_range();
    range = std::max(ahi, bhi) - std::min(alo, blo);
    // Zero joint range means both volumes hold the same constant.
    if (range == 0.0) return 1.0;
  }
  const double c1 = (params.k1 * range) * (params.k1 * range);
  const double c2 = (params.k2 * range) * (params.k2 * range);

  const auto x = a.voxels();
  const auto y = b.voxels();
  const std::size_t n = x.size();
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mu_x = gaussian_filter_valid({x.begin(), x.end()}, dims, taps);
  const auto mu_y = gaussian_filter_valid({y.begin(), y.end()}, dims, taps);
  const auto m_xx = gaussian_filter_valid(std::move(xx), dims, taps);
  const auto m_yy = gaussian_filter_valid(std::move(yy), dims, taps);
  const auto m_xy = gaussian_filter_valid(std::move(xy), dims, taps);

  double sum = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i];
    const double my = mu_y[i];
    const double vx = m_xx[i] - mx * mx;
    const double vy = m_yy[i] - my * my;
    const double cov = m_xy[i] - mx * my;
    const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
    const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
    sum += num / den;
  }
  return sum / static_cast<double>(mu_x.size());
}

}  // namespace relict
