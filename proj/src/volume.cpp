#include "relict/volume.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "relict/errors.hpp"

namespace relict {

namespace {

void check_grid(const std::string& id, const Dims& dims, const Spacing& spacing,
                std::size_t length) {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) {
    throw DimensionError(fmt::format("{}: grid extent {} has a zero axis", id, to_string(dims)));
  }
  if (length != dims.count()) {
    throw DimensionError(fmt::format("{}: grid {} needs {} values, got {}", id, to_string(dims),
                                     dims.count(), length));
  }
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw FormatError(fmt::format("{}: spacing must be positive and finite, got ({}, {}, {})",
                                    id, spacing[0], spacing[1], spacing[2]));
    }
  }
}

void check_finite(const std::string& id, std::span<const double> values) {
  const auto bad = std::find_if(values.begin(), values.end(),
                                [](double v) { return !std::isfinite(v); });
  if (bad != values.end()) {
    throw DataError(fmt::format("{}: non-finite value at index {}", id,
                                static_cast<std::size_t>(bad - values.begin())));
  }
}

}  // namespace

std::string to_string(const Dims& dims) {
  return fmt::format("{}x{}x{}", dims.nx, dims.ny, dims.nz);
}

Volume3D::Volume3D(std::string id, Dims dims, Spacing spacing, std::vector<double> voxels)
    : id_(std::move(id)), dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  check_grid(id_, dims_, spacing_, voxels_.size());
  check_finite(id_, voxels_);
}

std::pair<double, double> Volume3D::intensity_range() const noexcept {
  const auto [lo, hi] = std::minmax_element(voxels_.begin(), voxels_.end());
  return {*lo, *hi};
}

SegmentationMask::SegmentationMask(std::string id, Dims dims, Spacing spacing,
                                   std::vector<std::int32_t> labels)
    : id_(std::move(id)), dims_(dims), spacing_(spacing), labels_(std::move(labels)) {
  check_grid(id_, dims_, spacing_, labels_.size());
  for (std::int32_t l : labels_) {
    if (l < 0) throw DataError(fmt::format("{}: negative label {}", id_, l));
    if (l != 0) label_set_.push_back(l);
  }
  std::sort(label_set_.begin(), label_set_.end());
  label_set_.erase(std::unique(label_set_.begin(), label_set_.end()), label_set_.end());
}

EmbeddingVector::EmbeddingVector(std::string id, std::vector<double> values)
    : id_(std::move(id)), values_(std::move(values)) {
  if (values_.empty()) throw DimensionError(fmt::format("{}: embedding has dimension 0", id_));
  check_finite(id_, values_);
}

FeatureMap4D::FeatureMap4D(std::string id, Shape shape, std::vector<double> values)
    : id_(std::move(id)), shape_(shape), values_(std::move(values)) {
  if (shape_.count() == 0) {
    throw DimensionError(fmt::format("{}: feature map shape has a zero axis", id_));
  }
  if (values_.size() != shape_.count()) {
    throw DimensionError(fmt::format("{}: feature map shape ({}, {}, {}, {}) needs {} values, got {}",
                                     id_, shape_.channels, shape_.depth, shape_.height,
                                     shape_.width, shape_.count(), values_.size()));
  }
  check_finite(id_, values_);
}

}  // namespace relict
