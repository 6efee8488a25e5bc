#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <string>
#include <vector>

namespace relict {

// Grid extent. Voxel (x, y, z) lives at linear index x + nx * (y + ny * z),
// i.e. x varies fastest. Every grid in the toolkit uses this layout.
struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const noexcept { return nx * ny * nz; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return x + nx * (y + ny * z);
  }
  std::size_t operator[](std::size_t axis) const noexcept {
    return axis == 0 ? nx : (axis == 1 ? ny : nz);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

std::string to_string(const Dims& dims);

// Voxel size in millimeters along x, y, z.
using Spacing = std::array<double, 3>;

class Volume3D {
 public:
  // Throws DimensionError if voxels.size() != dims.count() or any extent is 0,
  // DataError on non-finite voxels, FormatError on non-positive spacing.
  Volume3D(std::string id, Dims dims, Spacing spacing, std::vector<double> voxels);

  const std::string& id() const noexcept { return id_; }
  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::span<const double> voxels() const noexcept { return voxels_; }
  std::size_t size() const noexcept { return voxels_.size(); }

  double at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return voxels_[dims_.index(x, y, z)];
  }

  // Smallest and largest voxel value.
  std::pair<double, double> intensity_range() const noexcept;

 private:
  std::string id_;
  Dims dims_;
  Spacing spacing_;
  std::vector<double> voxels_;
};

class SegmentationMask {
 public:
  // Label 0 is background. Negative labels raise DataError.
  SegmentationMask(std::string id, Dims dims, Spacing spacing, std::vector<std::int32_t> labels);

  const std::string& id() const noexcept { return id_; }
  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::span<const std::int32_t> labels() const noexcept { return labels_; }
  // Sorted distinct nonzero labels present in the mask.
  const std::vector<std::int32_t>& label_set() const noexcept { return label_set_; }

  std::int32_t at(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    return labels_[dims_.index(x, y, z)];
  }

 private:
  std::string id_;
  Dims dims_;
  Spacing spacing_;
  std::vector<std::int32_t> labels_;
  std::vector<std::int32_t> label_set_;
};

class EmbeddingVector {
 public:
  // Throws DimensionError when empty, DataError on non-finite values.
  EmbeddingVector(std::string id, std::vector<double> values);

  const std::string& id() const noexcept { return id_; }
  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

 private:
  std::string id_;
  std::vector<double> values_;
};

// Channel-major feature map of shape (channels, depth, height, width), width
// fastest; the layout a PyTorch NCDHW tensor has for a single batch item.
class FeatureMap4D {
 public:
  struct Shape {
    std::size_t channels = 0;
    std::size_t depth = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t count() const noexcept { return channels * depth * height * width; }
    friend bool operator==(const Shape&, const Shape&) = default;
  };

  FeatureMap4D(std::string id, Shape shape, std::vector<double> values);

  const std::string& id() const noexcept { return id_; }
  const Shape& shape() const noexcept { return shape_; }
  std::span<const double> values() const noexcept { return values_; }

  std::size_t index(std::size_t c, std::size_t d, std::size_t h, std::size_t w) const noexcept {
    return ((c * shape_.depth + d) * shape_.height + h) * shape_.width + w;
  }
  double at(std::size_t c, std::size_t d, std::size_t h, std::size_t w) const noexcept {
    return values_[index(c, d, h, w)];
  }

 private:
  std::string id_;
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace relict
