#include "relict/segmentation_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "relict/errors.hpp"

namespace relict {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kBruteForcePointLimit = 10000;

void require_same_grid(const SegmentationMask& a, const SegmentationMask& b) {
  if (!(a.dims() == b.dims())) {
    throw DimensionError(fmt::format("mask grid mismatch: {} is {}, {} is {}", a.id(),
                                     to_string(a.dims()), b.id(), to_string(b.dims())));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const double sa = a.spacing()[i];
    const double sb = b.spacing()[i];
    if (std::abs(sa - sb) > 1e-6 * std::max(sa, sb)) {
      throw DimensionError(fmt::format("mask spacing mismatch on axis {}: {} vs {}", i, sa, sb));
    }
  }
}

std::vector<std::int32_t> label_union(const SegmentationMask& a, const SegmentationMask& b) {
  std::vector<std::int32_t> out;
  std::set_union(a.label_set().begin(), a.label_set().end(), b.label_set().begin(),
                 b.label_set().end(), std::back_inserter(out));
  if (out.empty()) {
    throw DegenerateInputError(fmt::format("masks {} and {} are entirely background", a.id(), b.id()));
  }
  return out;
}

bool has_label(const SegmentationMask& m, std::int32_t label) {
  return std::binary_search(m.label_set().begin(), m.label_set().end(), label);
}

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line:
// out[q] = min_p (w * (q - p)^2 + f[p]) with w = spacing^2. Infinite entries
// contribute no parabola.
void transform_line(const std::vector<double>& f, std::vector<double>& out, double w,
                    std::vector<std::size_t>& v, std::vector<double>& z) {
  const std::size_t n = f.size();
  v.clear();
  z.clear();
  auto key = [&](std::size_t p) {
    const double dp = static_cast<double>(p);
    return f[p] + w * dp * dp;
  };
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (v.empty()) {
      v.push_back(q);
      z.push_back(-kInf);
      continue;
    }
    double s = 0.0;
    for (;;) {
      const std::size_t p = v.back();
      s = (key(q) - key(p)) / (2.0 * w * static_cast<double>(q - p));
      // z.front() is -inf, so the envelope never empties.
      if (s > z.back()) break;
      v.pop_back();
      z.pop_back();
    }
    v.push_back(q);
    z.push_back(s);
  }
  if (v.empty()) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  std::size_t k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double dq = static_cast<double>(q);
    while (k + 1 < v.size() && z[k + 1] < dq) ++k;
    const double d = dq - static_cast<double>(v[k]);
    out[q] = w * d * d + f[v[k]];
  }
}

double sum_of_distances(const std::vector<std::size_t>& from, const std::vector<double>& sq_dist) {
  double sum = 0.0;
  for (std::size_t idx : from) sum += std::sqrt(sq_dist[idx]);
  return sum;
}

double brute_force_directed_sum(const SurfacePointSet& from, const SurfacePointSet& to) {
  double sum = 0.0;
  for (const auto& p : from.points) {
    double best = kInf;
    for (const auto& q : to.points) {
      const double dx = p[0] - q[0];
      const double dy = p[1] - q[1];
      const double dz = p[2] - q[2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    sum += std::sqrt(best);
  }
  return sum;
}

}  // namespace

ConfusionCounts confusion_counts(const SegmentationMask& a, const SegmentationMask& b,
                                 std::int32_t label) {
  require_same_grid(a, b);
  ConfusionCounts c;
  const auto la = a.labels();
  const auto lb = b.labels();
  for (std::size_t i = 0; i < la.size(); ++i) {
    const bool pa = la[i] == label;
    const bool pb = lb[i] == label;
    c.tp += static_cast<std::size_t>(pa && pb);
    c.fp += static_cast<std::size_t>(pa && !pb);
    c.fn += static_cast<std::size_t>(!pa && pb);
  }
  return c;
}

double dice_binary(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label) {
  const ConfusionCounts c = confusion_counts(a, b, label);
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double dice_multiclass(const SegmentationMask& a, const SegmentationMask& b) {
  require_same_grid(a, b);
  const auto labels = label_union(a, b);
  double sum = 0.0;
  for (std::int32_t label : labels) sum += dice_binary(a, b, label);
  return sum / static_cast<double>(labels.size());
}

SurfacePointSet extract_surface(const SegmentationMask& mask, std::int32_t label) {
  SurfacePointSet surface;
  surface.label = label;
  const Dims& d = mask.dims();
  const Spacing& s = mask.spacing();
  const auto labels = mask.labels();
  auto carries = [&](std::size_t x, std::size_t y, std::size_t z) {
    return labels[d.index(x, y, z)] == label;
  };
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        if (!carries(x, y, z)) continue;
        const bool interior = x > 0 && x + 1 < d.nx && y > 0 && y + 1 < d.ny && z > 0 &&
                              z + 1 < d.nz && carries(x - 1, y, z) && carries(x + 1, y, z) &&
                              carries(x, y - 1, z) && carries(x, y + 1, z) &&
                              carries(x, y, z - 1) && carries(x, y, z + 1);
        if (interior) continue;
        surface.voxels.push_back(d.index(x, y, z));
        surface.points.push_back({static_cast<double>(x) * s[0], static_cast<double>(y) * s[1],
                                  static_cast<double>(z) * s[2]});
      }
    }
  }
  return surface;
}

std::vector<double> squared_distance_transform(const Dims& dims, const Spacing& spacing,
                                               std::span<const std::size_t> seeds) {
  std::vector<double> grid(dims.count(), kInf);
  for (std::size_t idx : seeds) grid[idx] = 0.0;
  if (seeds.empty()) return grid;

  std::vector<double> line;
  std::vector<double> out;
  std::vector<std::size_t> v;
  std::vector<double> z;
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const std::size_t n = dims[axis];
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? dims.nx : dims.nx * dims.ny);
    const double w = spacing[axis] * spacing[axis];
    line.resize(n);
    out.resize(n);
    const std::size_t lines = dims.count() / n;
    for (std::size_t l = 0; l < lines; ++l) {
      // Start of the l-th line along `axis`.
      std::size_t start = 0;
      if (axis == 0) {
        start = l * dims.nx;
      } else if (axis == 1) {
        start = (l % dims.nx) + (l / dims.nx) * dims.nx * dims.ny;
      } else {
        start = l;
      }
      for (std::size_t i = 0; i < n; ++i) line[i] = grid[start + i * stride];
      transform_line(line, out, w, v, z);
      for (std::size_t i = 0; i < n; ++i) grid[start + i * stride] = out[i];
    }
  }
  return grid;
}

double empty_surface_fallback(const Dims& dims, const Spacing& spacing) {
  double sq = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double extent = static_cast<double>(dims[i]) * spacing[i];
    sq += extent * extent;
  }
  return 0.95 * std::sqrt(sq);
}

double asd_binary(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label,
                  DistanceStrategy strategy) {
  require_same_grid(a, b);
  const SurfacePointSet sa = extract_surface(a, label);
  const SurfacePointSet sb = extract_surface(b, label);
  if (sa.empty() && sb.empty()) return 0.0;
  if (sa.empty() || sb.empty()) return empty_surface_fallback(a.dims(), a.spacing());

  if (strategy == DistanceStrategy::automatic) {
    strategy = sa.size() + sb.size() < kBruteForcePointLimit ? DistanceStrategy::brute_force
                                                             : DistanceStrategy::distance_transform;
  }
  double sum_ab = 0.0;
  double sum_ba = 0.0;
  if (strategy == DistanceStrategy::brute_force) {
    sum_ab = brute_force_directed_sum(sa, sb);
    sum_ba = brute_force_directed_sum(sb, sa);
  } else {
    sum_ab = sum_of_distances(sa.voxels, squared_distance_transform(a.dims(), a.spacing(), sb.voxels));
    sum_ba = sum_of_distances(sb.voxels, squared_distance_transform(a.dims(), a.spacing(), sa.voxels));
  }
  return (sum_ab + sum_ba) / static_cast<double>(sa.size() + sb.size());
}

double asd_multiclass(const SegmentationMask& a, const SegmentationMask& b,
                      DistanceStrategy strategy) {
  require_same_grid(a, b);
  const auto labels = label_union(a, b);
  double sum = 0.0;
  for (std::int32_t label : labels) sum += asd_binary(a, b, label, strategy);
  return sum / static_cast<double>(labels.size());
}

PreparedMask::PreparedMask(std::shared_ptr<const SegmentationMask> mask,
                           std::span<const std::int32_t> labels)
    : mask_(std::move(mask)) {
  std::vector<std::int32_t> wanted(labels.begin(), labels.end());
  if (wanted.empty()) wanted = mask_->label_set();
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  for (std::int32_t label : wanted) {
    LabelData data;
    data.label = label;
    if (has_label(*mask_, label)) {
      data.surface = extract_surface(*mask_, label).voxels;
      data.squared_distance = squared_distance_transform(mask_->dims(), mask_->spacing(), data.surface);
    }
    labels_.push_back(std::move(data));
  }
}

const PreparedMask::LabelData* PreparedMask::find(std::int32_t label) const noexcept {
  const auto it = std::lower_bound(labels_.begin(), labels_.end(), label,
                                   [](const LabelData& d, std::int32_t l) { return d.label < l; });
  return (it != labels_.end() && it->label == label) ? &*it : nullptr;
}

std::size_t PreparedMask::memory_bytes() const noexcept {
  std::size_t bytes = sizeof(*this);
  for (const auto& d : labels_) {
    bytes += d.surface.capacity() * sizeof(std::size_t) + d.squared_distance.capacity() * sizeof(double);
  }
  return bytes;
}

std::size_t PreparedMask::estimate_bytes(const Dims& dims, std::size_t label_count) {
  return label_count * dims.count() * (sizeof(double) + sizeof(std::size_t) / 4) + 1024;
}

double asd_binary(const PreparedMask& a, const PreparedMask& b, std::int32_t label) {
  require_same_grid(a.mask(), b.mask());
  auto surface_of = [label](const PreparedMask& m) -> const PreparedMask::LabelData* {
    const auto* data = m.find(label);
    if (data == nullptr && has_label(m.mask(), label)) {
      throw InputError(fmt::format("{}: label {} was not prepared", m.mask().id(), label));
    }
    return (data == nullptr || data->surface.empty()) ? nullptr : data;
  };
  const auto* da = surface_of(a);
  const auto* db = surface_of(b);
  if (da == nullptr && db == nullptr) return 0.0;
  if (da == nullptr || db == nullptr) return empty_surface_fallback(a.mask().dims(), a.mask().spacing());
  const double sum_ab = sum_of_distances(da->surface, db->squared_distance);
  const double sum_ba = sum_of_distances(db->surface, da->squared_distance);
  return (sum_ab + sum_ba) / static_cast<double>(da->surface.size() + db->surface.size());
}

double asd_multiclass(const PreparedMask& a, const PreparedMask& b) {
  require_same_grid(a.mask(), b.mask());
  const auto labels = label_union(a.mask(), b.mask());
  double sum = 0.0;
  for (std::int32_t label : labels) sum += asd_binary(a, b, label);
  return sum / static_cast<double>(labels.size());
}

}  // namespace relict
