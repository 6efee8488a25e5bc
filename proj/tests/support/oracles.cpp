#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace relict::oracle {

namespace {

using Coord = std::tuple<std::size_t, std::size_t, std::size_t>;

std::set<Coord> voxel_set(const SegmentationMask& m, std::int32_t label) {
  std::set<Coord> out;
  const Dims& d = m.dims();
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x)
        if (m.labels()[x + d.nx * (y + d.ny * z)] == label) out.insert({x, y, z});
  return out;
}

std::set<std::int32_t> labels_of(const SegmentationMask& m) {
  std::set<std::int32_t> out;
  for (auto l : m.labels())
    if (l != 0) out.insert(l);
  return out;
}

}  // namespace

double mae(const Volume3D& a, const Volume3D& b) {
  const Dims& d = a.dims();
  double sum = 0.0;
  for (std::size_t x = 0; x < d.nx; ++x)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t z = 0; z < d.nz; ++z) sum += std::fabs(a.at(x, y, z) - b.at(x, y, z));
  return sum / static_cast<double>(d.nx * d.ny * d.nz);
}

double rmse(const Volume3D& a, const Volume3D& b) {
  const Dims& d = a.dims();
  double sum = 0.0;
  for (std::size_t x = 0; x < d.nx; ++x)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t z = 0; z < d.nz; ++z) sum += std::pow(a.at(x, y, z) - b.at(x, y, z), 2);
  return std::sqrt(sum / static_cast<double>(d.nx * d.ny * d.nz));
}

double mean_ssim(const Volume3D& a, const Volume3D& b, double sigma, double truncate, double k1, double k2) {
  const int r = static_cast<int>(truncate * sigma + 0.5);
  const int w = 2 * r + 1;
  std::vector<double> weights(static_cast<std::size_t>(w * w * w));
  double total = 0.0;
  for (int k = -r; k <= r; ++k)
    for (int j = -r; j <= r; ++j)
      for (int i = -r; i <= r; ++i) {
        const double value = std::exp(-(i * i + j * j + k * k) / (2.0 * sigma * sigma));
        weights[static_cast<std::size_t>((k + r) * w * w + (j + r) * w + (i + r))] = value;
        total += value;
      }
  for (auto& v : weights) v /= total;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : a.voxels()) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b.voxels()) lo = std::min(lo, v), hi = std::max(hi, v);
  const double L = hi - lo;
  const double c1 = std::pow(k1 * L, 2);
  const double c2 = std::pow(k2 * L, 2);

  const Dims& d = a.dims();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t cz = r; cz + r < d.nz; ++cz)
    for (std::size_t cy = r; cy + r < d.ny; ++cy)
      for (std::size_t cx = r; cx + r < d.nx; ++cx) {
        double mx = 0.0, my = 0.0;
        for (int k = -r; k <= r; ++k)
          for (int j = -r; j <= r; ++j)
            for (int i = -r; i <= r; ++i) {
              const double wt = weights[static_cast<std::size_t>((k + r) * w * w + (j + r) * w + (i + r))];
              mx += wt * a.at(cx + i, cy + j, cz + k);
              my += wt * b.at(cx + i, cy + j, cz + k);
            }
        double vx = 0.0, vy = 0.0, cxy = 0.0;
        for (int k = -r; k <= r; ++k)
          for (int j = -r; j <= r; ++j)
            for (int i = -r; i <= r; ++i) {
              const double wt = weights[static_cast<std::size_t>((k + r) * w * w + (j + r) * w + (i + r))];
              const double dx = a.at(cx + i, cy + j, cz + k) - mx;
              const double dy = b.at(cx + i, cy + j, cz + k) - my;
              vx += wt * dx * dx;
              vy += wt * dy * dy;
              cxy += wt * dx * dy;
            }
        sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return sum / static_cast<double>(count);
}

double dice(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label) {
  const auto sa = voxel_set(a, label);
  const auto sb = voxel_set(b, label);
  if (sa.empty() && sb.empty()) return 1.0;
  std::vector<Coord> both;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(sa.size() + sb.size());
}

double dice_macro(const SegmentationMask& a, const SegmentationMask& b) {
  auto labels = labels_of(a);
  for (auto l : labels_of(b)) labels.insert(l);
  double sum = 0.0;
  for (auto l : labels) sum += dice(a, b, l);
  return sum / static_cast<double>(labels.size());
}

std::vector<std::array<double, 3>> surface_points(const SegmentationMask& m, std::int32_t label) {
  const auto inside = voxel_set(m, label);
  std::vector<std::array<double, 3>> out;
  const long long offsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  const Dims& d = m.dims();
  for (const auto& [x, y, z] : inside) {
    bool boundary = false;
    for (const auto& o : offsets) {
      const long long nx = static_cast<long long>(x) + o[0];
      const long long ny = static_cast<long long>(y) + o[1];
      const long long nz = static_cast<long long>(z) + o[2];
      if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<long long>(d.nx) ||
          ny >= static_cast<long long>(d.ny) || nz >= static_cast<long long>(d.nz) ||
          !inside.contains({static_cast<std::size_t>(nx), static_cast<std::size_t>(ny),
                            static_cast<std::size_t>(nz)})) {
        boundary = true;
        break;
      }
    }
    if (boundary) {
      out.push_back({static_cast<double>(x) * m.spacing()[0], static_cast<double>(y) * m.spacing()[1],
                     static_cast<double>(z) * m.spacing()[2]});
    }
  }
  return out;
}

double asd(const SegmentationMask& a, const SegmentationMask& b, std::int32_t label) {
  const auto pa = surface_points(a, label);
  const auto pb = surface_points(b, label);
  if (pa.empty() && pb.empty()) return 0.0;
  if (pa.empty() || pb.empty()) {
    const Dims& d = a.dims();
    const auto& s = a.spacing();
    return 0.95 * std::sqrt(std::pow(d.nx * s[0], 2) + std::pow(d.ny * s[1], 2) + std::pow(d.nz * s[2], 2));
  }
  auto nearest = [](const std::array<double, 3>& p, const std::vector<std::array<double, 3>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : set) {
      best = std::min(best, std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]));
    }
    return best;
  };
  double total = 0.0;
  for (const auto& p : pa) total += nearest(p, pb);
  for (const auto& p : pb) total += nearest(p, pa);
  return total / static_cast<double>(pa.size() + pb.size());
}

double asd_macro(const SegmentationMask& a, const SegmentationMask& b) {
  auto labels = labels_of(a);
  for (auto l : labels_of(b)) labels.insert(l);
  double sum = 0.0;
  for (auto l : labels) sum += asd(a, b, l);
  return sum / static_cast<double>(labels.size());
}

double balanced_accuracy_at(const std::vector<double>& values, const std::vector<bool>& replica, double threshold) {
  double tp = 0, tn = 0, p = 0, n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool predicted = values[i] < threshold;
    if (replica[i]) {
      ++p;
      if (predicted) ++tp;
    } else {
      ++n;
      if (!predicted) ++tn;
    }
  }
  return (tp / p + tn / n) / 2.0;
}

double best_balanced_accuracy(const std::vector<double>& values, const std::vector<bool>& replica) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{sorted.front() - 1.0, sorted.back() + 1.0};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) candidates.push_back((sorted[i] + sorted[i + 1]) / 2.0);
  double best = 0.0;
  for (double t : candidates) best = std::max(best, balanced_accuracy_at(values, replica, t));
  return best;
}

}  // namespace relict::oracle
