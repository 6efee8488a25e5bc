#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "relict/errors.hpp"
#include "relict/segmentation_metrics.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace relict;

namespace {

SegmentationMask box(const std::string& id, Dims d, std::array<std::size_t, 3> lo, std::array<std::size_t, 3> hi,
                     std::int32_t label = 1, Spacing s = {1, 1, 1}) {
  std::vector<std::int32_t> labels(d.count(), 0);
  for (std::size_t z = lo[2]; z < hi[2]; ++z)
    for (std::size_t y = lo[1]; y < hi[1]; ++y)
      for (std::size_t x = lo[0]; x < hi[0]; ++x) labels[d.index(x, y, z)] = label;
  return SegmentationMask(id, d, s, std::move(labels));
}

SegmentationMask from_line(const std::string& id, std::vector<std::int32_t> labels) {
  const std::size_t n = labels.size();
  return SegmentationMask(id, {n, 1, 1}, {1, 1, 1}, std::move(labels));
}

}  // namespace

TEST_CASE("Dice hand values") {
  // TP 2, FP 1, FN 1.
  const auto a = from_line("a", {1, 1, 1, 0});
  const auto b = from_line("b", {1, 1, 0, 1});
  const auto c = confusion_counts(a, b, 1);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(dice_binary(a, b, 1) == 4.0 / 6.0);
  CHECK(dice_binary(a, a, 1) == 1.0);
  const auto empty = from_line("e", {0, 0, 0, 0});
  CHECK(dice_binary(empty, empty, 1) == 1.0);
  CHECK(dice_binary(a, empty, 1) == 0.0);
}

TEST_CASE("multiclass Dice averages over the label union") {
  const auto a = from_line("a", {1, 1, 2, 0});
  const auto b = from_line("b", {1, 0, 0, 3});
  // Label 1: 2*1/3, label 2: 0, label 3: 0.
  CHECK(dice_multiclass(a, b) == doctest::Approx((2.0 / 3.0) / 3.0).epsilon(1e-15));
  const auto empty = from_line("e", {0, 0, 0, 0});
  CHECK_THROWS_AS(dice_multiclass(empty, empty), DegenerateInputError);
}

TEST_CASE("Dice matches set oracles on random masks") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 30; ++i) {
    const auto a = relict::testing::uniform_mask("a", {6, 5, 4}, 3, rng);
    const auto b = relict::testing::uniform_mask("b", {6, 5, 4}, 3, rng);
    for (std::int32_t l = 1; l <= 3; ++l) CHECK(dice_binary(a, b, l) == oracle::dice(a, b, l));
    CHECK(dice_multiclass(a, b) == oracle::dice_macro(a, b));
    CHECK(dice_multiclass(a, b) == dice_multiclass(b, a));
  }
}

TEST_CASE("surface of a solid cube") {
  const auto m = box("m", {5, 5, 5}, {1, 1, 1}, {4, 4, 4});
  const auto s = extract_surface(m, 1);
  // A 3x3x3 cube keeps only its center as interior.
  CHECK(s.size() == 26);
  CHECK(std::is_sorted(s.voxels.begin(), s.voxels.end()));
  const auto full = box("f", {3, 3, 3}, {0, 0, 0}, {3, 3, 3});
  CHECK(extract_surface(full, 1).size() == 26);
}

TEST_CASE("ASD of two plates three voxels apart") {
  const Dims d{4, 4, 8};
  const auto a = box("a", d, {0, 0, 1}, {4, 4, 2});
  const auto b = box("b", d, {0, 0, 4}, {4, 4, 5});
  CHECK(asd_binary(a, b, 1) == 3.0);
  CHECK(asd_binary(a, b, 1, DistanceStrategy::distance_transform) == 3.0);
  CHECK(asd_binary(a, a, 1) == 0.0);
}

TEST_CASE("ASD uses physical spacing") {
  const Dims d{4, 4, 8};
  const Spacing s{1.0, 1.0, 2.5};
  const auto a = box("a", d, {0, 0, 1}, {4, 4, 2}, 1, s);
  const auto b = box("b", d, {0, 0, 4}, {4, 4, 5}, 1, s);
  CHECK(asd_binary(a, b, 1) == 7.5);
  CHECK(asd_binary(a, b, 1, DistanceStrategy::distance_transform) == 7.5);
}

TEST_CASE("ASD edge cases") {
  const Dims d{4, 5, 6};
  const Spacing s{1.0, 2.0, 0.5};
  const SegmentationMask empty("e", d, s, std::vector<std::int32_t>(d.count(), 0));
  const auto some = box("s", d, {1, 1, 1}, {3, 3, 3}, 1, s);
  CHECK(asd_binary(empty, empty, 1) == 0.0);
  const double fallback = 0.95 * std::sqrt(16.0 + 100.0 + 9.0);
  CHECK(empty_surface_fallback(d, s) == doctest::Approx(fallback).epsilon(1e-15));
  CHECK(asd_binary(empty, some, 1) == empty_surface_fallback(d, s));
  CHECK(asd_binary(some, empty, 1) == empty_surface_fallback(d, s));
  CHECK_THROWS_AS(asd_multiclass(empty, empty), DegenerateInputError);

  const auto other_grid = box("o", {4, 5, 5}, {1, 1, 1}, {3, 3, 3}, 1, s);
  CHECK_THROWS_AS(asd_binary(some, other_grid, 1), DimensionError);
  const auto other_spacing = box("o", d, {1, 1, 1}, {3, 3, 3}, 1, {1, 1, 1});
  CHECK_THROWS_AS(asd_binary(some, other_spacing, 1), DimensionError);
}

TEST_CASE("ASD strategies agree with the brute-force oracle") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 15; ++i) {
    const Spacing s{0.8, 1.0, 1.7};
    const auto a = relict::testing::blob_mask("a", {9, 8, 7}, 0.7, rng, s);
    const auto b = relict::testing::blob_mask("b", {9, 8, 7}, 0.7, rng, s);
    const double ref = oracle::asd(a, b, 1);
    CHECK(asd_binary(a, b, 1, DistanceStrategy::brute_force) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(asd_binary(a, b, 1, DistanceStrategy::distance_transform) == doctest::Approx(ref).epsilon(1e-12));
    CHECK(asd_binary(a, b, 1) == asd_binary(b, a, 1));
  }
}

TEST_CASE("multiclass ASD matches the oracle") {
  std::mt19937_64 rng(78);
  for (int i = 0; i < 10; ++i) {
    const auto a = relict::testing::uniform_mask("a", {6, 6, 6}, 2, rng);
    const auto b = relict::testing::uniform_mask("b", {6, 6, 6}, 2, rng);
    CHECK(asd_multiclass(a, b) == doctest::Approx(oracle::asd_macro(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("distance transform equals exhaustive nearest-seed distances") {
  std::mt19937_64 rng(91);
  const Dims d{7, 6, 5};
  const Spacing s{1.0, 0.6, 2.2};
  std::uniform_int_distribution<std::size_t> pick(0, d.count() - 1);
  std::vector<std::size_t> seeds;
  for (int i = 0; i < 9; ++i) seeds.push_back(pick(rng));
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  const auto edt = squared_distance_transform(d, s, seeds);
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        double best = 1e300;
        for (std::size_t seed : seeds) {
          const double sx = static_cast<double>(seed % d.nx);
          const double sy = static_cast<double>((seed / d.nx) % d.ny);
          const double sz = static_cast<double>(seed / (d.nx * d.ny));
          const double dx = (sx - x) * s[0], dy = (sy - y) * s[1], dz = (sz - z) * s[2];
          best = std::min(best, dx * dx + dy * dy + dz * dz);
        }
        CHECK(edt[d.index(x, y, z)] == doctest::Approx(best).epsilon(1e-12));
      }
}

TEST_CASE("prepared masks reproduce the direct computation") {
  std::mt19937_64 rng(5);
  auto a = std::make_shared<const SegmentationMask>(relict::testing::uniform_mask("a", {6, 7, 5}, 2, rng));
  auto b = std::make_shared<const SegmentationMask>(relict::testing::uniform_mask("b", {6, 7, 5}, 2, rng));
  const PreparedMask pa(a);
  const PreparedMask pb(b);
  CHECK(pa.find(1) != nullptr);
  CHECK(pa.find(9) == nullptr);
  CHECK(pa.memory_bytes() > 0);
  CHECK(asd_binary(pa, pb, 2) == doctest::Approx(asd_binary(*a, *b, 2)).epsilon(1e-12));
  CHECK(asd_multiclass(pa, pb) == doctest::Approx(asd_multiclass(*a, *b)).epsilon(1e-12));

  const std::int32_t only[] = {1};
  const PreparedMask partial(a, only);
  CHECK_THROWS_AS(asd_binary(partial, pb, 2), InputError);
}
