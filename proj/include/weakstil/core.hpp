#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace weakstil {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed inputs: bad flags, corrupt files, inconsistent datasets.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A statistic that is undefined for the given data (single class, constant series).
class UndefinedMetric : public Error {
public:
  using Error::Error;
};

struct TileFeature {
  std::uint32_t col = 0;
  std::uint32_t row = 0;
  std::vector<double> features;
};

/// One slide: a bag of tumor-bed tiles sharing one weak label.
///
/// Labels are fractions in [0,1]. Strata are opaque strings used only for
/// stratified splitting.
struct FeatureBag {
  std::string patient_id;
  std::string slide_id;
  std::size_t h_dim = 0;
  std::vector<TileFeature> tiles;
  double label = 0.0;
  std::string stratum;

  std::size_t size() const { return tiles.size(); }
};

/// Non-owning list of bags; splits route references rather than copying features.
using BagRefs = std::vector<std::reference_wrapper<const FeatureBag>>;

inline BagRefs refs_of(std::span<const FeatureBag> bags) { return BagRefs(bags.begin(), bags.end()); }

/// Physical constants of the tiling used by the detection baseline.
struct TileGeometry {
  double tile_px = 512.0;
  double mpp = 0.5;
  double til_radius_um = 4.0;

  double tile_area_um2() const {
    const double side = tile_px * mpp;
    return side * side;
  }
  double til_area_um2() const { return std::numbers::pi * til_radius_um * til_radius_um; }
  bool valid() const { return tile_px > 0.0 && mpp > 0.0 && til_radius_um > 0.0; }
};

/// Outcome of a structural check: empty problem means ok.
struct Validation {
  std::string problem;

  bool ok() const { return problem.empty(); }
  explicit operator bool() const { return ok(); }
};

inline Validation validate_bag(const FeatureBag& bag) {
  if (bag.h_dim == 0) return {"h_dim must be positive"};
  if (bag.tiles.empty()) return {"empty bag"};
  if (!std::isfinite(bag.label) || bag.label < 0.0 || bag.label > 1.0)
    return {"label out of range"};
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (std::size_t n = 0; n < bag.tiles.size(); ++n) {
    const TileFeature& tile = bag.tiles[n];
    if (tile.features.size() != bag.h_dim)
      return {"dimension mismatch at tile " + std::to_string(n)};
    for (std::size_t j = 0; j < tile.features.size(); ++j) {
      if (!std::isfinite(tile.features[j]))
        return {"non-finite feature at tile " + std::to_string(n) + ", index " + std::to_string(j)};
    }
    if (!seen.emplace(tile.col, tile.row).second)
      return {"duplicate coordinate (" + std::to_string(tile.col) + "," + std::to_string(tile.row) +
              ") at tile " + std::to_string(n)};
  }
  return {};
}

inline void require_valid(const FeatureBag& bag) {
  if (auto v = validate_bag(bag); !v)
    throw ValidationError("bag '" + bag.slide_id + "': " + v.problem);
}

/// Neumaier-compensated sum; result is independent of order up to a few ulps.
inline double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double x : values) {
    const double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x))
      carry += (sum - t) + x;
    else
      carry += (x - t) + sum;
    sum = t;
  }
  return sum + carry;
}

}  // namespace weakstil
