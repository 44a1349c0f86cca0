#pragma once

#include <cstdint>
#include <string>

#include "weakstil/core.hpp"

namespace weakstil {

/// Output of an external TIL detector for one slide.
struct DetectionSummary {
  std::string slide_id;
  std::uint64_t num_tils = 0;
  std::uint64_t num_tb_tiles = 1;
  TileGeometry geometry;
};

/// Fraction of the tumor bed covered by detected TILs:
/// (#TILs * pi r^2) / (#tiles * (tile_px * mpp)^2). Not clamped to 1.
inline double tb_til_percent(const DetectionSummary& s) {
  if (s.num_tb_tiles < 1) throw ValidationError("slide '" + s.slide_id + "': num_tb_tiles must be ≥ 1");
  if (!s.geometry.valid()) throw ValidationError("tile geometry must be strictly positive");
  const double til_area = static_cast<double>(s.num_tils) * s.geometry.til_area_um2();
  const double bed_area = static_cast<double>(s.num_tb_tiles) * s.geometry.tile_area_um2();
  return til_area / bed_area;
}

}  // namespace weakstil
