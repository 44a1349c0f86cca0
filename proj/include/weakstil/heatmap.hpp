#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "weakstil/core.hpp"
#include "weakstil/io.hpp"

namespace weakstil {

struct Rgb {
  std::uint8_t r = 255;
  std::uint8_t g = 255;
  std::uint8_t b = 255;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major RGB raster; untouched pixels are white.
struct HeatmapCanvas {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Rgb> pixels;

  HeatmapCanvas() = default;
  HeatmapCanvas(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h) {}

  Rgb& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  const Rgb& at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const HeatmapCanvas&, const HeatmapCanvas&) = default;
};

/// Blue (0) to red (1) linear ramp.
inline Rgb score_color(double s) {
  return Rgb{static_cast<std::uint8_t>(std::floor(255.0 * s + 0.5)), 0,
             static_cast<std::uint8_t>(std::floor(255.0 * (1.0 - s) + 0.5))};
}

inline HeatmapCanvas render(const FeatureBag& bag, std::span<const double> tile_scores, std::size_t scale = 1) {
  if (scale < 1) throw ValidationError("scale must be ≥ 1");
  if (tile_scores.size() != bag.tiles.size())
    throw ValidationError("expected " + std::to_string(bag.tiles.size()) + " tile scores, got " +
                          std::to_string(tile_scores.size()));
  if (bag.tiles.empty()) throw ValidationError("bag '" + bag.slide_id + "' has no tiles");
  std::size_t cols = 0, rows = 0;
  for (std::size_t n = 0; n < bag.tiles.size(); ++n) {
    const double s = tile_scores[n];
    if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("tile score out of [0,1] at tile " + std::to_string(n));
    cols = std::max<std::size_t>(cols, bag.tiles[n].col + std::size_t{1});
    rows = std::max<std::size_t>(rows, bag.tiles[n].row + std::size_t{1});
  }
  HeatmapCanvas canvas(cols * scale, rows * scale);
  for (std::size_t n = 0; n < bag.tiles.size(); ++n) {
    const Rgb c = score_color(tile_scores[n]);
    const std::size_t x0 = bag.tiles[n].col * scale;
    const std::size_t y0 = bag.tiles[n].row * scale;
    for (std::size_t dy = 0; dy < scale; ++dy)
      for (std::size_t dx = 0; dx < scale; ++dx) canvas.at(x0 + dx, y0 + dy) = c;
  }
  return canvas;
}

/// Binary PPM (P6) image of the canvas.
inline std::vector<std::uint8_t> encode_ppm(const HeatmapCanvas& canvas) {
  const std::string header = "P6\n" + std::to_string(canvas.width) + " " + std::to_string(canvas.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + 3 * canvas.pixels.size());
  for (const Rgb& p : canvas.pixels) {
    out.push_back(p.r);
    out.push_back(p.g);
    out.push_back(p.b);
  }
  return out;
}

inline void write_ppm(const HeatmapCanvas& canvas, const fs::path& path) {
  write_file_atomic(path, encode_ppm(canvas));
}

/// Parses the P6 subset `encode_ppm` emits (single-space/newline separators, maxval 255).
inline HeatmapCanvas decode_ppm(std::span<const std::uint8_t> b) {
  std::size_t at = 0;
  auto token = [&](const char* what) {
    std::string t;
    while (at < b.size() && b[at] != ' ' && b[at] != '\n') t.push_back(static_cast<char>(b[at++]));
    if (at >= b.size() || t.empty()) throw ValidationError(std::string("ppm: bad ") + what);
    ++at;
    return t;
  };
  auto number = [&](const char* what) {
    std::uint64_t v = 0;
    const std::string t = token(what);
    if (!detail::parse_u64(t, v)) throw ValidationError(std::string("ppm: bad ") + what);
    return v;
  };
  if (token("magic") != "P6") throw ValidationError("ppm: bad magic");
  const auto w = number("width");
  const auto h = number("height");
  if (number("maxval") != 255) throw ValidationError("ppm: maxval must be 255");
  if (w > (1u << 20) || h > (1u << 20) || b.size() - at != 3 * w * h) throw ValidationError("ppm: size mismatch");
  HeatmapCanvas c(w, h);
  for (auto& p : c.pixels) {
    p = Rgb{b[at], b[at + 1], b[at + 2]};
    at += 3;
  }
  return c;
}

}  // namespace weakstil
