#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "mscate/data_model.hpp"

namespace mscate {

struct Point {
  double x = 0.0;  // column
  double y = 0.0;  // row
  friend bool operator==(const Point&, const Point&) = default;
};

// Square crop, band-major like RasterBundle.
struct ImagePatch {
  int size = 0;
  int bands = 0;
  std::vector<float> data;
  Point center;
  bool displaced = false;
  int shift_x = 0;  // Clamp-mode window shift, in pixels
  int shift_y = 0;

  float& at(int band, int row, int col) noexcept {
    return data[(static_cast<std::size_t>(band) * size + row) * size + col];
  }
  float at(int band, int row, int col) const noexcept {
    return data[(static_cast<std::size_t>(band) * size + row) * size + col];
  }
  std::span<const float> plane(int band) const noexcept {
    return {data.data() + static_cast<std::size_t>(band) * size * size, static_cast<std::size_t>(size) * size};
  }
};

enum class FetchMode { Strict, Clamp };

// Window start for width s around coordinate c: floor(c) - floor(s/2).
inline long window_start(double c, int s) noexcept {
  return static_cast<long>(std::floor(c)) - s / 2;
}

ImagePatch fetch(const RasterBundle& bundle, Point x, int size, FetchMode mode = FetchMode::Strict);

// Crop from an existing patch, in patch pixel coordinates. Strict only.
ImagePatch crop(const ImagePatch& source, Point x, int size);

// Uniform draw over integer centers whose Strict s_max window fits in the
// bundle. The draw is keyed by (seed, x).
Point displace_center(Point x, std::uint64_t seed, const RasterBundle& bundle, int s_max);

enum class PerturbationKind : std::uint8_t { Mask = 0, EdgeFade = 1, Contrast = 2, Rotate90 = 3 };

struct Perturbation {
  PerturbationKind kind = PerturbationKind::Mask;
  int mask_size = 2;
  // Unset: 2/s for a patch of width s, so the fade reaches 0 at the edge midpoints.
  std::optional<double> fade_size;
  double contrast_c = 0.5;

  static Perturbation mask(int size = 2) { return {PerturbationKind::Mask, size, std::nullopt, 0.5}; }
  static Perturbation edge_fade(std::optional<double> fade = std::nullopt) {
    return {PerturbationKind::EdgeFade, 2, fade, 0.5};
  }
  static Perturbation contrast(double c) { return {PerturbationKind::Contrast, 2, std::nullopt, c}; }
  static Perturbation rotate90() { return {PerturbationKind::Rotate90, 2, std::nullopt, 0.5}; }
};

const char* to_string(PerturbationKind kind);

// Returns a new patch; the input is not modified.
ImagePatch apply_perturbation(const ImagePatch& patch, const Perturbation& p);

// Area of intersection of the two s-by-s pixel windows divided by s^2.
double overlap_fraction(Point a, Point b, int size);

}  // namespace mscate
