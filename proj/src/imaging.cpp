#include "mscate/imaging.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "mscate/error.hpp"
#include "mscate/rng.hpp"

namespace mscate {

const char* to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Mask: return "Mask";
    case PerturbationKind::EdgeFade: return "EdgeFade";
    case PerturbationKind::Contrast: return "Contrast";
    case PerturbationKind::Rotate90: return "Rotate90";
  }
  return "?";
}

ImagePatch fetch(const RasterBundle& bundle, Point x, int size, FetchMode mode) {
  require(size >= 1, ErrorCode::InvalidArgument, "patch size must be >= 1");
  const double cx = x.x - bundle.origin_x;
  const double cy = x.y - bundle.origin_y;
  require(std::isfinite(cx) && std::isfinite(cy) && cx >= 0 && cy >= 0 && cx < bundle.width && cy < bundle.height,
          ErrorCode::OutOfBounds, "center outside raster");
  long col0 = window_start(cx, size);
  long row0 = window_start(cy, size);
  int shift_x = 0, shift_y = 0;
  const bool fits_x = col0 >= 0 && col0 + size <= bundle.width;
  const bool fits_y = row0 >= 0 && row0 + size <= bundle.height;
  if (!fits_x || !fits_y) {
    require(mode == FetchMode::Clamp, ErrorCode::OutOfBounds,
            "window of size " + std::to_string(size) + " at (" + std::to_string(cx) + ", " + std::to_string(cy) +
                ") exceeds " + std::to_string(bundle.width) + "x" + std::to_string(bundle.height) + " raster");
    require(size <= bundle.width && size <= bundle.height, ErrorCode::OutOfBounds,
            "window of size " + std::to_string(size) + " larger than raster");
    const long c = std::clamp<long>(col0, 0, bundle.width - size);
    const long r = std::clamp<long>(row0, 0, bundle.height - size);
    shift_x = static_cast<int>(c - col0);
    shift_y = static_cast<int>(r - row0);
    col0 = c;
    row0 = r;
  }

  ImagePatch p;
  p.size = size;
  p.bands = bundle.bands;
  p.center = x;
  p.shift_x = shift_x;
  p.shift_y = shift_y;
  p.data.resize(static_cast<std::size_t>(size) * size * bundle.bands);
  for (int b = 0; b < bundle.bands; ++b) {
    for (int r = 0; r < size; ++r) {
      const float* src = bundle.data.data() + (static_cast<std::size_t>(b) * bundle.height + (row0 + r)) * bundle.width + col0;
      std::copy(src, src + size, &p.at(b, r, 0));
    }
  }
  return p;
}

ImagePatch crop(const ImagePatch& source, Point x, int size) {
  require(size >= 1, ErrorCode::InvalidArgument, "patch size must be >= 1");
  const long col0 = window_start(x.x, size);
  const long row0 = window_start(x.y, size);
  require(col0 >= 0 && row0 >= 0 && col0 + size <= source.size && row0 + size <= source.size, ErrorCode::OutOfBounds,
          "crop window exceeds source patch");
  ImagePatch p;
  p.size = size;
  p.bands = source.bands;
  p.center = x;
  p.displaced = source.displaced;
  p.data.resize(static_cast<std::size_t>(size) * size * source.bands);
  for (int b = 0; b < source.bands; ++b) {
    for (int r = 0; r < size; ++r) {
      const float* src = &source.data[(static_cast<std::size_t>(b) * source.size + (row0 + r)) * source.size + col0];
      std::copy(src, src + size, &p.at(b, r, 0));
    }
  }
  return p;
}

Point displace_center(Point x, std::uint64_t seed, const RasterBundle& bundle, int s_max) {
  require(s_max >= 1, ErrorCode::InvalidArgument, "s_max must be >= 1");
  // Valid floor(c) satisfy c - s/2 >= 0 and c - s/2 + s <= extent.
  const long lo = s_max / 2;
  const long hi_x = bundle.width - s_max + s_max / 2;
  const long hi_y = bundle.height - s_max + s_max / 2;
  require(hi_x >= lo && hi_y >= lo, ErrorCode::NoValidCenter,
          "no " + std::to_string(s_max) + "-pixel window fits in the raster");
  const std::uint64_t key = derive_seed(seed, std::bit_cast<std::uint64_t>(x.x), std::bit_cast<std::uint64_t>(x.y));
  Rng rng(key);
  const long cx = lo + static_cast<long>(rng.index(static_cast<std::uint64_t>(hi_x - lo + 1)));
  const long cy = lo + static_cast<long>(rng.index(static_cast<std::uint64_t>(hi_y - lo + 1)));
  return {static_cast<double>(cx) + bundle.origin_x, static_cast<double>(cy) + bundle.origin_y};
}

ImagePatch apply_perturbation(const ImagePatch& patch, const Perturbation& p) {
  ImagePatch out = patch;
  const int s = patch.size;
  switch (p.kind) {
    case PerturbationKind::Mask: {
      require(p.mask_size >= 1, ErrorCode::InvalidArgument, "mask_size must be >= 1");
      require(p.mask_size <= s, ErrorCode::MaskTooLarge,
              "mask " + std::to_string(p.mask_size) + " on " + std::to_string(s) + "-pixel patch");
      const int start = s / 2 - p.mask_size / 2;
      for (int b = 0; b < out.bands; ++b)
        for (int r = start; r < start + p.mask_size; ++r)
          for (int c = start; c < start + p.mask_size; ++c) out.at(b, r, c) = 0.0f;
      break;
    }
    case PerturbationKind::EdgeFade: {
      const double fade = p.fade_size.value_or(2.0 / s);
      require(fade > 0.0, ErrorCode::InvalidArgument, "fade_size must be > 0");
      const double mid = (s - 1) / 2.0;
      for (int r = 0; r < s; ++r) {
        for (int c = 0; c < s; ++c) {
          const double d = std::hypot(r - mid, c - mid);
          const double m = std::clamp(1.0 - d * fade, 0.0, 1.0);
          for (int b = 0; b < out.bands; ++b) out.at(b, r, c) = static_cast<float>(out.at(b, r, c) * m);
        }
      }
      break;
    }
    case PerturbationKind::Contrast: {
      require(p.contrast_c > 0.0, ErrorCode::InvalidArgument, "contrast_c must be > 0");
      const std::size_t n = static_cast<std::size_t>(s) * s;
      for (int b = 0; b < out.bands; ++b) {
        const auto plane = patch.plane(b);
        double sum = 0.0;
        for (float v : plane) sum += v;
        const double mean = sum / static_cast<double>(n);
        float* dst = out.data.data() + static_cast<std::size_t>(b) * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(mean + p.contrast_c * (plane[i] - mean));
      }
      break;
    }
    case PerturbationKind::Rotate90: {
      // Counter-clockwise: new(r, c) = old(c, s-1-r).
      for (int b = 0; b < out.bands; ++b)
        for (int r = 0; r < s; ++r)
          for (int c = 0; c < s; ++c) out.at(b, r, c) = patch.at(b, c, s - 1 - r);
      break;
    }
  }
  return out;
}

double overlap_fraction(Point a, Point b, int size) {
  require(size >= 1, ErrorCode::InvalidArgument, "size must be >= 1");
  const long dx = std::labs(window_start(a.x, size) - window_start(b.x, size));
  const long dy = std::labs(window_start(a.y, size) - window_start(b.y, size));
  const long ox = std::max(0L, size - dx);
  const long oy = std::max(0L, size - dy);
  return static_cast<double>(ox) * static_cast<double>(oy) / (static_cast<double>(size) * size);
}

}  // namespace mscate
