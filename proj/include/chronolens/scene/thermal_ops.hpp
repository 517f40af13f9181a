#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/frames.hpp"

namespace chronolens::scene {

/// Affine map from target pixel index to source pixel index:
///   src = scale * (dst * src_size / dst_size) + offset
/// Offsets are in source pixels. Identity (scale 1, offset 0) stretches the
/// source grid over the target with index 0 aligned to index 0.
struct AlignmentParams {
  double scale_x = 1.0;
  double scale_y = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  /// Maps target pixel centers onto source pixel centers, so a source cell
  /// covers exactly its footprint in the target. Used for detection on
  /// registered grids, where the index-aligned identity shifts regions.
  static AlignmentParams pixel_centers(int src_w, int src_h, int dst_w, int dst_h) {
    return {1.0, 1.0, 0.5 * src_w / dst_w - 0.5, 0.5 * src_h / dst_h - 0.5};
  }
};

namespace detail {

inline double bilinear_clamped(const ThermalFrame& src, double sx, double sy) {
  const int w = src.width();
  const int h = src.height();
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  const double top = src.at(x0, y0) * (1.0 - fx) + src.at(x1, y0) * fx;
  const double bottom = src.at(x0, y1) * (1.0 - fx) + src.at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

}  // namespace detail

/// Resample a thermal grid onto the RGB pixel grid. Output values are convex
/// combinations of input cells, so the value range never widens.
inline ThermalFrame register_thermal(const ThermalFrame& thermal, int target_w, int target_h,
                                     const AlignmentParams& alignment = {}) {
  if (target_w < thermal.width() || target_h < thermal.height()) {
    throw UsageError("register_thermal: target " + std::to_string(target_w) + "x" +
                     std::to_string(target_h) + " smaller than source " +
                     std::to_string(thermal.width()) + "x" + std::to_string(thermal.height()));
  }
  const bool finite = std::isfinite(alignment.scale_x) && std::isfinite(alignment.scale_y) &&
                      std::isfinite(alignment.offset_x) && std::isfinite(alignment.offset_y);
  if (!finite || alignment.scale_x == 0.0 || alignment.scale_y == 0.0) {
    throw UsageError("register_thermal: degenerate alignment (non-invertible affine)");
  }
  const double step_x = static_cast<double>(thermal.width()) / target_w;
  const double step_y = static_cast<double>(thermal.height()) / target_h;
  std::vector<double> out(static_cast<std::size_t>(target_w) * target_h);
  for (int y = 0; y < target_h; ++y) {
    const double sy = alignment.scale_y * (y * step_y) + alignment.offset_y;
    for (int x = 0; x < target_w; ++x) {
      const double sx = alignment.scale_x * (x * step_x) + alignment.offset_x;
      out[static_cast<std::size_t>(y) * target_w + x] = detail::bilinear_clamped(thermal, sx, sy);
    }
  }
  return ThermalFrame(target_w, target_h, std::move(out), thermal.capture_time_s(),
                      thermal.ambient_hint_c());
}

inline constexpr double kBodyTemperatureC = 37.0;

inline NormalizedThermal normalize_thermal(const ThermalFrame& thermal, double ambient_c,
                                           double ref_max_c = kBodyTemperatureC) {
  if (!(ref_max_c > ambient_c)) {
    throw UsageError("normalize_thermal: ref_max_c must exceed ambient_c");
  }
  NormalizedThermal n{thermal.width(), thermal.height(), {}};
  n.values.reserve(thermal.size());
  const double span = ref_max_c - ambient_c;
  for (double t : thermal.temps()) n.values.push_back(std::clamp((t - ambient_c) / span, 0.0, 1.0));
  return n;
}

/// 256-entry black -> red -> yellow -> white ramp. Each step raises exactly one
/// channel, so BT.601 luminance is strictly increasing along the table.
inline const std::array<Rgb, 256>& pseudocolor_lut() {
  static const std::array<Rgb, 256> lut = [] {
    std::array<Rgb, 256> t{};
    for (int i = 0; i < 256; ++i) {
      t[i] = Rgb{static_cast<std::uint8_t>(std::clamp(3 * i, 0, 255)),
                 static_cast<std::uint8_t>(std::clamp(3 * i - 255, 0, 255)),
                 static_cast<std::uint8_t>(std::clamp(3 * i - 510, 0, 255))};
    }
    return t;
  }();
  return lut;
}

inline double luminance_bt601(Rgb c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

inline RgbFrame thermal_to_pseudocolor(const NormalizedThermal& norm, double capture_time_s = 0.0) {
  const auto& lut = pseudocolor_lut();
  std::vector<std::uint8_t> px;
  px.reserve(norm.values.size() * 3);
  for (std::size_t i = 0; i < norm.values.size(); ++i) {
    const double v = norm.values[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw UsageError("thermal_to_pseudocolor: value[" + std::to_string(i) + "] outside [0,1]");
    }
    const Rgb c = lut[static_cast<std::size_t>(std::lround(v * 255.0))];
    px.push_back(c.r);
    px.push_back(c.g);
    px.push_back(c.b);
  }
  return RgbFrame(norm.width, norm.height, std::move(px), capture_time_s);
}

}  // namespace chronolens::scene
