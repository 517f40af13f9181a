#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/frames.hpp"

namespace chronolens::sim {

/// Scene-resolution temperature field, before sensor effects.
struct TemperatureGrid {
  int width = 0;
  int height = 0;
  std::vector<double> temps;

  double at(int x, int y) const { return temps[static_cast<std::size_t>(y) * width + x]; }
};

/// Consumer LWIR module; defaults follow an 80x60 handheld thermal camera.
struct SensorModel {
  int out_w = 80;
  int out_h = 60;
  double noise_sigma_c = 0.15;
  double quant_step_c = 0.1;
  std::uint64_t seed = 1;
};

namespace detail {

struct AxisWeight {
  int index;
  double weight;
};

// For each output cell, the scene cells it overlaps and the overlap fraction
// normalized to sum to one.
inline std::vector<std::vector<AxisWeight>> box_weights(int scene_n, int out_n) {
  std::vector<std::vector<AxisWeight>> w(out_n);
  const double step = static_cast<double>(scene_n) / out_n;
  for (int o = 0; o < out_n; ++o) {
    const double lo = o * step;
    const double hi = (o + 1) * step;
    for (int s = static_cast<int>(std::floor(lo)); s < scene_n && s < hi; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap > 1e-12) w[o].push_back({s, overlap / step});
    }
  }
  return w;
}

// Steps like 0.1 are applied as round(t * 10) / 10 so grid values stay the
// closest doubles to their decimal form.
inline double quantize(double t, double step) {
  const double inv = 1.0 / step;
  const double inv_r = std::round(inv);
  if (inv_r >= 1.0 && std::abs(inv - inv_r) < 1e-9) return std::round(t * inv_r) / inv_r;
  return std::round(t / step) * step;
}

}  // namespace detail

/// Area-average downsample, additive Gaussian noise, quantization. Same
/// inputs and seed give bit-identical output.
inline scene::ThermalFrame render_thermal_sensor(const TemperatureGrid& scene_temps, const SensorModel& sensor,
                                                 double capture_time_s = 0.0) {
  if (sensor.out_w <= 0 || sensor.out_h <= 0) throw UsageError("render_thermal_sensor: bad sensor size");
  if (sensor.out_w > scene_temps.width || sensor.out_h > scene_temps.height) {
    throw UsageError("render_thermal_sensor: sensor " + std::to_string(sensor.out_w) + "x" +
                     std::to_string(sensor.out_h) + " larger than scene " + std::to_string(scene_temps.width) +
                     "x" + std::to_string(scene_temps.height));
  }
  if (sensor.noise_sigma_c < 0.0) throw UsageError("render_thermal_sensor: noise_sigma_c must be >= 0");
  const auto wx = detail::box_weights(scene_temps.width, sensor.out_w);
  const auto wy = detail::box_weights(scene_temps.height, sensor.out_h);
  std::mt19937_64 rng(sensor.seed);
  std::normal_distribution<double> noise(0.0, sensor.noise_sigma_c > 0.0 ? sensor.noise_sigma_c : 1.0);
  std::vector<double> out(static_cast<std::size_t>(sensor.out_w) * sensor.out_h);
  for (int oy = 0; oy < sensor.out_h; ++oy) {
    for (int ox = 0; ox < sensor.out_w; ++ox) {
      double t = 0.0;
      for (const auto& ay : wy[oy])
        for (const auto& ax : wx[ox]) t += ay.weight * ax.weight * scene_temps.at(ax.index, ay.index);
      if (sensor.noise_sigma_c > 0.0) t += noise(rng);
      if (sensor.quant_step_c > 0.0) t = detail::quantize(t, sensor.quant_step_c);
      out[static_cast<std::size_t>(oy) * sensor.out_w + ox] =
          std::clamp(t, scene::ThermalFrame::kMinPlausibleC, scene::ThermalFrame::kMaxPlausibleC);
    }
  }
  return scene::ThermalFrame(sensor.out_w, sensor.out_h, std::move(out), capture_time_s);
}

}  // namespace chronolens::sim
