#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"

namespace chronolens::sim {

struct Material {
  std::string name;
  double tau_cool_s = 90.0;
  double tau_heat_s = 20.0;
  double coupling = 0.8;  // fraction of the body-ambient gap reached at equilibrium

  void validate() const {
    if (!(tau_cool_s > 0.0)) throw DataError("material " + name + ": tau_cool_s must be > 0");
    if (!(tau_heat_s > 0.0)) throw DataError("material " + name + ": tau_heat_s must be > 0");
    if (!(coupling > 0.0 && coupling <= 1.0)) throw DataError("material " + name + ": coupling must be in (0,1]");
  }
};

/// Engineering defaults, not measured constants. Chosen so a 30 s contact
/// stays detectable at 30 s and is marginal by 120 s.
inline const std::map<std::string, Material>& default_materials() {
  static const std::map<std::string, Material> m = {
      {"upholstered_chair", {"upholstered_chair", 90.0, 20.0, 0.8}},
      {"painted_wall", {"painted_wall", 150.0, 30.0, 0.6}},
      {"book_cover", {"book_cover", 60.0, 15.0, 0.7}},
      {"wood_table", {"wood_table", 120.0, 40.0, 0.5}},
  };
  return m;
}

/// Surface temperature after `contact_s` seconds of contact, starting from ambient.
inline double heat_deposition(const Material& material, double ambient_c, double body_temp_c, double contact_s) {
  if (contact_s < 0.0) throw UsageError("heat_deposition: contact_s must be >= 0");
  return ambient_c +
         material.coupling * (body_temp_c - ambient_c) * (1.0 - std::exp(-contact_s / material.tau_heat_s));
}

/// Newtonian relaxation toward ambient.
inline double cooled_temperature(double surface_temp_c, double ambient_c, const Material& material,
                                 double elapsed_s) {
  if (elapsed_s < 0.0) throw UsageError("cooled_temperature: elapsed_s must be >= 0");
  return ambient_c + (surface_temp_c - ambient_c) * std::exp(-elapsed_s / material.tau_cool_s);
}

struct ContactInterval {
  double t_start_s = 0.0;
  double t_end_s = 0.0;
  double body_temp_c = 37.0;
};

/// Temperature at time `t` of a surface cell touched during `contacts`
/// (sorted by start). Heating relaxes toward the coupled equilibrium with
/// tau_heat; between and after contacts the cell cools with tau_cool.
inline double surface_temperature_at(double t, double ambient_c, const Material& material,
                                     std::span<const ContactInterval> contacts) {
  double temp = ambient_c;
  std::optional<double> last;  // end of the most recent heating, if any
  for (const auto& c : contacts) {
    if (c.t_start_s >= t) break;
    if (last && c.t_start_s > *last) temp = cooled_temperature(temp, ambient_c, material, c.t_start_s - *last);
    const double from = last ? std::max(*last, c.t_start_s) : c.t_start_s;
    const double to = std::min(t, c.t_end_s);
    if (to > from) {
      const double target = ambient_c + material.coupling * (c.body_temp_c - ambient_c);
      temp = target + (temp - target) * std::exp(-(to - from) / material.tau_heat_s);
    }
    last = std::max(from, to);
  }
  if (last && t > *last) temp = cooled_temperature(temp, ambient_c, material, t - *last);
  return temp;
}

}  // namespace chronolens::sim
