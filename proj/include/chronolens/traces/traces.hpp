#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <climits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/metrics/segmentation.hpp"
#include "chronolens/scene/frames.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/scene/thermal_ops.hpp"

namespace chronolens::traces {

using scene::Mask;
using scene::Rect;
using scene::ThermalFrame;

enum class Grade { faint, moderate, strong };

inline std::string to_string(Grade g) {
  switch (g) {
    case Grade::strong: return "strong";
    case Grade::moderate: return "moderate";
    case Grade::faint: return "faint";
  }
  return "?";
}

struct GradeThresholds {
  double strong_c = 4.0;
  double moderate_c = 1.5;
  double faint_c = 0.3;
};

/// Lower bounds are inclusive. Below the faint bound there is no trace.
inline Grade grade_trace(double peak_dt_c, const GradeThresholds& th = {}) {
  if (peak_dt_c >= th.strong_c) return Grade::strong;
  if (peak_dt_c >= th.moderate_c) return Grade::moderate;
  if (peak_dt_c >= th.faint_c) return Grade::faint;
  throw UsageError("grade_trace: peak dT " + std::to_string(peak_dt_c) + " C is below the faint threshold");
}

struct TraceRegion {
  Mask mask;
  std::size_t area_px = 0;
  double peak_dt_c = 0.0;
  double mean_dt_c = 0.0;
  Grade grade = Grade::faint;
  Rect bbox;
  std::optional<std::string> object_label;
};

struct TraceInventory {
  double ambient_c = 0.0;
  std::vector<TraceRegion> regions;  // peak dT descending
  std::vector<std::string> negatives;
};

/// Median of all cells; even counts average the middle pair.
inline double estimate_ambient(const ThermalFrame& thermal) {
  if (thermal.size() == 0) throw UsageError("estimate_ambient: empty frame");
  std::vector<double> v(thermal.temps().begin(), thermal.temps().end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return (lower + upper) / 2.0;
}

/// Half of the hottest cell's excess over ambient: a full-width-at-half-max cut.
inline double half_max_threshold(const ThermalFrame& thermal, double ambient_c) {
  double peak = 0.0;
  for (double t : thermal.temps()) peak = std::max(peak, t - ambient_c);
  return peak / 2.0;
}

struct DetectOptions {
  std::size_t min_area_px = 4;
  GradeThresholds grades;
};

/// 8-connected regions of cells at least `threshold_dt_c` above ambient.
/// Regions smaller than min_area_px or peaking below the faint grade are dropped.
inline TraceInventory detect_traces(const ThermalFrame& thermal, double ambient_c, double threshold_dt_c,
                                    const DetectOptions& opt = {}) {
  if (!(threshold_dt_c > 0.0)) throw UsageError("detect_traces: threshold_dt_c must be > 0");
  const int w = thermal.width();
  const int h = thermal.height();
  TraceInventory inv;
  inv.ambient_c = ambient_c;
  std::vector<std::uint8_t> hot(thermal.size());
  for (std::size_t i = 0; i < hot.size(); ++i) hot[i] = thermal.temps()[i] - ambient_c >= threshold_dt_c;
  std::vector<std::uint8_t> seen(thermal.size(), 0);
  std::vector<int> stack;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      const std::size_t s = static_cast<std::size_t>(sy) * w + sx;
      if (!hot[s] || seen[s]) continue;
      TraceRegion r;
      r.mask = Mask(w, h);
      int x0 = INT_MAX, y0 = INT_MAX, x1 = -1, y1 = -1;
      double sum = 0.0;
      double peak = -1e300;
      seen[s] = 1;
      stack.assign(1, static_cast<int>(s));
      while (!stack.empty()) {
        const int c = stack.back();
        stack.pop_back();
        const int cx = c % w;
        const int cy = c / w;
        r.mask.cells[c] = 1;
        ++r.area_px;
        const double dt = thermal.temps()[c] - ambient_c;
        sum += dt;
        peak = std::max(peak, dt);
        x0 = std::min(x0, cx);
        y0 = std::min(y0, cy);
        x1 = std::max(x1, cx);
        y1 = std::max(y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
            if (hot[n] && !seen[n]) {
              seen[n] = 1;
              stack.push_back(static_cast<int>(n));
            }
          }
        }
      }
      if (r.area_px < opt.min_area_px || peak < opt.grades.faint_c) continue;
      r.peak_dt_c = peak;
      r.mean_dt_c = sum / static_cast<double>(r.area_px);
      r.grade = grade_trace(peak, opt.grades);
      r.bbox = Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
      inv.regions.push_back(std::move(r));
    }
  }
  std::stable_sort(inv.regions.begin(), inv.regions.end(),
                   [](const TraceRegion& a, const TraceRegion& b) { return a.peak_dt_c > b.peak_dt_c; });
  return inv;
}

/// Names each region after the majority class beneath it and lists the
/// classes without any heat. Background and person are never negatives.
inline void attach_labels(TraceInventory& inv, const metrics::LabelMap& labels,
                          const std::set<std::string>& ignored = {"background", "person"}) {
  std::set<std::string> warm;
  for (auto& r : inv.regions) {
    if (r.mask.width != labels.width || r.mask.height != labels.height) {
      throw UsageError("attach_labels: label map does not match the registered thermal grid");
    }
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < r.mask.cells.size(); ++i) {
      if (r.mask.cells[i]) ++votes[labels.labels[i]];
    }
    int best = -1;
    std::size_t best_n = 0;
    for (const auto& [id, n] : votes) {
      const auto& name = labels.class_names.at(id);
      if (ignored.count(name)) continue;
      if (n > best_n) {
        best = id;
        best_n = n;
      }
    }
    if (best >= 0) {
      r.object_label = labels.class_names.at(best);
      warm.insert(*r.object_label);
    }
  }
  inv.negatives.clear();
  for (const auto& [id, name] : labels.class_names) {
    if (!ignored.count(name) && !warm.count(name)) inv.negatives.push_back(name);
  }
}

inline std::string position_bucket(const Rect& bbox, int frame_width) {
  const double cx = bbox.x + bbox.w / 2.0;
  if (cx < frame_width / 3.0) return "left";
  if (cx < 2.0 * frame_width / 3.0) return "center";
  return "right";
}

/// Evidence lines for prompt embedding, e.g.
///   "chair_seat: strong trace, center (area 1600 px)"
///   "no heat: wall"
inline std::vector<std::string> inventory_summary(TraceInventory inv,
                                                  const std::optional<metrics::LabelMap>& object_labels = std::nullopt) {
  if (object_labels) attach_labels(inv, *object_labels);
  std::vector<std::string> lines;
  if (inv.regions.empty() && inv.negatives.empty()) return {"no thermographic traces detected"};
  if (inv.regions.empty()) lines.push_back("no thermographic traces detected");
  for (const auto& r : inv.regions) {
    lines.push_back(r.object_label.value_or("unlabeled region") + ": " + to_string(r.grade) + " trace, " +
                    position_bucket(r.bbox, r.mask.width) + " (area " + std::to_string(r.area_px) + " px)");
  }
  for (const auto& n : inv.negatives) lines.push_back("no heat: " + n);
  return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) s += "\n";
    s += lines[i];
  }
  return s;
}

inline nlohmann::json to_json(const TraceInventory& inv) {
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : inv.regions) {
    regions.push_back({{"area_px", r.area_px},
                       {"peak_dt_c", r.peak_dt_c},
                       {"mean_dt_c", r.mean_dt_c},
                       {"grade", to_string(r.grade)},
                       {"bbox", {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h}},
                       {"object_label", r.object_label ? nlohmann::json(*r.object_label) : nlohmann::json(nullptr)}});
  }
  return {{"ambient_c", inv.ambient_c}, {"regions", regions}, {"negatives", inv.negatives}};
}

/// Area-weighted mean dT of the regions at the frame's half-max cut, on the
/// native sensor grid. Zero when nothing rises above ambient.
inline double mean_trace_dt(const ThermalFrame& thermal) {
  const double ambient = thermal.ambient_hint_c().value_or(estimate_ambient(thermal));
  const double cut = half_max_threshold(thermal, ambient);
  if (!(cut > 0.0)) return 0.0;
  DetectOptions opt;
  opt.min_area_px = 1;
  opt.grades.faint_c = 0.0;
  const TraceInventory inv = detect_traces(thermal, ambient, cut, opt);
  double sum = 0.0;
  std::size_t area = 0;
  for (const auto& r : inv.regions) {
    sum += r.mean_dt_c * static_cast<double>(r.area_px);
    area += r.area_px;
  }
  return area ? sum / static_cast<double>(area) : 0.0;
}

/// Detection on the capture's thermal frame registered to the RGB grid.
/// min_area_px counts RGB pixels, so it is larger than for native grids.
struct TraceSettings {
  double threshold_dt_c = 1.0;
  DetectOptions detect{64, {}};
};

inline TraceInventory analyze_capture(const scene::PairedCapture& capture, const TraceSettings& settings = {},
                                      const std::optional<metrics::LabelMap>& object_labels = std::nullopt) {
  const auto& th = capture.thermal;
  const int w = capture.rgb.width();
  const int h = capture.rgb.height();
  const double ambient = th.ambient_hint_c().value_or(estimate_ambient(th));
  const auto registered =
      scene::register_thermal(th, w, h, scene::AlignmentParams::pixel_centers(th.width(), th.height(), w, h));
  TraceInventory inv = detect_traces(registered, ambient, settings.threshold_dt_c, settings.detect);
  if (object_labels) attach_labels(inv, *object_labels);
  return inv;
}

}  // namespace chronolens::traces
