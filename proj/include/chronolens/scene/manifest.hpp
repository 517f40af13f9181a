#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/frames.hpp"
#include "chronolens/scene/png_io.hpp"

namespace chronolens::scene {

namespace fs = std::filesystem;
using nlohmann::json;

/// Maximum allowed gap between RGB and thermal timestamps of one capture.
/// The thermal sensor runs at 8.7 Hz (~0.115 s period).
inline constexpr double kPairTimeToleranceS = 0.2;

struct PairedCapture {
  RgbFrame rgb;
  ThermalFrame thermal;
  double delay_s = 0.0;
  std::string scenario_id;

  void validate(const std::string& where = "capture") const {
    if (!(delay_s >= 0.0) || !std::isfinite(delay_s)) {
      throw DataError(where + ".delay_s: must be >= 0");
    }
    if (std::abs(rgb.capture_time_s() - thermal.capture_time_s()) > kPairTimeToleranceS) {
      throw DataError(where + ": rgb and thermal capture times differ by more than 0.2 s");
    }
  }
};

enum class ScenarioKind { sit_chair, lean_wall, touch_object };

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::sit_chair: return "sit_chair";
    case ScenarioKind::lean_wall: return "lean_wall";
    case ScenarioKind::touch_object: return "touch_object";
  }
  return "?";
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "sit_chair") return ScenarioKind::sit_chair;
  if (s == "lean_wall") return ScenarioKind::lean_wall;
  if (s == "touch_object") return ScenarioKind::touch_object;
  throw DataError("kind: unknown scenario kind '" + s + "'");
}

/// Annotation files for the ground-truth frame. Paths are absolute once loaded.
struct Annotations {
  std::optional<fs::path> keypoints_path;
  std::optional<fs::path> labels_path;
  /// Optional color->class table for flat-shaded synthetic scenes.
  std::optional<fs::path> palette_path;

  bool empty() const { return !keypoints_path && !labels_path && !palette_path; }
};

struct ScenarioManifest {
  std::string scenario_id;
  ScenarioKind kind = ScenarioKind::sit_chair;
  double contact_duration_s = 0.0;
  PairedCapture ground_truth;
  std::vector<PairedCapture> observations;  // delays strictly increasing, all > 0
  Annotations annotations;

  std::vector<double> delays() const {
    std::vector<double> d;
    for (const auto& o : observations) d.push_back(o.delay_s);
    return d;
  }

  const PairedCapture* observation_at(double delay_s) const {
    for (const auto& o : observations) {
      if (std::abs(o.delay_s - delay_s) < 1e-9) return &o;
    }
    return nullptr;
  }

  /// Sorts observations and checks every structural invariant.
  void normalize_and_validate() {
    if (scenario_id.empty()) throw DataError("scenario_id: must be nonempty");
    if (!(contact_duration_s >= 0.0)) throw DataError("contact_duration_s: must be >= 0");
    ground_truth.validate("ground_truth");
    if (ground_truth.delay_s != 0.0) throw DataError("ground_truth: ground truth must be delay 0");
    std::stable_sort(observations.begin(), observations.end(),
                     [](const PairedCapture& a, const PairedCapture& b) { return a.delay_s < b.delay_s; });
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const std::string where = "observations[" + std::to_string(i) + "]";
      observations[i].validate(where);
      if (!(observations[i].delay_s > 0.0)) throw DataError(where + ".delay_s: must be > 0");
      if (i > 0 && !(observations[i].delay_s > observations[i - 1].delay_s)) {
        throw DataError(where + ".delay_s: duplicate delay " + std::to_string(observations[i].delay_s));
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Thermal PNG: 16-bit gray counts + sidecar JSON mapping counts to Celsius.

struct ThermalEncoding {
  double scale_c_per_count = 0.01;
  double offset_c = -40.0;
};

inline fs::path thermal_sidecar_path(const fs::path& png_path) {
  fs::path p = png_path;
  p.replace_extension(".json");
  return p;
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

inline void write_json_file(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline ThermalFrame read_thermal_png(const fs::path& path, double capture_time_s = 0.0) {
  const json side = read_json_file(thermal_sidecar_path(path));
  if (!side.contains("scale_c_per_count") || !side.contains("offset_c")) {
    throw DataError(thermal_sidecar_path(path).string() + ": requires scale_c_per_count and offset_c");
  }
  const double scale = side.at("scale_c_per_count").get<double>();
  const double offset = side.at("offset_c").get<double>();
  std::optional<double> hint;
  if (side.contains("ambient_hint_c") && !side.at("ambient_hint_c").is_null()) {
    hint = side.at("ambient_hint_c").get<double>();
  }
  PngImage img;
  try {
    img = decode_png(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (img.channels != 1 || img.bit_depth != 16) {
    throw DataError(path.string() + ": thermal grid must be 16-bit single-channel PNG");
  }
  std::vector<double> temps;
  temps.reserve(img.samples16.size());
  for (std::uint16_t c : img.samples16) temps.push_back(c * scale + offset);
  return ThermalFrame(img.width, img.height, std::move(temps), capture_time_s, hint);
}

inline void write_thermal_png(const fs::path& path, const ThermalFrame& frame,
                              const ThermalEncoding& enc = {}) {
  std::vector<std::uint16_t> counts;
  counts.reserve(frame.size());
  for (double t : frame.temps()) {
    const double c = std::round((t - enc.offset_c) / enc.scale_c_per_count);
    counts.push_back(static_cast<std::uint16_t>(std::clamp(c, 0.0, 65535.0)));
  }
  write_file_bytes(path, encode_png(frame.width(), frame.height(), 1, 16, counts.data()));
  json side = {{"scale_c_per_count", enc.scale_c_per_count}, {"offset_c", enc.offset_c}};
  if (frame.ambient_hint_c()) side["ambient_hint_c"] = *frame.ambient_hint_c();
  write_json_file(thermal_sidecar_path(path), side);
}

// ---------------------------------------------------------------------------
// Manifest JSON.

namespace detail {

template <typename T>
T require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw DataError(where + "." + key + ": missing field");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(where + "." + key + ": wrong type");
  }
}

inline std::optional<fs::path> optional_path(const json& j, const std::string& key, const fs::path& base) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return base / j.at(key).get<std::string>();
}

}  // namespace detail

inline ScenarioManifest load_manifest(const fs::path& path) {
  const json doc = read_json_file(path);
  const fs::path base = fs::absolute(path).parent_path();
  ScenarioManifest m;
  m.scenario_id = detail::require<std::string>(doc, "scenario_id", "manifest");
  m.kind = scenario_kind_from_string(detail::require<std::string>(doc, "kind", "manifest"));
  m.contact_duration_s = detail::require<double>(doc, "contact_duration_s", "manifest");
  if (!doc.contains("entries") || !doc.at("entries").is_array()) {
    throw DataError("manifest.entries: missing or not an array");
  }
  std::vector<PairedCapture> captures;
  const auto& entries = doc.at("entries");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string where = "manifest.entries[" + std::to_string(i) + "]";
    const json& e = entries[i];
    PairedCapture c;
    c.scenario_id = m.scenario_id;
    c.delay_s = detail::require<double>(e, "delay_s", where);
    const double rgb_t = e.value("rgb_time_s", c.delay_s);
    const double th_t = e.value("thermal_time_s", c.delay_s);
    const auto rgb_path = base / detail::require<std::string>(e, "rgb_path", where);
    const auto th_path = base / detail::require<std::string>(e, "thermal_path", where);
    try {
      c.rgb = read_rgb_png(rgb_path, rgb_t);
    } catch (const DataError& err) {
      throw DataError(where + ".rgb_path: " + err.what());
    }
    try {
      c.thermal = read_thermal_png(th_path, th_t);
    } catch (const DataError& err) {
      throw DataError(where + ".thermal_path: " + err.what());
    }
    c.validate(where);
    captures.push_back(std::move(c));
  }
  if (captures.empty()) throw DataError("manifest.entries: no captures");
  auto gt = std::min_element(captures.begin(), captures.end(),
                             [](const auto& a, const auto& b) { return a.delay_s < b.delay_s; });
  if (gt->delay_s != 0.0) throw DataError("manifest: ground truth must be delay 0");
  m.ground_truth = std::move(*gt);
  captures.erase(gt);
  m.observations = std::move(captures);
  if (doc.contains("annotations") && doc.at("annotations").is_object()) {
    const json& a = doc.at("annotations");
    m.annotations.keypoints_path = detail::optional_path(a, "keypoints_path", base);
    m.annotations.labels_path = detail::optional_path(a, "labels_path", base);
    m.annotations.palette_path = detail::optional_path(a, "palette_path", base);
  }
  m.normalize_and_validate();
  return m;
}

inline std::string delay_tag(double delay_s) {
  const double r = std::round(delay_s);
  if (std::abs(r - delay_s) < 1e-9) return std::to_string(static_cast<long long>(r)) + "s";
  std::string s = std::to_string(delay_s);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s + "s";
}

/// Writes the manifest, all frames, and copies of the annotation files into `dir`.
/// Returns the manifest path.
inline fs::path save_manifest(const ScenarioManifest& m, const fs::path& dir,
                              const ThermalEncoding& enc = {}) {
  fs::create_directories(dir);
  json entries = json::array();
  auto write_capture = [&](const PairedCapture& c) {
    const std::string tag = m.scenario_id + "_" + delay_tag(c.delay_s);
    const std::string rgb_name = tag + "_rgb.png";
    const std::string th_name = tag + "_thermal.png";
    write_rgb_png(dir / rgb_name, c.rgb);
    write_thermal_png(dir / th_name, c.thermal, enc);
    entries.push_back({{"delay_s", c.delay_s},
                       {"rgb_path", rgb_name},
                       {"thermal_path", th_name},
                       {"rgb_time_s", c.rgb.capture_time_s()},
                       {"thermal_time_s", c.thermal.capture_time_s()}});
  };
  write_capture(m.ground_truth);
  for (const auto& o : m.observations) write_capture(o);

  json ann = json::object();
  auto copy_ann = [&](const std::optional<fs::path>& src, const std::string& key) {
    if (!src) return;
    if (fs::weakly_canonical(fs::absolute(src->parent_path())) == fs::weakly_canonical(fs::absolute(dir))) {
      ann[key] = src->filename().string();
      return;
    }
    const fs::path dst = dir / (m.scenario_id + "_" + src->filename().string());
    {
      fs::copy_file(*src, dst, fs::copy_options::overwrite_existing);
      // Label maps and thermal grids carry JSON sidecars.
      const fs::path side = thermal_sidecar_path(*src);
      if (src->extension() == ".png" && fs::exists(side)) {
        fs::copy_file(side, thermal_sidecar_path(dst), fs::copy_options::overwrite_existing);
      }
    }
    ann[key] = dst.filename().string();
  };
  copy_ann(m.annotations.keypoints_path, "keypoints_path");
  copy_ann(m.annotations.labels_path, "labels_path");
  copy_ann(m.annotations.palette_path, "palette_path");

  json doc = {{"scenario_id", m.scenario_id},
              {"kind", to_string(m.kind)},
              {"contact_duration_s", m.contact_duration_s},
              {"entries", entries}};
  if (!ann.empty()) doc["annotations"] = ann;
  const fs::path out = dir / (m.scenario_id + ".manifest.json");
  write_json_file(out, doc);
  return out;
}

}  // namespace chronolens::scene
