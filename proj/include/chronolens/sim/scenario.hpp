#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/metrics/pose.hpp"
#include "chronolens/metrics/segmentation.hpp"
#include "chronolens/scene/frames.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/sim/palette.hpp"
#include "chronolens/sim/physics.hpp"
#include "chronolens/sim/sensor.hpp"

namespace chronolens::sim {

using scene::Mask;

struct SceneObject {
  std::string label;
  Mask mask;
  Material material;
  Rgb color;
};

struct PersonPlacement {
  Pose pose = Pose::standing;
  Rect box;
};

struct SimScene {
  double ambient_c = 22.0;
  int width = 320;
  int height = 240;
  Rgb background_color{205, 200, 188};
  Material background_material = default_materials().at("painted_wall");
  std::vector<SceneObject> objects;  // later objects paint over earlier ones
  std::optional<PersonPlacement> person;

  void validate() const {
    if (width <= 0 || height <= 0) throw DataError("scene: dimensions must be positive");
    background_material.validate();
    std::set<std::string> labels;
    std::vector<Rgb> colors{background_color, kSkinColor, kShirtColor, kPantsColor};
    for (const auto& o : objects) {
      if (o.mask.width != width || o.mask.height != height) {
        throw DataError("scene.objects[" + o.label + "]: mask outside scene bounds");
      }
      if (o.label.empty() || o.label == "background" || o.label == "person") {
        throw DataError("scene.objects: reserved or empty label '" + o.label + "'");
      }
      if (!labels.insert(o.label).second) throw DataError("scene.objects: duplicate label '" + o.label + "'");
      if (std::find(colors.begin(), colors.end(), o.color) != colors.end()) {
        throw DataError("scene.objects[" + o.label + "]: color already used by another class");
      }
      colors.push_back(o.color);
      o.material.validate();
    }
  }

  /// Class ids: 0 background, 1 person, objects from 2 in declaration order.
  Palette palette(Pose pose = Pose::standing) const {
    Palette p;
    p.classes.push_back({0, "background", {background_color}});
    p.classes.push_back({1, "person", {kSkinColor, kShirtColor, kPantsColor}});
    for (std::size_t i = 0; i < objects.size(); ++i) {
      p.classes.push_back({static_cast<int>(i) + 2, objects[i].label, {objects[i].color}});
    }
    p.person_class_id = 1;
    p.keypoints = keypoint_template(person ? person->pose : pose);
    return p;
  }
};

struct ContactEvent {
  Mask region_mask;
  double t_start_s = -30.0;
  double t_end_s = 0.0;
  double body_temp_c = 37.0;

  void validate(int width, int height, std::size_t index) const {
    const std::string where = "events[" + std::to_string(index) + "]";
    if (region_mask.width != width || region_mask.height != height) {
      throw DataError(where + ": region mask outside scene bounds");
    }
    if (region_mask.popcount() == 0) throw DataError(where + ": region mask is empty");
    if (!(t_end_s > t_start_s)) throw DataError(where + ": t_end_s must exceed t_start_s");
  }

  bool active_at(double t) const { return t >= t_start_s && t <= t_end_s; }
};

struct SimConfig {
  std::string scenario_id = "scenario";
  scene::ScenarioKind kind = scene::ScenarioKind::sit_chair;
  SimScene scene;
  std::vector<ContactEvent> events;
  SensorModel sensor;
  std::vector<double> delays_s{0.0, 5.0, 15.0, 30.0, 120.0};
};

struct SimulationResult {
  scene::ScenarioManifest manifest;
  std::optional<metrics::KeypointSet> gt_keypoints;
  metrics::LabelMap gt_labels;
  Palette palette;
  std::vector<double> delays_s;                // including 0
  std::vector<TemperatureGrid> scene_temps;    // noiseless, scene resolution, one per delay
  Mask contact_union;                          // union of all event masks
};

/// Noiseless scene-resolution temperatures at time `t` (seconds after contact end).
inline TemperatureGrid scene_temperatures(const SimScene& scene, const std::vector<ContactEvent>& events,
                                          double t) {
  TemperatureGrid g{scene.width, scene.height,
                    std::vector<double>(static_cast<std::size_t>(scene.width) * scene.height, scene.ambient_c)};
  std::vector<const ContactEvent*> sorted;
  for (const auto& e : events) sorted.push_back(&e);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ContactEvent* a, const ContactEvent* b) { return a->t_start_s < b->t_start_s; });
  std::vector<ContactInterval> touching;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      touching.clear();
      for (const auto* e : sorted) {
        if (e->region_mask.at(x, y)) touching.push_back({e->t_start_s, e->t_end_s, e->body_temp_c});
      }
      if (touching.empty()) continue;
      const Material* mat = &scene.background_material;
      for (const auto& o : scene.objects) {
        if (o.mask.at(x, y)) mat = &o.material;
      }
      g.temps[static_cast<std::size_t>(y) * scene.width + x] =
          surface_temperature_at(t, scene.ambient_c, *mat, touching);
    }
  }
  return g;
}

/// RGB frame and label map of the scene, with the person drawn when `with_person`.
inline std::pair<scene::RgbFrame, metrics::LabelMap> render_scene(const SimScene& scene, bool with_person,
                                                                  double capture_time_s) {
  scene::RgbFrame rgb(scene.width, scene.height, scene.background_color, capture_time_s);
  metrics::LabelMap labels;
  labels.width = scene.width;
  labels.height = scene.height;
  labels.labels.assign(static_cast<std::size_t>(scene.width) * scene.height, 0);
  const Palette palette = scene.palette();
  labels.class_names = palette.class_names();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& o = scene.objects[i];
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (!o.mask.at(x, y)) continue;
        rgb.set(x, y, o.color);
        labels.labels[static_cast<std::size_t>(y) * scene.width + x] = static_cast<std::uint8_t>(i + 2);
      }
    }
  }
  if (with_person && scene.person) {
    Mask person_mask(scene.width, scene.height);
    composite_person(rgb, person_mask, scene.person->pose, scene.person->box);
    for (std::size_t i = 0; i < person_mask.cells.size(); ++i) {
      if (person_mask.cells[i]) labels.labels[i] = static_cast<std::uint8_t>(palette.person_class_id);
    }
  }
  return {std::move(rgb), std::move(labels)};
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Simulates the acquisition protocol: one RGB + thermal capture per delay,
/// the delay-0 capture becoming the ground truth.
inline SimulationResult generate_scenario_sequence(const SimConfig& cfg) {
  cfg.scene.validate();
  for (std::size_t i = 0; i < cfg.events.size(); ++i) cfg.events[i].validate(cfg.scene.width, cfg.scene.height, i);
  std::vector<double> delays = cfg.delays_s;
  for (double d : delays) {
    if (!(d >= 0.0)) throw DataError("delays_s: delays must be nonnegative");
  }
  std::sort(delays.begin(), delays.end());
  if (delays.empty() || delays.front() != 0.0) throw DataError("delays_s: must include 0 for the ground truth");
  if (std::adjacent_find(delays.begin(), delays.end()) != delays.end()) throw DataError("delays_s: duplicate delay");

  SimulationResult out;
  out.delays_s = delays;
  out.palette = cfg.scene.palette();
  out.contact_union = Mask(cfg.scene.width, cfg.scene.height);
  double contact_s = 0.0;
  for (const auto& e : cfg.events) {
    contact_s = std::max(contact_s, e.t_end_s - e.t_start_s);
    for (std::size_t i = 0; i < e.region_mask.cells.size(); ++i) {
      if (e.region_mask.cells[i]) out.contact_union.cells[i] = 1;
    }
  }
  out.manifest.scenario_id = cfg.scenario_id;
  out.manifest.kind = cfg.kind;
  out.manifest.contact_duration_s = contact_s;

  for (std::size_t i = 0; i < delays.size(); ++i) {
    const double t = delays[i];
    const bool person_visible =
        std::any_of(cfg.events.begin(), cfg.events.end(), [&](const ContactEvent& e) { return e.active_at(t); });
    auto [rgb, labels] = render_scene(cfg.scene, person_visible, t);
    TemperatureGrid temps = scene_temperatures(cfg.scene, cfg.events, t);
    SensorModel sensor = cfg.sensor;
    sensor.seed = derive_seed(cfg.sensor.seed, i);
    scene::PairedCapture cap{std::move(rgb), render_thermal_sensor(temps, sensor, t), t, cfg.scenario_id};
    out.scene_temps.push_back(std::move(temps));
    if (i == 0) {
      if (person_visible) out.gt_keypoints = keypoints_by_palette(labels, out.palette);
      out.gt_labels = std::move(labels);
      out.manifest.ground_truth = std::move(cap);
    } else {
      out.manifest.observations.push_back(std::move(cap));
    }
  }
  out.manifest.normalize_and_validate();
  return out;
}

/// Writes annotations and the manifest into `dir`; returns the manifest path.
inline std::filesystem::path write_simulation(SimulationResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string id = result.manifest.scenario_id;
  auto& ann = result.manifest.annotations;
  if (result.gt_keypoints) {
    ann.keypoints_path = dir / (id + "_keypoints.json");
    metrics::write_keypoints(*ann.keypoints_path, *result.gt_keypoints);
  }
  ann.labels_path = dir / (id + "_labels.png");
  metrics::write_label_map(*ann.labels_path, result.gt_labels);
  ann.palette_path = dir / (id + "_palette.json");
  scene::write_json_file(*ann.palette_path, to_json(result.palette));
  return scene::save_manifest(result.manifest, dir);
}

// ---------------------------------------------------------------------------
// JSON configuration.

namespace detail {

inline Rgb rgb_from_json(const nlohmann::json& j) {
  return Rgb{j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(), j.at(2).get<std::uint8_t>()};
}

inline Rect rect_from_json(const nlohmann::json& j) {
  return Rect{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

inline Mask rects_mask(const nlohmann::json& rects, int w, int h, const std::string& where) {
  Mask m(w, h);
  for (const auto& r : rects) {
    Mask one;
    try {
      one = scene::rect_mask(w, h, rect_from_json(r));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    for (std::size_t i = 0; i < m.cells.size(); ++i) m.cells[i] |= one.cells[i];
  }
  return m;
}

}  // namespace detail

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig cfg;
  try {
    cfg.scenario_id = j.value("scenario_id", cfg.scenario_id);
    cfg.kind = scene::scenario_kind_from_string(j.value("kind", std::string("sit_chair")));
    auto& s = cfg.scene;
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.ambient_c = j.value("ambient_c", s.ambient_c);

    std::map<std::string, Material> materials = default_materials();
    if (j.contains("materials")) {
      for (const auto& [name, m] : j.at("materials").items()) {
        materials[name] = Material{name, m.at("tau_cool_s").get<double>(), m.at("tau_heat_s").get<double>(),
                                   m.at("coupling").get<double>()};
      }
    }
    auto material = [&](const std::string& name, const std::string& where) {
      auto it = materials.find(name);
      if (it == materials.end()) throw DataError(where + ": unknown material '" + name + "'");
      return it->second;
    };
    if (j.contains("background")) {
      const auto& b = j.at("background");
      if (b.contains("color")) s.background_color = detail::rgb_from_json(b.at("color"));
      if (b.contains("material")) s.background_material = material(b.at("material"), "background.material");
    }
    if (j.contains("objects")) {
      const auto& objs = j.at("objects");
      for (std::size_t i = 0; i < objs.size(); ++i) {
        const std::string where = "objects[" + std::to_string(i) + "]";
        const auto& o = objs[i];
        s.objects.push_back({o.at("label").get<std::string>(),
                             detail::rects_mask(o.at("rects"), s.width, s.height, where + ".rects"),
                             material(o.at("material"), where + ".material"), detail::rgb_from_json(o.at("color"))});
      }
    }
    if (j.contains("person") && !j.at("person").is_null()) {
      const auto& p = j.at("person");
      s.person = PersonPlacement{pose_from_string(p.value("pose", std::string("standing"))),
                                 detail::rect_from_json(p.at("box"))};
    }
    if (j.contains("events")) {
      const auto& evs = j.at("events");
      for (std::size_t i = 0; i < evs.size(); ++i) {
        const std::string where = "events[" + std::to_string(i) + "]";
        const auto& e = evs[i];
        ContactEvent ev;
        if (e.contains("object")) {
          const std::string label = e.at("object");
          auto it = std::find_if(s.objects.begin(), s.objects.end(), [&](const auto& o) { return o.label == label; });
          if (it == s.objects.end()) throw DataError(where + ".object: unknown object '" + label + "'");
          ev.region_mask = it->mask;
        } else {
          ev.region_mask = detail::rects_mask(e.at("rects"), s.width, s.height, where + ".rects");
        }
        ev.t_start_s = e.value("t_start_s", ev.t_start_s);
        ev.t_end_s = e.value("t_end_s", ev.t_end_s);
        ev.body_temp_c = e.value("body_temp_c", ev.body_temp_c);
        cfg.events.push_back(std::move(ev));
      }
    }
    if (j.contains("sensor")) {
      const auto& sn = j.at("sensor");
      cfg.sensor.out_w = sn.value("out_w", cfg.sensor.out_w);
      cfg.sensor.out_h = sn.value("out_h", cfg.sensor.out_h);
      cfg.sensor.noise_sigma_c = sn.value("noise_sigma_c", cfg.sensor.noise_sigma_c);
      cfg.sensor.quant_step_c = sn.value("quant_step_c", cfg.sensor.quant_step_c);
      cfg.sensor.seed = sn.value("seed", cfg.sensor.seed);
    }
    if (j.contains("delays_s")) cfg.delays_s = j.at("delays_s").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("simulator config: schema violation: ") + e.what());
  }
  return cfg;
}

/// Built-in desk-scale versions of the three contact scenarios.
inline nlohmann::json preset_config_json(scene::ScenarioKind kind) {
  using nlohmann::json;
  json j = {{"kind", scene::to_string(kind)},
            {"width", 320},
            {"height", 240},
            {"ambient_c", 22.0},
            {"background", {{"color", {205, 200, 188}}, {"material", "painted_wall"}}},
            {"sensor", {{"out_w", 80}, {"out_h", 60}, {"noise_sigma_c", 0.15}, {"quant_step_c", 0.1}, {"seed", 7}}},
            {"delays_s", {0, 5, 15, 30, 120}}};
  switch (kind) {
    case scene::ScenarioKind::sit_chair:
      j["scenario_id"] = "sit_chair";
      j["objects"] = json::array({
          {{"label", "chair_back"}, {"material", "upholstered_chair"}, {"color", {150, 40, 40}}, {"rects", {{120, 60, 80, 70}}}},
          {{"label", "chair_seat"}, {"material", "upholstered_chair"}, {"color", {170, 70, 50}}, {"rects", {{112, 130, 96, 24}}}},
          {{"label", "chair_legs"}, {"material", "wood_table"}, {"color", {90, 60, 35}}, {"rects", {{116, 154, 8, 50}, {196, 154, 8, 50}}}},
          {{"label", "table"}, {"material", "wood_table"}, {"color", {125, 90, 55}}, {"rects", {{236, 120, 72, 12}, {244, 132, 8, 72}, {292, 132, 8, 72}}}},
          {{"label", "book"}, {"material", "book_cover"}, {"color", {30, 120, 60}}, {"rects", {{252, 108, 28, 12}}}},
      });
      j["person"] = {{"pose", "sitting"}, {"box", {116, 40, 88, 160}}};
      j["events"] = json::array({
          {{"rects", {{120, 132, 80, 20}}}, {"t_start_s", -30}, {"t_end_s", 0}},
          {{"rects", {{132, 72, 56, 48}}}, {"t_start_s", -30}, {"t_end_s", 0}},
      });
      break;
    case scene::ScenarioKind::lean_wall:
      j["scenario_id"] = "lean_wall";
      j["objects"] = json::array({
          {{"label", "wall_panel"}, {"material", "painted_wall"}, {"color", {225, 225, 235}}, {"rects", {{40, 20, 240, 170}}}},
          {{"label", "floor"}, {"material", "wood_table"}, {"color", {150, 150, 140}}, {"rects", {{0, 190, 320, 50}}}},
          {{"label", "plant"}, {"material", "wood_table"}, {"color", {40, 140, 40}}, {"rects", {{284, 150, 24, 40}}}},
      });
      j["person"] = {{"pose", "standing"}, {"box", {140, 36, 60, 180}}};
      j["events"] = json::array({
          {{"rects", {{144, 60, 52, 80}}}, {"t_start_s", -30}, {"t_end_s", 0}},
      });
      break;
    case scene::ScenarioKind::touch_object:
      j["scenario_id"] = "touch_object";
      j["objects"] = json::array({
          {{"label", "table"}, {"material", "wood_table"}, {"color", {125, 90, 55}}, {"rects", {{80, 140, 160, 12}, {88, 152, 8, 60}, {224, 152, 8, 60}}}},
          {{"label", "book"}, {"material", "book_cover"}, {"color", {30, 120, 60}}, {"rects", {{140, 120, 40, 20}}}},
          {{"label", "mug"}, {"material", "wood_table"}, {"color", {230, 230, 60}}, {"rects", {{200, 124, 16, 16}}}},
      });
      j["person"] = {{"pose", "standing"}, {"box", {64, 28, 64, 190}}};
      j["events"] = json::array({
          {{"rects", {{140, 120, 40, 20}}}, {"t_start_s", -30}, {"t_end_s", 0}},
      });
      break;
  }
  return j;
}

inline SimConfig preset_config(scene::ScenarioKind kind) { return sim_config_from_json(preset_config_json(kind)); }

}  // namespace chronolens::sim
