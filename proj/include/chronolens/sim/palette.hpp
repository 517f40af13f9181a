#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <climits>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/metrics/pose.hpp"
#include "chronolens/metrics/segmentation.hpp"
#include "chronolens/scene/frames.hpp"

namespace chronolens::sim {

using scene::Rect;
using scene::Rgb;

inline constexpr const char* kSkeletonId = "coco17";

/// Joint position as a fraction of the person bounding box.
struct TemplateJoint {
  std::string name;
  double u = 0.0;
  double v = 0.0;
};

struct KeypointTemplate {
  std::string skeleton_id = kSkeletonId;
  std::vector<TemplateJoint> joints;
};

struct PaletteClass {
  int id = 0;
  std::string name;
  std::vector<Rgb> colors;
};

/// Color -> class table of a flat-shaded synthetic scene, plus the keypoint
/// template of its person sprite. Lets a frame be segmented and posed exactly.
struct Palette {
  std::vector<PaletteClass> classes;
  int person_class_id = 1;
  KeypointTemplate keypoints;

  std::map<int, std::string> class_names() const {
    std::map<int, std::string> m;
    for (const auto& c : classes) m[c.id] = c.name;
    return m;
  }
};

/// Nearest palette color per pixel (exact for unaltered synthetic frames).
inline metrics::LabelMap segment_by_palette(const scene::RgbFrame& frame, const Palette& palette) {
  metrics::LabelMap m;
  m.width = frame.width();
  m.height = frame.height();
  m.class_names = palette.class_names();
  m.labels.resize(static_cast<std::size_t>(m.width) * m.height);
  const auto px = frame.bytes();
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    int best = 0;
    long best_d = LONG_MAX;
    for (const auto& cls : palette.classes) {
      for (const auto& c : cls.colors) {
        const long dr = long(px[3 * i]) - c.r, dg = long(px[3 * i + 1]) - c.g, db = long(px[3 * i + 2]) - c.b;
        const long d = dr * dr + dg * dg + db * db;
        if (d < best_d) {
          best_d = d;
          best = cls.id;
        }
      }
    }
    m.labels[i] = static_cast<std::uint8_t>(best);
  }
  return m;
}

inline std::optional<Rect> class_bbox(const metrics::LabelMap& labels, int class_id) {
  int x0 = INT_MAX, y0 = INT_MAX, x1 = -1, y1 = -1;
  for (int y = 0; y < labels.height; ++y) {
    for (int x = 0; x < labels.width; ++x) {
      if (labels.at(x, y) != class_id) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

inline metrics::KeypointSet place_keypoints(const KeypointTemplate& tmpl, const Rect& bbox) {
  metrics::KeypointSet k;
  k.skeleton_id = tmpl.skeleton_id;
  for (const auto& j : tmpl.joints) {
    k.joints.push_back({j.name, bbox.x + j.u * bbox.w, bbox.y + j.v * bbox.h, 1.0});
  }
  return k;
}

/// Person keypoints read off a palette segmentation; nullopt when no person pixels exist.
inline std::optional<metrics::KeypointSet> keypoints_by_palette(const metrics::LabelMap& labels,
                                                                const Palette& palette) {
  const auto box = class_bbox(labels, palette.person_class_id);
  if (!box) return std::nullopt;
  return place_keypoints(palette.keypoints, *box);
}

inline nlohmann::json to_json(const Palette& p) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : p.classes) {
    nlohmann::json colors = nlohmann::json::array();
    for (const auto& col : c.colors) colors.push_back({col.r, col.g, col.b});
    classes.push_back({{"id", c.id}, {"name", c.name}, {"colors", colors}});
  }
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : p.keypoints.joints) joints.push_back({{"name", j.name}, {"u", j.u}, {"v", j.v}});
  return {{"classes", classes},
          {"person_class_id", p.person_class_id},
          {"keypoint_template", {{"skeleton_id", p.keypoints.skeleton_id}, {"joints", joints}}}};
}

inline Palette palette_from_json(const nlohmann::json& j) {
  Palette p;
  try {
    for (const auto& c : j.at("classes")) {
      PaletteClass pc{c.at("id").get<int>(), c.at("name").get<std::string>(), {}};
      for (const auto& col : c.at("colors")) {
        pc.colors.push_back(Rgb{col.at(0).get<std::uint8_t>(), col.at(1).get<std::uint8_t>(),
                                col.at(2).get<std::uint8_t>()});
      }
      p.classes.push_back(std::move(pc));
    }
    p.person_class_id = j.at("person_class_id").get<int>();
    const auto& kt = j.at("keypoint_template");
    p.keypoints.skeleton_id = kt.at("skeleton_id").get<std::string>();
    for (const auto& jt : kt.at("joints")) {
      p.keypoints.joints.push_back({jt.at("name").get<std::string>(), jt.at("u").get<double>(), jt.at("v").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("palette: schema violation: ") + e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Person sprites: flat-colored body parts on a unit box.

enum class Pose { standing, sitting };

inline Pose pose_from_string(const std::string& s) {
  if (s == "standing") return Pose::standing;
  if (s == "sitting") return Pose::sitting;
  throw DataError("person.pose: unknown pose '" + s + "'");
}

inline constexpr Rgb kSkinColor{224, 172, 140};
inline constexpr Rgb kShirtColor{40, 90, 200};
inline constexpr Rgb kPantsColor{35, 35, 70};

struct SpritePart {
  double u, v, w, h;
  Rgb color;
};

inline std::vector<SpritePart> sprite_parts(Pose pose) {
  if (pose == Pose::sitting) {
    return {
        {0.35, 0.00, 0.30, 0.20, kSkinColor},   // head
        {0.20, 0.20, 0.60, 0.40, kShirtColor},  // torso
        {0.00, 0.20, 0.20, 0.35, kShirtColor},  // right arm (image left)
        {0.80, 0.20, 0.20, 0.35, kShirtColor},  // left arm
        {0.00, 0.55, 0.20, 0.05, kSkinColor},   // hands
        {0.80, 0.55, 0.20, 0.05, kSkinColor},
        {0.15, 0.60, 0.70, 0.15, kPantsColor},  // thighs
        {0.15, 0.75, 0.20, 0.25, kPantsColor},  // shins
        {0.65, 0.75, 0.20, 0.25, kPantsColor},
    };
  }
  return {
      {0.35, 0.00, 0.30, 0.15, kSkinColor},
      {0.20, 0.15, 0.60, 0.38, kShirtColor},
      {0.00, 0.15, 0.20, 0.35, kShirtColor},
      {0.80, 0.15, 0.20, 0.35, kShirtColor},
      {0.00, 0.50, 0.20, 0.05, kSkinColor},
      {0.80, 0.50, 0.20, 0.05, kSkinColor},
      {0.22, 0.53, 0.25, 0.47, kPantsColor},
      {0.53, 0.53, 0.25, 0.47, kPantsColor},
  };
}

/// COCO-17 joint layout for a front-facing sprite; the person's left is image right.
inline KeypointTemplate keypoint_template(Pose pose) {
  KeypointTemplate t;
  if (pose == Pose::sitting) {
    t.joints = {{"nose", 0.50, 0.11},           {"left_eye", 0.55, 0.08},      {"right_eye", 0.45, 0.08},
                {"left_ear", 0.62, 0.09},       {"right_ear", 0.38, 0.09},     {"left_shoulder", 0.75, 0.22},
                {"right_shoulder", 0.25, 0.22}, {"left_elbow", 0.90, 0.38},    {"right_elbow", 0.10, 0.38},
                {"left_wrist", 0.90, 0.57},     {"right_wrist", 0.10, 0.57},   {"left_hip", 0.62, 0.60},
                {"right_hip", 0.38, 0.60},      {"left_knee", 0.75, 0.68},     {"right_knee", 0.25, 0.68},
                {"left_ankle", 0.75, 0.97},     {"right_ankle", 0.25, 0.97}};
  } else {
    t.joints = {{"nose", 0.50, 0.08},           {"left_eye", 0.55, 0.06},      {"right_eye", 0.45, 0.06},
                {"left_ear", 0.62, 0.07},       {"right_ear", 0.38, 0.07},     {"left_shoulder", 0.75, 0.17},
                {"right_shoulder", 0.25, 0.17}, {"left_elbow", 0.90, 0.33},    {"right_elbow", 0.10, 0.33},
                {"left_wrist", 0.90, 0.52},     {"right_wrist", 0.10, 0.52},   {"left_hip", 0.62, 0.53},
                {"right_hip", 0.38, 0.53},      {"left_knee", 0.65, 0.76},     {"right_knee", 0.35, 0.76},
                {"left_ankle", 0.65, 0.97},     {"right_ankle", 0.35, 0.97}};
  }
  return t;
}

inline Rect part_rect(const SpritePart& p, const Rect& box) {
  const int x0 = box.x + static_cast<int>(std::lround(p.u * box.w));
  const int y0 = box.y + static_cast<int>(std::lround(p.v * box.h));
  const int x1 = box.x + static_cast<int>(std::lround((p.u + p.w) * box.w));
  const int y1 = box.y + static_cast<int>(std::lround((p.v + p.h) * box.h));
  return {x0, y0, x1 - x0, y1 - y0};
}

/// Paints the sprite into `frame` and marks covered pixels in `mask`.
inline void composite_person(scene::RgbFrame& frame, scene::Mask& mask, Pose pose, const Rect& box) {
  for (const auto& part : sprite_parts(pose)) {
    const Rect r = part_rect(part, box);
    for (int y = std::max(0, r.y); y < std::min(frame.height(), r.y + r.h); ++y) {
      for (int x = std::max(0, r.x); x < std::min(frame.width(), r.x + r.w); ++x) {
        frame.set(x, y, part.color);
        mask.set(x, y);
      }
    }
  }
}

}  // namespace chronolens::sim
