#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/manifest.hpp"

namespace chronolens::metrics {

struct Joint {
  std::string name;
  double x = 0.0;
  double y = 0.0;
  double confidence = 1.0;
  friend bool operator==(const Joint&, const Joint&) = default;
};

struct KeypointSet {
  std::string skeleton_id;
  std::vector<Joint> joints;
  /// Set by pose adapters when no person was found; joints is then empty.
  bool no_detection = false;

  void validate() const {
    std::set<std::string> seen;
    for (const auto& j : joints) {
      if (!seen.insert(j.name).second) throw DataError("keypoints: duplicate joint '" + j.name + "'");
      if (!std::isfinite(j.x) || !std::isfinite(j.y)) {
        throw DataError("keypoints: joint '" + j.name + "' has non-finite coordinates");
      }
      if (!(j.confidence >= 0.0 && j.confidence <= 1.0)) {
        throw DataError("keypoints: joint '" + j.name + "' confidence outside [0,1]");
      }
    }
  }

  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

inline constexpr double kDefaultMinConfidence = 0.3;

/// Mean 2D Euclidean joint error in pixels. Joints below `min_conf` in either
/// set are skipped.
inline double mpjpe(const KeypointSet& reference, const KeypointSet& candidate,
                    double min_conf = kDefaultMinConfidence) {
  if (reference.skeleton_id != candidate.skeleton_id) {
    throw UsageError("mpjpe: skeleton mismatch '" + reference.skeleton_id + "' vs '" +
                     candidate.skeleton_id + "'");
  }
  std::map<std::string, const Joint*> cand;
  for (const auto& j : candidate.joints) cand[j.name] = &j;
  if (cand.size() != reference.joints.size()) throw UsageError("mpjpe: joint name sets differ");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : reference.joints) {
    auto it = cand.find(r.name);
    if (it == cand.end()) throw UsageError("mpjpe: joint '" + r.name + "' missing from candidate");
    const Joint& c = *it->second;
    if (r.confidence < min_conf || c.confidence < min_conf) continue;
    sum += std::hypot(c.x - r.x, c.y - r.y);
    ++n;
  }
  if (n == 0) throw UsageError("mpjpe: no joint survives confidence filtering");
  return sum / static_cast<double>(n);
}

inline nlohmann::json to_json(const KeypointSet& k) {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& j : k.joints) {
    joints.push_back({{"name", j.name}, {"x", j.x}, {"y", j.y}, {"confidence", j.confidence}});
  }
  nlohmann::json out = {{"skeleton_id", k.skeleton_id}, {"joints", joints}};
  if (k.no_detection) out["no_detection"] = true;
  return out;
}

inline KeypointSet keypoints_from_json(const nlohmann::json& j, const std::string& where = "keypoints") {
  KeypointSet k;
  try {
    k.skeleton_id = j.at("skeleton_id").get<std::string>();
    k.no_detection = j.value("no_detection", false);
    const auto& arr = j.at("joints");
    if (!arr.is_array()) throw DataError(where + ".joints: not an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& e = arr[i];
      k.joints.push_back({e.at("name").get<std::string>(), e.at("x").get<double>(),
                          e.at("y").get<double>(), e.value("confidence", 1.0)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": schema violation: " + e.what());
  }
  k.validate();
  return k;
}

inline KeypointSet read_keypoints(const std::filesystem::path& path) {
  return keypoints_from_json(scene::read_json_file(path), path.string());
}

inline void write_keypoints(const std::filesystem::path& path, const KeypointSet& k) {
  scene::write_json_file(path, to_json(k));
}

}  // namespace chronolens::metrics
