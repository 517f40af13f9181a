#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/scene/png_io.hpp"

namespace chronolens::metrics {

struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;  // row-major class ids
  std::map<int, std::string> class_names;

  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  void validate() const {
    if (width <= 0 || height <= 0) throw DataError("label map: dimensions must be positive");
    if (labels.size() != static_cast<std::size_t>(width) * height) {
      throw DataError("label map: buffer length != width*height");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!class_names.count(labels[i])) {
        throw DataError("label map: id " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                        " missing from class_names");
      }
    }
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Percentage of pixels whose labels agree.
inline double overall_accuracy(const LabelMap& reference, const LabelMap& candidate) {
  if (reference.width != candidate.width || reference.height != candidate.height) {
    throw UsageError("overall_accuracy: dimension mismatch");
  }
  std::size_t equal = 0;
  for (std::size_t i = 0; i < reference.labels.size(); ++i) equal += reference.labels[i] == candidate.labels[i];
  return 100.0 * static_cast<double>(equal) / static_cast<double>(reference.labels.size());
}

inline std::filesystem::path label_classes_path(const std::filesystem::path& png) {
  return scene::thermal_sidecar_path(png);
}

inline LabelMap read_label_map(const std::filesystem::path& png_path) {
  const auto side = scene::read_json_file(label_classes_path(png_path));
  LabelMap m;
  try {
    for (const auto& [id, name] : side.at("class_names").items()) {
      m.class_names[std::stoi(id)] = name.get<std::string>();
    }
  } catch (const std::exception& e) {
    throw DataError(label_classes_path(png_path).string() + ": schema violation: " + e.what());
  }
  scene::PngImage img;
  try {
    img = scene::decode_png(scene::read_file_bytes(png_path));
  } catch (const DataError& e) {
    throw DataError(png_path.string() + ": " + e.what());
  }
  if (img.channels != 1 || img.bit_depth != 8) {
    throw DataError(png_path.string() + ": label map must be 8-bit single-channel PNG");
  }
  m.width = img.width;
  m.height = img.height;
  m.labels = std::move(img.samples8);
  m.validate();
  return m;
}

inline void write_label_map(const std::filesystem::path& png_path, const LabelMap& m) {
  scene::write_file_bytes(png_path, scene::encode_png(m.width, m.height, 1, 8, m.labels.data()));
  nlohmann::json names = nlohmann::json::object();
  for (const auto& [id, name] : m.class_names) names[std::to_string(id)] = name;
  scene::write_json_file(label_classes_path(png_path), {{"class_names", names}});
}

}  // namespace chronolens::metrics
