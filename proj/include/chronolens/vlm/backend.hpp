#pragma once

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/frames.hpp"

namespace chronolens::vlm {

using scene::RgbFrame;

enum class Capability { describe, edit };

inline std::string to_string(Capability c) { return c == Capability::describe ? "describe" : "edit"; }

inline Capability capability_from_string(const std::string& s) {
  if (s == "describe") return Capability::describe;
  if (s == "edit") return Capability::edit;
  throw DataError("capabilities: unknown capability '" + s + "'");
}

struct BackendDescriptor {
  std::string backend_id;
  std::set<Capability> capabilities;
  std::string endpoint;  // URL for HTTP adapters, mode name for mocks

  bool supports(Capability c) const { return capabilities.count(c) != 0; }

  void validate() const {
    if (backend_id.empty()) throw DataError("backend: empty backend_id");
    for (char c : backend_id) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') {
        throw DataError("backend '" + backend_id + "': id may only contain letters, digits, '-' and '_'");
      }
    }
    if (capabilities.empty()) throw DataError("backend '" + backend_id + "': no capabilities");
  }
};

/// Environment variable prefix for a backend, e.g. "gpt-vision" ->
/// "CHRONOLENS_BACKEND_GPT_VISION_".
inline std::string backend_env_prefix(const std::string& backend_id) {
  std::string s = "CHRONOLENS_BACKEND_";
  for (char c : backend_id) {
    s.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return s + "_";
}

/// Request/response boundary to a generative model. Implementations must be
/// safe to call from several threads at once.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  /// Images are sent in order: the RGB frame, then the thermal pseudocolor.
  virtual std::string describe(const std::vector<RgbFrame>& images, const std::string& prompt) = 0;

  virtual RgbFrame edit(const RgbFrame& image, const std::vector<RgbFrame>& auxiliary, const std::string& prompt) = 0;

  const std::string& id() const { return descriptor().backend_id; }

  void require(Capability c) const {
    if (!descriptor().supports(c)) {
      throw BackendContractViolation("backend '" + id() + "' does not support " + to_string(c));
    }
  }
};

}  // namespace chronolens::vlm
