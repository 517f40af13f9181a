#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "chronolens/core/digest.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/vlm/backend.hpp"

namespace chronolens::vlm {

enum class MockEditMode {
  identity,      // returns the input RGB
  ground_truth,  // looks the input up in a fixture table
  fixed,         // always returns one configured image
  wrong_size,    // returns an image of fixed_size regardless of input
};

inline MockEditMode mock_edit_mode_from_string(const std::string& s) {
  if (s == "identity") return MockEditMode::identity;
  if (s == "ground_truth") return MockEditMode::ground_truth;
  if (s == "fixed") return MockEditMode::fixed;
  if (s == "wrong_size") return MockEditMode::wrong_size;
  throw DataError("mock backend: unknown edit mode '" + s + "'");
}

inline constexpr const char* kDefaultMockSentence = "The person was sitting and holding the book.";

inline std::string frame_hash(const RgbFrame& f) {
  Sha256 h;
  scene::hash_into(h, f);
  return h.hex();
}

struct MockConfig {
  MockEditMode edit_mode = MockEditMode::identity;
  std::string describe_response = kDefaultMockSentence;
  std::map<std::string, std::string> describe_fixtures;  // RGB frame hash -> response
  std::map<std::string, RgbFrame> edit_fixtures;         // RGB frame hash -> image
  std::optional<RgbFrame> fixed_image;
  int wrong_width = 512;
  int wrong_height = 512;
  bool always_fail = false;
  int transient_failures = 0;  // first N calls throw TransportError
};

/// Deterministic, fixture-driven backend for offline runs and tests.
class MockBackend final : public Backend {
 public:
  MockBackend(BackendDescriptor desc, MockConfig cfg) : desc_(std::move(desc)), cfg_(std::move(cfg)) {
    desc_.validate();
  }

  const BackendDescriptor& descriptor() const override { return desc_; }

  std::string describe(const std::vector<RgbFrame>& images, const std::string& prompt) override {
    ++describe_calls_;
    if (prompt.empty()) throw BackendContractViolation("mock: empty prompt");
    maybe_fail();
    if (!images.empty() && !cfg_.describe_fixtures.empty()) {
      auto it = cfg_.describe_fixtures.find(frame_hash(images.front()));
      if (it != cfg_.describe_fixtures.end()) return it->second;
    }
    return cfg_.describe_response;
  }

  RgbFrame edit(const RgbFrame& image, const std::vector<RgbFrame>&, const std::string& prompt) override {
    ++edit_calls_;
    if (prompt.empty()) throw BackendContractViolation("mock: empty prompt");
    maybe_fail();
    switch (cfg_.edit_mode) {
      case MockEditMode::identity:
        return image;
      case MockEditMode::ground_truth: {
        auto it = cfg_.edit_fixtures.find(frame_hash(image));
        if (it == cfg_.edit_fixtures.end()) {
          throw BackendContractViolation("mock '" + desc_.backend_id + "': no ground-truth fixture for input image");
        }
        return it->second;
      }
      case MockEditMode::fixed:
        if (!cfg_.fixed_image) throw BackendContractViolation("mock: fixed mode without an image");
        return *cfg_.fixed_image;
      case MockEditMode::wrong_size:
        return RgbFrame(cfg_.wrong_width, cfg_.wrong_height, scene::Rgb{128, 128, 128});
    }
    throw BackendContractViolation("mock: bad mode");
  }

  int describe_calls() const { return describe_calls_.load(); }
  int edit_calls() const { return edit_calls_.load(); }
  int total_calls() const { return describe_calls() + edit_calls(); }

 private:
  void maybe_fail() {
    if (cfg_.always_fail) throw TransportError("mock '" + desc_.backend_id + "': simulated outage");
    if (failures_left_.fetch_sub(1) > 0) {
      throw TransportError("mock '" + desc_.backend_id + "': simulated transient failure");
    }
  }

  BackendDescriptor desc_;
  MockConfig cfg_;
  std::atomic<int> describe_calls_{0};
  std::atomic<int> edit_calls_{0};
  std::atomic<int> failures_left_{cfg_.transient_failures};
};

/// Maps every observation RGB frame to its scenario's delay-0 frame. Distinct
/// scenarios sharing an observation frame but not a ground truth are rejected.
inline std::map<std::string, RgbFrame> ground_truth_fixtures(const std::vector<scene::ScenarioManifest>& manifests) {
  std::map<std::string, RgbFrame> table;
  for (const auto& m : manifests) {
    for (const auto& o : m.observations) {
      const std::string h = frame_hash(o.rgb);
      auto [it, inserted] = table.emplace(h, m.ground_truth.rgb);
      if (!inserted && !(it->second == m.ground_truth.rgb)) {
        throw DataError("mock ground truth: scenario '" + m.scenario_id +
                        "' shares an observation frame with another scenario but not its ground truth");
      }
    }
  }
  return table;
}

}  // namespace chronolens::vlm
