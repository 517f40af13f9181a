#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "chronolens/experiments/experiments.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/sim/scenario.hpp"
#include "chronolens/vlm/mock_backend.hpp"

namespace chronolens::testing {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return fs::path(CHRONOLENS_FIXTURE_DIR); }

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> n{0};
    path_ = fs::temp_directory_path() /
            ("chronolens_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline const std::vector<scene::ScenarioKind>& all_kinds() {
  static const std::vector<scene::ScenarioKind> k{scene::ScenarioKind::sit_chair, scene::ScenarioKind::lean_wall,
                                                  scene::ScenarioKind::touch_object};
  return k;
}

/// Simulates the three presets into `dir` and loads them back from disk.
inline std::vector<experiments::Scenario> simulate_presets(const fs::path& dir, std::uint64_t seed = 7) {
  std::vector<experiments::Scenario> out;
  for (auto kind : all_kinds()) {
    auto cfg = sim::preset_config(kind);
    cfg.sensor.seed = seed;
    auto result = sim::generate_scenario_sequence(cfg);
    const auto path = sim::write_simulation(result, dir);
    out.push_back(experiments::load_scenario(scene::load_manifest(path)));
  }
  return out;
}

inline std::vector<scene::ScenarioManifest> manifests_of(const std::vector<experiments::Scenario>& s) {
  std::vector<scene::ScenarioManifest> m;
  for (const auto& x : s) m.push_back(x.manifest);
  return m;
}

/// mock-gt and mock-identity over the given scenarios.
inline experiments::BackendMap mock_backends(const std::vector<experiments::Scenario>& scenarios) {
  using vlm::Capability;
  experiments::BackendMap b;
  vlm::MockConfig gt;
  gt.edit_mode = vlm::MockEditMode::ground_truth;
  gt.edit_fixtures = vlm::ground_truth_fixtures(manifests_of(scenarios));
  b["mock-gt"] = std::make_shared<vlm::MockBackend>(
      vlm::BackendDescriptor{"mock-gt", {Capability::describe, Capability::edit}, "mock:ground_truth"}, gt);
  b["mock-identity"] = std::make_shared<vlm::MockBackend>(
      vlm::BackendDescriptor{"mock-identity", {Capability::describe, Capability::edit}, "mock:identity"},
      vlm::MockConfig{});
  return b;
}

inline scene::RgbFrame random_frame(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> byte(0, 255);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h * 3);
  for (auto& p : px) p = static_cast<std::uint8_t>(byte(rng));
  return scene::RgbFrame(w, h, std::move(px));
}

}  // namespace chronolens::testing
