#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/experiments/experiments.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/scene/png_io.hpp"
#include "chronolens/traces/traces.hpp"
#include "chronolens/vlm/http_backend.hpp"
#include "chronolens/vlm/mock_backend.hpp"
#include "chronolens/vlm/pipeline.hpp"

namespace chronolens::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kDefaultCacheDir = ".chronolens-cache";

/// One backend registry entry. Secrets never live here.
struct BackendSpec {
  vlm::BackendDescriptor desc;
  std::string kind;  // "mock" or "http"
  json settings;
};

struct GlobalConfig {
  fs::path base_dir = ".";  // relative paths in the file resolve against it
  std::optional<fs::path> cache_dir;
  int concurrency = 4;
  std::optional<std::uint64_t> seed;
  std::string describer = "mock-gt";
  std::vector<BackendSpec> backends;
  traces::TraceSettings traces;
  double min_conf = metrics::kDefaultMinConfidence;
  int retry_attempts = 3;
  std::vector<double> retry_backoff_s{1.0, 2.0, 4.0};
  std::optional<experiments::AdapterSettings> adapter;
  bool trace_evidence = true;
  json experiment = json::object();
  json simulation;  // null unless the file carries a simulation document

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  void validate() const {
    if (concurrency < 1) throw UsageError("concurrency must be >= 1");
    if (retry_attempts < 1) throw DataError("config.retry.max_attempts: must be >= 1");
    if (!(traces.threshold_dt_c > 0.0)) throw DataError("config.thresholds.trace_dt_c: must be > 0");
    if (!(min_conf >= 0.0 && min_conf <= 1.0)) throw DataError("config.thresholds.min_conf: must be in [0,1]");
  }
};

inline std::vector<BackendSpec> builtin_backends() {
  using vlm::Capability;
  return {
      {{"mock-gt", {Capability::describe, Capability::edit}, "mock:ground_truth"}, "mock", {{"edit_mode", "ground_truth"}}},
      {{"mock-identity", {Capability::describe, Capability::edit}, "mock:identity"}, "mock", {{"edit_mode", "identity"}}},
  };
}

inline BackendSpec backend_spec_from_json(const json& j, std::size_t index) {
  const std::string where = "config.backends[" + std::to_string(index) + "]";
  for (const char* secret : {"token", "api_key", "auth", "authorization"}) {
    if (j.contains(secret)) {
      throw DataError(where + "." + secret + ": secrets are read from CHRONOLENS_BACKEND_<ID>_TOKEN only");
    }
  }
  BackendSpec s;
  try {
    s.desc.backend_id = j.at("backend_id").get<std::string>();
    s.kind = j.value("kind", std::string("http"));
    if (s.kind != "mock" && s.kind != "http") throw DataError(where + ".kind: expected mock or http");
    std::vector<std::string> caps =
        j.value("capabilities", std::vector<std::string>{"describe", "edit"});
    for (const auto& c : caps) s.desc.capabilities.insert(vlm::capability_from_string(c));
    s.desc.endpoint = j.value("endpoint", s.kind == "mock" ? "mock:" + j.value("edit_mode", std::string("identity")) : "");
    s.settings = j;
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  s.desc.validate();
  return s;
}

inline GlobalConfig load_global_config(const std::optional<fs::path>& path) {
  GlobalConfig c;
  c.backends = builtin_backends();
  if (!path) return c;
  const json j = scene::read_json_file(*path);
  if (!j.is_object()) throw DataError("config: top level must be an object");
  c.base_dir = fs::absolute(*path).parent_path();
  try {
    if (j.contains("cache_dir")) c.cache_dir = c.resolve(j.at("cache_dir").get<std::string>());
    c.concurrency = j.value("concurrency", c.concurrency);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.describer = j.value("describer", c.describer);
    if (j.contains("backends")) {
      const auto& arr = j.at("backends");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        BackendSpec s = backend_spec_from_json(arr[i], i);
        std::erase_if(c.backends, [&](const BackendSpec& b) { return b.desc.backend_id == s.desc.backend_id; });
        c.backends.push_back(std::move(s));
      }
    }
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      c.traces.threshold_dt_c = t.value("trace_dt_c", c.traces.threshold_dt_c);
      c.traces.detect.min_area_px = t.value("min_area_px", c.traces.detect.min_area_px);
      c.traces.detect.grades.strong_c = t.value("strong_c", c.traces.detect.grades.strong_c);
      c.traces.detect.grades.moderate_c = t.value("moderate_c", c.traces.detect.grades.moderate_c);
      c.traces.detect.grades.faint_c = t.value("faint_c", c.traces.detect.grades.faint_c);
      c.min_conf = t.value("min_conf", c.min_conf);
    }
    if (j.contains("retry")) {
      c.retry_attempts = j.at("retry").value("max_attempts", c.retry_attempts);
      c.retry_backoff_s = j.at("retry").value("backoff_s", c.retry_backoff_s);
    }
    if (j.contains("adapter") && !j.at("adapter").is_null()) {
      const auto& a = j.at("adapter");
      c.adapter = experiments::AdapterSettings{a.at("command").get<std::string>(),
                                               c.resolve(a.value("work_dir", std::string(".chronolens-adapter"))),
                                               a.value("fixture", false)};
    }
    c.trace_evidence = j.value("trace_evidence", c.trace_evidence);
    if (j.contains("experiment")) c.experiment = j.at("experiment");
    if (j.contains("simulation")) {
      c.simulation = j.at("simulation");
    } else if (j.contains("scenarios") || j.contains("objects") || j.contains("events")) {
      c.simulation = j;
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Instantiates the registry. Ground-truth mocks get their fixture table
/// from the given manifests.
inline experiments::BackendMap make_backends(const GlobalConfig& cfg,
                                             const std::vector<scene::ScenarioManifest>& manifests) {
  experiments::BackendMap out;
  std::optional<std::map<std::string, scene::RgbFrame>> gt_table;
  for (const auto& spec : cfg.backends) {
    const json& s = spec.settings;
    if (spec.kind == "mock") {
      vlm::MockConfig mc;
      try {
        mc.edit_mode = vlm::mock_edit_mode_from_string(s.value("edit_mode", std::string("identity")));
        mc.describe_response = s.value("describe_response", mc.describe_response);
        mc.always_fail = s.value("fail", false);
        mc.transient_failures = s.value("transient_failures", 0);
        mc.wrong_width = s.value("wrong_width", mc.wrong_width);
        mc.wrong_height = s.value("wrong_height", mc.wrong_height);
        if (s.contains("fixed_image")) mc.fixed_image = scene::read_rgb_png(cfg.resolve(s.at("fixed_image")));
      } catch (const json::exception& e) {
        throw DataError("config.backends[" + spec.desc.backend_id + "]: " + e.what());
      }
      if (mc.edit_mode == vlm::MockEditMode::ground_truth) {
        if (!gt_table) gt_table = vlm::ground_truth_fixtures(manifests);
        mc.edit_fixtures = *gt_table;
      }
      out[spec.desc.backend_id] = std::make_shared<vlm::MockBackend>(spec.desc, std::move(mc));
    } else {
      vlm::HttpBackendConfig hc;
      try {
        hc.model = s.value("model", std::string());
        hc.describe_path = s.value("describe_path", hc.describe_path);
        hc.edit_path = s.value("edit_path", hc.edit_path);
        hc.timeout_s = s.value("timeout_s", hc.timeout_s);
      } catch (const json::exception& e) {
        throw DataError("config.backends[" + spec.desc.backend_id + "]: " + e.what());
      }
      out[spec.desc.backend_id] = std::make_shared<vlm::HttpBackend>(spec.desc, hc);
    }
  }
  return out;
}

inline vlm::RetryPolicy make_retry(const GlobalConfig& cfg) {
  vlm::RetryPolicy p;
  p.max_attempts = cfg.retry_attempts;
  p.backoff_s = cfg.retry_backoff_s;
  return p;
}

inline experiments::ExperimentOptions make_experiment_options(const GlobalConfig& cfg) {
  experiments::ExperimentOptions o;
  o.concurrency = cfg.concurrency;
  o.trace_evidence = cfg.trace_evidence;
  o.traces = cfg.traces;
  o.scoring.min_conf = cfg.min_conf;
  return o;
}

}  // namespace chronolens::cli
