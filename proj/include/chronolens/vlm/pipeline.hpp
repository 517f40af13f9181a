#pragma once

#include <nlohmann/json.hpp>

#include <cctype>
#include <chrono>
#include <ctime>
#include <functional>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "chronolens/core/concurrency.hpp"
#include "chronolens/core/digest.hpp"
#include "chronolens/core/error.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/scene/thermal_ops.hpp"
#include "chronolens/traces/traces.hpp"
#include "chronolens/vlm/backend.hpp"
#include "chronolens/vlm/cache.hpp"
#include "chronolens/vlm/templates.hpp"

namespace chronolens::vlm {

// ---------------------------------------------------------------------------
// Descriptor validation

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
inline bool is_closer(char c) { return c == '"' || c == '\'' || c == ')'; }

}  // namespace detail

/// Accepts exactly one sentence: terminal punctuation at the end, and no
/// terminal punctuation or line break followed by whitespace and more words.
/// Returns the trimmed sentence.
inline std::string validate_descriptor(const std::string& raw) {
  const std::string s = detail::trim(raw);
  if (s.empty()) throw MalformedDescriptor("descriptor: empty response", raw);
  std::size_t end = s.size();
  while (end > 0 && detail::is_closer(s[end - 1])) --end;
  if (end == 0 || !detail::is_terminal(s[end - 1])) {
    throw MalformedDescriptor("descriptor: no terminal punctuation", raw);
  }
  for (std::size_t i = 0; i + 1 < end; ++i) {
    const bool boundary = detail::is_terminal(s[i]) || s[i] == '\n';
    if (!boundary) continue;
    std::size_t j = i + 1;
    while (j < end && detail::is_closer(s[j])) ++j;
    if (j < end && !std::isspace(static_cast<unsigned char>(s[j])) && s[i] != '\n') continue;
    while (j < end && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j < end && std::isalnum(static_cast<unsigned char>(s[j]))) {
      throw MalformedDescriptor("descriptor: more than one sentence", raw);
    }
  }
  return s;
}

/// Advisory only: true when the sentence contains a common past-tense form.
inline bool looks_past_tense(const std::string& sentence) {
  static const std::regex past(R"(\b(was|were|had|did|sat|stood|held|leaned|leant|touched|rested|[A-Za-z]{2,}ed)\b)",
                               std::regex::icase);
  return std::regex_search(sentence, past);
}

// ---------------------------------------------------------------------------
// Domain records

struct DescriptorOutput {
  std::string sentence;
  std::string raw_response;
  std::string backend_id;
  std::string template_id;
  double latency_ms = 0.0;
  std::string inputs_hash;
  bool from_cache = false;
  bool past_tense_advisory = true;  // false flags a sentence that may not be in past tense
};

struct EditRequest {
  scene::RgbFrame rgb;
  std::optional<scene::RgbFrame> thermal_pseudocolor;
  std::optional<DescriptorOutput> description;
  PromptTemplate tmpl;
  double target_delay_s = 0.0;

  /// The inputs present must be exactly those the template refers to.
  void validate() const {
    if (tmpl.stage != Stage::editor) throw UsageError("edit request: template '" + tmpl.id + "' is not an editor template");
    if (rgb.empty()) throw UsageError("edit request: empty RGB frame");
    if (tmpl.uses_thermal_image && !thermal_pseudocolor) {
      throw UsageError("edit request: template '" + tmpl.id + "' needs the thermal image");
    }
    if (!tmpl.uses_thermal_image && thermal_pseudocolor) {
      throw UsageError("edit request: template '" + tmpl.id + "' does not use a thermal image");
    }
    if (tmpl.references("description") != description.has_value()) {
      throw UsageError(std::string("edit request: template '") + tmpl.id +
                       (description ? "' takes no description" : "' requires a description"));
    }
    if (thermal_pseudocolor &&
        (thermal_pseudocolor->width() != rgb.width() || thermal_pseudocolor->height() != rgb.height())) {
      throw UsageError("edit request: thermal pseudocolor not registered to the RGB frame");
    }
  }
};

struct ReconstructionRecord {
  scene::RgbFrame image;
  std::string backend_id;
  std::optional<std::string> descriptor_template_id;
  std::string editor_template_id;
  std::string inputs_hash;
  std::string created_at;  // UTC, ISO 8601; when the backend produced the image
  std::string prompt;
  double latency_ms = 0.0;
  bool from_cache = false;
};

inline nlohmann::json to_json(const DescriptorOutput& d) {
  return {{"sentence", d.sentence},         {"raw_response", d.raw_response}, {"backend_id", d.backend_id},
          {"template_id", d.template_id},   {"inputs_hash", d.inputs_hash},
          {"past_tense_advisory", d.past_tense_advisory}};
}

/// Provenance without the image; timings are left to the caller.
inline nlohmann::json provenance_json(const ReconstructionRecord& r) {
  return {{"backend_id", r.backend_id},
          {"descriptor_template_id",
           r.descriptor_template_id ? nlohmann::json(*r.descriptor_template_id) : nlohmann::json(nullptr)},
          {"editor_template_id", r.editor_template_id},
          {"inputs_hash", r.inputs_hash},
          {"prompt", r.prompt},
          {"width", r.image.width()},
          {"height", r.image.height()}};
}

// ---------------------------------------------------------------------------
// Thermal delivery

/// Registers the thermal frame onto the RGB grid and renders it as the
/// pseudocolor image backends receive.
inline scene::RgbFrame prepare_thermal_image(const scene::PairedCapture& capture) {
  const auto& th = capture.thermal;
  const auto align =
      scene::AlignmentParams::pixel_centers(th.width(), th.height(), capture.rgb.width(), capture.rgb.height());
  const auto registered = scene::register_thermal(th, capture.rgb.width(), capture.rgb.height(), align);
  const double ambient = th.ambient_hint_c().value_or(traces::estimate_ambient(th));
  return scene::thermal_to_pseudocolor(scene::normalize_thermal(registered, ambient), capture.rgb.capture_time_s());
}

// ---------------------------------------------------------------------------
// Orchestration

struct RetryPolicy {
  int max_attempts = 3;
  std::vector<double> backoff_s{1.0, 2.0, 4.0};  // sleep after failed attempt k is backoff_s[k-1]
  std::function<void(double)> sleep = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };

  static RetryPolicy no_wait() {
    RetryPolicy p;
    p.sleep = [](double) {};
    return p;
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string describe_inputs_hash(const scene::RgbFrame& rgb, const std::optional<scene::RgbFrame>& thermal,
                                        const PromptTemplate& tmpl, const std::string& prompt) {
  Sha256 h;
  h.field("describe").field(tmpl.id).field(prompt);
  scene::hash_into(h, rgb);
  h.update_u64(thermal ? 1 : 0);
  if (thermal) scene::hash_into(h, *thermal);
  return h.hex();
}

inline std::string edit_inputs_hash(const EditRequest& req, const std::string& prompt) {
  Sha256 h;
  h.field("edit").field(req.tmpl.id).field(prompt);
  h.field(req.description ? req.description->template_id : "");
  scene::hash_into(h, req.rgb);
  h.update_u64(req.thermal_pseudocolor ? 1 : 0);
  if (req.thermal_pseudocolor) scene::hash_into(h, *req.thermal_pseudocolor);
  return h.hex();
}

class Pipeline {
 public:
  explicit Pipeline(std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>(),
                    RetryPolicy retry = {}, int max_in_flight = 4)
      : cache_(std::move(cache)), retry_(std::move(retry)), in_flight_(max_in_flight) {
    if (!cache_) throw UsageError("pipeline: null cache");
    if (retry_.max_attempts < 1) throw UsageError("pipeline: max_attempts must be >= 1");
  }

  ResponseCache& cache() { return *cache_; }

  DescriptorOutput describe_scene(const scene::PairedCapture& capture, const PromptTemplate& tmpl, Backend& backend,
                                  const std::optional<std::string>& trace_summary = std::nullopt) {
    backend.require(Capability::describe);
    const std::string prompt = render_descriptor_prompt(tmpl, capture.delay_s, trace_summary);
    std::optional<scene::RgbFrame> thermal;
    if (tmpl.uses_thermal_image) thermal = prepare_thermal_image(capture);
    const std::string hash = describe_inputs_hash(capture.rgb, thermal, tmpl, prompt);

    auto lookup = cache_->text(backend.id(), hash, [&] {
      std::vector<scene::RgbFrame> images{capture.rgb};
      if (thermal) images.push_back(*thermal);
      std::string last_raw;
      bool last_was_malformed = false;
      std::exception_ptr last_error;
      for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        if (attempt > 1) retry_.sleep(backoff(attempt - 1));
        const auto t0 = std::chrono::steady_clock::now();
        try {
          std::string raw;
          {
            SemaphoreGuard guard(in_flight_);
            raw = backend.describe(images, prompt);
          }
          validate_descriptor(raw);
          CacheEntry e;
          e.text = raw;
          e.meta = {{"backend_id", backend.id()}, {"stage", "describe"},          {"template_id", tmpl.id},
                    {"prompt", prompt},           {"latency_ms", elapsed_ms(t0)}, {"created_at", utc_timestamp()}};
          return e;
        } catch (const MalformedDescriptor& m) {
          last_raw = m.raw_response();
          last_was_malformed = true;
          last_error = std::current_exception();
        } catch (const TransportError&) {
          last_was_malformed = false;
          last_error = std::current_exception();
        }
      }
      if (last_was_malformed) {
        throw MalformedDescriptor("backend '" + backend.id() + "' returned no valid single sentence after " +
                                      std::to_string(retry_.max_attempts) + " attempts",
                                  last_raw);
      }
      std::rethrow_exception(last_error);
    });

    DescriptorOutput out;
    out.raw_response = lookup.entry.text;
    out.sentence = validate_descriptor(out.raw_response);
    out.backend_id = backend.id();
    out.template_id = tmpl.id;
    out.latency_ms = lookup.from_cache ? 0.0 : lookup.entry.meta.value("latency_ms", 0.0);
    out.inputs_hash = hash;
    out.from_cache = lookup.from_cache;
    out.past_tense_advisory = looks_past_tense(out.sentence);
    return out;
  }

  ReconstructionRecord reconstruct_past(const EditRequest& req, Backend& backend) {
    backend.require(Capability::edit);
    req.validate();
    const std::optional<std::string> desc =
        req.description ? std::optional<std::string>(req.description->sentence) : std::nullopt;
    const std::string prompt = render_edit_prompt(req.tmpl, desc);
    const std::string hash = edit_inputs_hash(req, prompt);
    const std::optional<std::string> desc_tmpl =
        req.description ? std::optional<std::string>(req.description->template_id) : std::nullopt;

    auto lookup = cache_->image(backend.id(), hash, [&] {
      std::vector<scene::RgbFrame> aux;
      if (req.thermal_pseudocolor) aux.push_back(*req.thermal_pseudocolor);
      std::exception_ptr last_error;
      for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
        if (attempt > 1) retry_.sleep(backoff(attempt - 1));
        const auto t0 = std::chrono::steady_clock::now();
        try {
          scene::RgbFrame img;
          {
            SemaphoreGuard guard(in_flight_);
            img = backend.edit(req.rgb, aux, prompt);
          }
          check_dims(img, req.rgb, backend.id());
          CacheEntry e;
          e.image = std::move(img);
          e.meta = {{"backend_id", backend.id()},
                    {"stage", "edit"},
                    {"template_id", req.tmpl.id},
                    {"descriptor_template_id", desc_tmpl ? nlohmann::json(*desc_tmpl) : nlohmann::json(nullptr)},
                    {"prompt", prompt},
                    {"latency_ms", elapsed_ms(t0)},
                    {"created_at", utc_timestamp()}};
          return e;
        } catch (const TransportError&) {
          last_error = std::current_exception();
        }
      }
      std::rethrow_exception(last_error);
    });

    check_dims(*lookup.entry.image, req.rgb, backend.id());
    ReconstructionRecord rec;
    rec.image = std::move(*lookup.entry.image);
    rec.image.set_capture_time_s(req.rgb.capture_time_s() - req.target_delay_s);
    rec.backend_id = backend.id();
    rec.descriptor_template_id = desc_tmpl;
    rec.editor_template_id = req.tmpl.id;
    rec.inputs_hash = hash;
    rec.created_at = lookup.entry.meta.value("created_at", std::string());
    rec.prompt = prompt;
    rec.latency_ms = lookup.from_cache ? 0.0 : lookup.entry.meta.value("latency_ms", 0.0);
    rec.from_cache = lookup.from_cache;
    return rec;
  }

 private:
  double backoff(int failed_attempt) const {
    if (retry_.backoff_s.empty()) return 0.0;
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(failed_attempt - 1), retry_.backoff_s.size() - 1);
    return retry_.backoff_s[i];
  }

  static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  static void check_dims(const scene::RgbFrame& got, const scene::RgbFrame& want, const std::string& id) {
    if (got.width() != want.width() || got.height() != want.height()) {
      throw BackendContractViolation("backend '" + id + "' returned " + std::to_string(got.width()) + "x" +
                                     std::to_string(got.height()) + " for a " + std::to_string(want.width()) + "x" +
                                     std::to_string(want.height()) + " input");
    }
  }

  std::shared_ptr<ResponseCache> cache_;
  RetryPolicy retry_;
  Semaphore in_flight_;
};

}  // namespace chronolens::vlm
