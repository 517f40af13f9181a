#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "chronolens/core/digest.hpp"
#include "chronolens/scene/png_io.hpp"
#include "chronolens/vlm/backend.hpp"

namespace chronolens::vlm {

/// Hosted chat-vision / image-edit endpoint. `endpoint` is the base URL;
/// the request paths are appended to it.
struct HttpBackendConfig {
  std::string model;
  std::string describe_path = "/v1/chat/completions";
  std::string edit_path = "/v1/images/edits";
  double timeout_s = 120.0;
};

inline std::optional<std::string> env_value(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

/// Speaks two wire formats:
///   describe: chat-completions request with data-URL PNG images, answer
///             read from choices[0].message.content
///   edit:     {model, prompt, image, auxiliary_images} with base64 PNGs,
///             answer from data[0].b64_json or image_b64
/// The auth token comes only from CHRONOLENS_BACKEND_<ID>_TOKEN; the URL
/// may be overridden with CHRONOLENS_BACKEND_<ID>_URL.
class HttpBackend final : public Backend {
 public:
  HttpBackend(BackendDescriptor desc, HttpBackendConfig cfg) : desc_(std::move(desc)), cfg_(std::move(cfg)) {
    desc_.validate();
    if (auto url = env_value(backend_env_prefix(desc_.backend_id) + "URL")) desc_.endpoint = *url;
    static const std::regex url_re(R"(^(https?)://([^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(desc_.endpoint, m, url_re)) {
      throw DataError("backend '" + desc_.backend_id + "': endpoint must be an http(s) URL, got '" +
                      desc_.endpoint + "'");
    }
    origin_ = m[1].str() + "://" + m[2].str();
    base_path_ = m[3].matched ? m[3].str() : "";
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  }

  const BackendDescriptor& descriptor() const override { return desc_; }

  std::string describe(const std::vector<RgbFrame>& images, const std::string& prompt) override {
    require(Capability::describe);
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    for (const auto& img : images) {
      content.push_back(
          {{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(scene::encode_rgb_png(img))}}}});
    }
    const nlohmann::json body = {{"model", cfg_.model},
                                 {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
    const nlohmann::json resp = post(cfg_.describe_path, body);
    try {
      return resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw BackendContractViolation("backend '" + id() + "': response lacks choices[0].message.content");
    }
  }

  RgbFrame edit(const RgbFrame& image, const std::vector<RgbFrame>& auxiliary, const std::string& prompt) override {
    require(Capability::edit);
    nlohmann::json aux = nlohmann::json::array();
    for (const auto& a : auxiliary) aux.push_back(base64_encode(scene::encode_rgb_png(a)));
    const nlohmann::json body = {{"model", cfg_.model},
                                 {"prompt", prompt},
                                 {"image", base64_encode(scene::encode_rgb_png(image))},
                                 {"auxiliary_images", aux}};
    const nlohmann::json resp = post(cfg_.edit_path, body);
    std::string b64;
    if (resp.contains("data") && resp["data"].is_array() && !resp["data"].empty() &&
        resp["data"][0].contains("b64_json") && resp["data"][0]["b64_json"].is_string()) {
      b64 = resp["data"][0]["b64_json"].get<std::string>();
    } else if (resp.contains("image_b64") && resp["image_b64"].is_string()) {
      b64 = resp["image_b64"].get<std::string>();
    } else {
      throw BackendContractViolation("backend '" + id() + "': response carries no image");
    }
    try {
      return scene::decode_rgb_png(base64_decode(b64));
    } catch (const DataError& e) {
      throw BackendContractViolation("backend '" + id() + "': undecodable image: " + e.what());
    }
  }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) {
    httplib::Client cli(origin_);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (auto token = env_value(backend_env_prefix(desc_.backend_id) + "TOKEN")) {
      headers.emplace("Authorization", "Bearer " + *token);
    }
    auto res = cli.Post(base_path_ + path, headers, body.dump(), "application/json");
    if (!res) {
      throw TransportError("backend '" + id() + "': " + httplib::to_string(res.error()));
    }
    if (res->status == 408 || res->status == 429 || res->status >= 500) {
      throw TransportError("backend '" + id() + "': HTTP " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
      throw BackendContractViolation("backend '" + id() + "': HTTP " + std::to_string(res->status) + ": " +
                                     res->body.substr(0, 200));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw BackendContractViolation("backend '" + id() + "': response is not JSON");
    }
  }

  BackendDescriptor desc_;
  HttpBackendConfig cfg_;
  std::string origin_;
  std::string base_path_;
};

}  // namespace chronolens::vlm
