#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"

namespace chronolens::metrics {

/// One metric, either a single sample (count 1) or an aggregate.
struct MetricValue {
  double mean = 0.0;
  std::optional<double> std;   // sample std, only when count >= 2
  std::size_t count = 0;       // finite samples in the mean
  std::size_t excluded_infinite = 0;

  static MetricValue sample(double v) {
    if (std::isinf(v) && v > 0) return {std::numeric_limits<double>::infinity(), std::nullopt, 0, 1};
    return {v, std::nullopt, 1, 0};
  }

  bool all_infinite() const { return count == 0 && excluded_infinite > 0; }

  friend bool operator==(const MetricValue&, const MetricValue&) = default;
};

struct MetricReport {
  std::optional<MetricValue> psnr_db;
  std::optional<MetricValue> ssim;
  std::optional<MetricValue> mpjpe_px;
  std::optional<MetricValue> oa_percent;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline MetricReport make_report(std::optional<double> psnr_db, std::optional<double> ssim_v,
                                std::optional<double> mpjpe_px, std::optional<double> oa_percent) {
  MetricReport r;
  if (psnr_db) r.psnr_db = MetricValue::sample(*psnr_db);
  if (ssim_v) {
    if (*ssim_v < -1.0 || *ssim_v > 1.0) throw DataError("metric report: ssim outside [-1,1]");
    r.ssim = MetricValue::sample(*ssim_v);
  }
  if (mpjpe_px) {
    if (*mpjpe_px < 0.0) throw DataError("metric report: mpjpe negative");
    r.mpjpe_px = MetricValue::sample(*mpjpe_px);
  }
  if (oa_percent) {
    if (*oa_percent < 0.0 || *oa_percent > 100.0) throw DataError("metric report: oa outside [0,100]");
    r.oa_percent = MetricValue::sample(*oa_percent);
  }
  return r;
}

namespace detail {

inline std::optional<MetricValue> aggregate_one(const std::vector<MetricReport>& samples,
                                                std::optional<MetricValue> MetricReport::*field,
                                                const char* name) {
  const bool present = (samples.front().*field).has_value();
  std::vector<double> finite;
  std::size_t excluded = 0;
  for (const auto& s : samples) {
    if ((s.*field).has_value() != present) {
      throw UsageError(std::string("aggregate: inconsistent presence of ") + name);
    }
    if (!present) continue;
    const MetricValue& v = *(s.*field);
    if (v.all_infinite() || std::isinf(v.mean)) {
      excluded += std::max<std::size_t>(v.excluded_infinite, 1);
    } else {
      finite.push_back(v.mean);
    }
  }
  if (!present) return std::nullopt;
  MetricValue out;
  out.count = finite.size();
  out.excluded_infinite = excluded;
  if (finite.empty()) {
    out.mean = std::numeric_limits<double>::infinity();
    return out;
  }
  double sum = 0.0;
  for (double v : finite) sum += v;
  out.mean = sum / static_cast<double>(finite.size());
  if (finite.size() >= 2) {
    double ss = 0.0;
    for (double v : finite) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(finite.size() - 1));
  }
  return out;
}

}  // namespace detail

/// Per-metric mean and sample standard deviation (n-1). Infinite PSNR samples
/// are left out of the mean and counted in `excluded_infinite`.
inline MetricReport aggregate(const std::vector<MetricReport>& samples) {
  if (samples.empty()) throw UsageError("aggregate: no samples");
  MetricReport r;
  r.psnr_db = detail::aggregate_one(samples, &MetricReport::psnr_db, "psnr");
  r.ssim = detail::aggregate_one(samples, &MetricReport::ssim, "ssim");
  r.mpjpe_px = detail::aggregate_one(samples, &MetricReport::mpjpe_px, "mpjpe");
  r.oa_percent = detail::aggregate_one(samples, &MetricReport::oa_percent, "oa");
  return r;
}

inline std::string format_fixed(double v, int decimals = 2) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Table cell in the "18.57 ± 1.21" layout. Absent metrics render as an em
/// dash, all-infinite PSNR as "∞".
inline std::string format_cell(const std::optional<MetricValue>& v, int decimals = 2, double scale = 1.0) {
  if (!v) return "—";
  if (v->all_infinite()) return "∞";
  std::string s = format_fixed(v->mean * scale, decimals);
  if (v->std) s += " ± " + format_fixed(*v->std * scale, decimals);
  return s;
}

inline nlohmann::json to_json(const MetricValue& v) {
  nlohmann::json j = {{"count", v.count}, {"excluded_infinite", v.excluded_infinite}};
  j["mean"] = std::isinf(v.mean) ? nlohmann::json("inf") : nlohmann::json(v.mean);
  j["std"] = v.std ? nlohmann::json(*v.std) : nlohmann::json(nullptr);
  return j;
}

inline MetricValue metric_value_from_json(const nlohmann::json& j) {
  MetricValue v;
  v.count = j.at("count").get<std::size_t>();
  v.excluded_infinite = j.at("excluded_infinite").get<std::size_t>();
  v.mean = j.at("mean").is_string() ? std::numeric_limits<double>::infinity() : j.at("mean").get<double>();
  if (!j.at("std").is_null()) v.std = j.at("std").get<double>();
  return v;
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto opt = [](const std::optional<MetricValue>& v) { return v ? to_json(*v) : nlohmann::json(nullptr); };
  return {{"psnr_db", opt(r.psnr_db)}, {"ssim", opt(r.ssim)}, {"mpjpe_px", opt(r.mpjpe_px)},
          {"oa_percent", opt(r.oa_percent)}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  auto opt = [&](const char* key) -> std::optional<MetricValue> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return metric_value_from_json(j.at(key));
  };
  return {opt("psnr_db"), opt("ssim"), opt("mpjpe_px"), opt("oa_percent")};
}

}  // namespace chronolens::metrics
