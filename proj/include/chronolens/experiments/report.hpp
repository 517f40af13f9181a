#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/experiments/experiments.hpp"
#include "chronolens/metrics/report.hpp"
#include "chronolens/scene/manifest.hpp"

namespace chronolens::experiments {

enum class ReportFormat { csv, markdown, plot_data };

inline ReportFormat report_format_from_string(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "plot-data" || s == "plot_data") return ReportFormat::plot_data;
  throw UsageError("unknown report format '" + s + "' (expected csv, markdown or plot-data)");
}

inline std::string file_suffix(ReportFormat f) {
  switch (f) {
    case ReportFormat::csv: return ".csv";
    case ReportFormat::markdown: return ".md";
    case ReportFormat::plot_data: return "_plot.csv";
  }
  return ".txt";
}

using ReportSource = std::variant<AblationTable, SweepSeries, ComparisonMatrix, LadderResult>;

namespace detail {

using nlohmann::json;
using metrics::MetricReport;
using metrics::MetricValue;

inline json opt_str(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

inline std::optional<std::string> str_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::string md_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += ' ';
    else out += c;
  }
  return out;
}

inline std::string check(bool b) { return b ? "✓" : "✗"; }

// mean,std,n for one metric; empty fields when absent.
inline std::string csv_metric(const std::optional<MetricValue>& v, double scale = 1.0) {
  if (!v) return ",,";
  const std::string mean = v->all_infinite() ? "inf" : metrics::format_fixed(v->mean * scale, 6);
  const std::string sd = v->std ? metrics::format_fixed(*v->std * scale, 6) : "";
  return mean + "," + sd + "," + std::to_string(v->count);
}

inline const char* kMetricCsvHeader =
    "oa_mean,oa_std,oa_n,mpjpe_mean,mpjpe_std,mpjpe_n,psnr_mean,psnr_std,psnr_n,psnr_excluded_inf,ssim_mean,ssim_std,"
    "ssim_n";

inline std::string csv_metrics(const std::optional<MetricReport>& r, double ssim_scale = 1.0) {
  if (!r) return ",,,,,,,,,,,,";
  return csv_metric(r->oa_percent) + "," + csv_metric(r->mpjpe_px) + "," + csv_metric(r->psnr_db) + "," +
         (r->psnr_db ? std::to_string(r->psnr_db->excluded_infinite) : std::string()) + "," +
         csv_metric(r->ssim, ssim_scale);
}

inline std::string md_metrics(const std::optional<MetricReport>& r, double ssim_scale = 1.0) {
  if (!r) return "— | — | — | —";
  return metrics::format_cell(r->oa_percent) + " | " + metrics::format_cell(r->mpjpe_px) + " | " +
         metrics::format_cell(r->psnr_db) + " | " + metrics::format_cell(r->ssim, 2, ssim_scale);
}

inline void plot_point(std::ostringstream& os, double x, const std::string& metric,
                       const std::optional<MetricValue>& v, double scale = 1.0) {
  if (!v) return;
  os << metrics::format_fixed(x, 3) << "," << metric << ","
     << (v->all_infinite() ? std::string("inf") : metrics::format_fixed(v->mean * scale, 6)) << "\n";
}

inline void plot_report(std::ostringstream& os, double x, const std::string& prefix,
                        const std::optional<MetricReport>& r, double ssim_scale, const char* ssim_name) {
  if (!r) return;
  plot_point(os, x, prefix + "oa_percent", r->oa_percent);
  plot_point(os, x, prefix + "mpjpe_px", r->mpjpe_px);
  plot_point(os, x, prefix + "psnr_db", r->psnr_db);
  plot_point(os, x, prefix + ssim_name, r->ssim, ssim_scale);
}

inline std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
  return s;
}

inline json row_json(const RowSummary& r) {
  return {{"n_ok", r.n_ok},
          {"n_failed", r.n_failed},
          {"metrics", r.metrics ? metrics::to_json(*r.metrics) : json(nullptr)}};
}

inline RowSummary row_from_json(const json& j) {
  RowSummary r;
  r.n_ok = j.at("n_ok").get<std::size_t>();
  r.n_failed = j.at("n_failed").get<std::size_t>();
  if (!j.at("metrics").is_null()) r.metrics = metrics::metric_report_from_json(j.at("metrics"));
  return r;
}

inline std::string row_notes(const std::string& name, const RowSummary& r) {
  std::string s;
  if (r.n_failed) s += name + ": " + std::to_string(r.n_failed) + " failed cell(s) left out.\n";
  if (r.metrics && r.metrics->psnr_db && r.metrics->psnr_db->excluded_infinite && !r.metrics->psnr_db->all_infinite()) {
    s += name + ": " + std::to_string(r.metrics->psnr_db->excluded_infinite) +
         " infinite PSNR sample(s) excluded from the mean.\n";
  }
  return s;
}

}  // namespace detail

inline nlohmann::json to_json(const CellSummary& c) {
  using detail::opt_str;
  return {{"scenario_id", c.scenario_id},
          {"delay_s", c.delay_s},
          {"backend_id", c.backend_id},
          {"thermal", c.thermal},
          {"descriptor", c.descriptor},
          {"descriptor_template_id", opt_str(c.descriptor_template_id)},
          {"editor_template_id", opt_str(c.editor_template_id)},
          {"status", c.ok() ? "ok" : "failed"},
          {"error", opt_str(c.error)},
          {"report", c.report ? metrics::to_json(*c.report) : nlohmann::json(nullptr)},
          {"sentence", opt_str(c.sentence)},
          {"inputs_hash", opt_str(c.inputs_hash)}};
}

inline CellSummary cell_summary_from_json(const nlohmann::json& j) {
  using detail::str_opt;
  CellSummary c;
  c.scenario_id = j.at("scenario_id").get<std::string>();
  c.delay_s = j.at("delay_s").get<double>();
  c.backend_id = j.at("backend_id").get<std::string>();
  c.thermal = j.at("thermal").get<bool>();
  c.descriptor = j.at("descriptor").get<bool>();
  c.descriptor_template_id = str_opt(j, "descriptor_template_id");
  c.editor_template_id = str_opt(j, "editor_template_id");
  c.error = str_opt(j, "error");
  if (j.at("status").get<std::string>() == "failed" && !c.error) c.error = "failed";
  if (!j.at("report").is_null()) c.report = metrics::metric_report_from_json(j.at("report"));
  c.sentence = str_opt(j, "sentence");
  c.inputs_hash = str_opt(j, "inputs_hash");
  return c;
}

inline nlohmann::json cells_json(const std::vector<CellSummary>& cells) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& c : cells) a.push_back(to_json(c));
  return a;
}

inline std::vector<CellSummary> cells_from_json(const nlohmann::json& a) {
  std::vector<CellSummary> out;
  for (const auto& c : a) out.push_back(cell_summary_from_json(c));
  return out;
}

/// Results documents exclude wall-clock data so repeated runs compare equal.
inline nlohmann::json to_json(const ReportSource& src) {
  using nlohmann::json;
  return std::visit(
      [](const auto& r) -> json {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, AblationTable>) {
          json rows = json::array();
          for (const auto& row : r.rows) {
            rows.push_back({{"rgb", true}, {"thermal", row.thermal}, {"descriptor", row.descriptor},
                            {"summary", detail::row_json(row.summary)}});
          }
          return {{"kind", "ablation"},       {"delay_s", r.delay_s}, {"backend_id", r.backend_id},
                  {"scenario_ids", r.scenario_ids}, {"rows", rows},    {"cells", cells_json(r.cells)}};
        } else if constexpr (std::is_same_v<T, SweepSeries>) {
          json points = json::array();
          for (const auto& p : r.points) {
            points.push_back({{"delay_s", p.delay_s},
                              {"summary", detail::row_json(p.summary)},
                              {"mean_trace_dt_c", p.mean_trace_dt_c}});
          }
          return {{"kind", "sweep"},     {"backend_id", r.backend_id}, {"scenario_ids", r.scenario_ids},
                  {"points", points},    {"cells", cells_json(r.cells)}};
        } else if constexpr (std::is_same_v<T, ComparisonMatrix>) {
          return {{"kind", "comparison"}, {"scenario_id", r.scenario_id}, {"delay_s", r.delay_s},
                  {"rows", cells_json(r.rows)}};
        } else {
          return {{"kind", "prompt_ladder"}, {"stage", vlm::to_string(r.stage)}, {"scenario_id", r.scenario_id},
                  {"delay_s", r.delay_s},    {"backend_id", r.backend_id},       {"levels", cells_json(r.levels)}};
        }
      },
      src);
}

inline ReportSource report_source_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "ablation") {
      AblationTable t;
      t.delay_s = j.at("delay_s").get<double>();
      t.backend_id = j.at("backend_id").get<std::string>();
      t.scenario_ids = j.at("scenario_ids").get<std::vector<std::string>>();
      for (const auto& row : j.at("rows")) {
        t.rows.push_back({row.at("thermal").get<bool>(), row.at("descriptor").get<bool>(),
                          detail::row_from_json(row.at("summary"))});
      }
      t.cells = cells_from_json(j.at("cells"));
      return t;
    }
    if (kind == "sweep") {
      SweepSeries s;
      s.backend_id = j.at("backend_id").get<std::string>();
      s.scenario_ids = j.at("scenario_ids").get<std::vector<std::string>>();
      for (const auto& p : j.at("points")) {
        s.points.push_back({p.at("delay_s").get<double>(), detail::row_from_json(p.at("summary")),
                            p.at("mean_trace_dt_c").get<double>()});
      }
      s.cells = cells_from_json(j.at("cells"));
      return s;
    }
    if (kind == "comparison") {
      ComparisonMatrix m;
      m.scenario_id = j.at("scenario_id").get<std::string>();
      m.delay_s = j.at("delay_s").get<double>();
      m.rows = cells_from_json(j.at("rows"));
      return m;
    }
    if (kind == "prompt_ladder") {
      LadderResult l;
      l.stage = vlm::stage_from_string(j.at("stage").get<std::string>());
      l.scenario_id = j.at("scenario_id").get<std::string>();
      l.delay_s = j.at("delay_s").get<double>();
      l.backend_id = j.at("backend_id").get<std::string>();
      l.levels = cells_from_json(j.at("levels"));
      return l;
    }
    throw DataError("results: unknown kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("results: schema violation: ") + e.what());
  }
}

inline bool is_empty(const ReportSource& src) {
  return std::visit(
      [](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, AblationTable>) return r.rows.empty();
        else if constexpr (std::is_same_v<T, SweepSeries>) return r.points.empty();
        else if constexpr (std::is_same_v<T, ComparisonMatrix>) return r.rows.empty();
        else return r.levels.empty();
      },
      src);
}

inline const char* kind_name(const ReportSource& src) {
  switch (src.index()) {
    case 0: return "ablation";
    case 1: return "sweep";
    case 2: return "comparison";
    default: return "prompt_ladder";
  }
}

// ---------------------------------------------------------------------------
// Renderers

inline std::string render(const AblationTable& t, ReportFormat f) {
  using namespace detail;
  static const char* kNames[] = {"RGB", "RGB + thermal", "RGB + thermal + descriptor"};
  std::ostringstream os;
  if (f == ReportFormat::markdown) {
    os << "| RGB | Thermal | Descriptor | OA | MPJPE | PSNR | SSIM |\n"
       << "|:---:|:---:|:---:|:---:|:---:|:---:|:---:|\n";
    for (const auto& row : t.rows) {
      os << "| " << check(true) << " | " << check(row.thermal) << " | " << check(row.descriptor) << " | "
         << md_metrics(row.summary.metrics) << " |\n";
    }
    os << "\nn = " << t.scenario_ids.size() << " scenarios per row (" << join(t.scenario_ids, ", ") << "); delay "
       << metrics::format_fixed(t.delay_s, 0) << " s; editor backend " << t.backend_id << ".\n";
    std::string notes;
    for (std::size_t i = 0; i < t.rows.size(); ++i) notes += row_notes(i < 3 ? kNames[i] : "row", t.rows[i].summary);
    if (!notes.empty()) os << "\n" << notes;
  } else if (f == ReportFormat::csv) {
    os << "rgb,thermal,descriptor,n_ok,n_failed," << kMetricCsvHeader << "\n";
    for (const auto& row : t.rows) {
      os << "1," << (row.thermal ? 1 : 0) << "," << (row.descriptor ? 1 : 0) << "," << row.summary.n_ok << ","
         << row.summary.n_failed << "," << csv_metrics(row.summary.metrics) << "\n";
    }
  } else {
    os << "delay_s,metric,value\n";
    for (const auto& row : t.rows) {
      std::string prefix = "rgb";
      if (row.thermal) prefix += "+thermal";
      if (row.descriptor) prefix += "+descriptor";
      plot_report(os, t.delay_s, prefix + "/", row.summary.metrics, 1.0, "ssim");
    }
  }
  return os.str();
}

inline std::string render(const SweepSeries& s, ReportFormat f) {
  using namespace detail;
  std::ostringstream os;
  if (f == ReportFormat::markdown) {
    os << "| Delay (s) | OA | MPJPE | PSNR | SSIM×100 | Trace ΔT (°C) |\n"
       << "|---:|:---:|:---:|:---:|:---:|---:|\n";
    for (const auto& p : s.points) {
      os << "| " << metrics::format_fixed(p.delay_s, 0) << " | " << md_metrics(p.summary.metrics, 100.0) << " | "
         << metrics::format_fixed(p.mean_trace_dt_c, 2) << " |\n";
    }
    os << "\nn = " << s.scenario_ids.size() << " scenarios per delay (" << join(s.scenario_ids, ", ")
       << "); editor backend " << s.backend_id << ".\n";
    std::string notes;
    for (const auto& p : s.points) notes += row_notes(metrics::format_fixed(p.delay_s, 0) + " s", p.summary);
    if (!notes.empty()) os << "\n" << notes;
  } else if (f == ReportFormat::csv) {
    std::string header = kMetricCsvHeader;
    header.replace(header.find("ssim_mean"), std::string::npos, "ssim_x100_mean,ssim_x100_std,ssim_n");
    os << "delay_s,n_ok,n_failed," << header << ",mean_trace_dt_c\n";
    for (const auto& p : s.points) {
      os << metrics::format_fixed(p.delay_s, 3) << "," << p.summary.n_ok << "," << p.summary.n_failed << ","
         << csv_metrics(p.summary.metrics, 100.0) << "," << metrics::format_fixed(p.mean_trace_dt_c, 6) << "\n";
    }
  } else {
    os << "delay_s,metric,value\n";
    for (const auto& p : s.points) {
      plot_report(os, p.delay_s, "", p.summary.metrics, 100.0, "ssim_x100");
      os << metrics::format_fixed(p.delay_s, 3) << ",trace_dt_c," << metrics::format_fixed(p.mean_trace_dt_c, 6)
         << "\n";
    }
  }
  return os.str();
}

inline std::string render(const ComparisonMatrix& m, ReportFormat f) {
  using namespace detail;
  std::ostringstream os;
  if (f == ReportFormat::markdown) {
    os << "| Backend | Status | OA | MPJPE | PSNR | SSIM |\n"
       << "|:---|:---:|:---:|:---:|:---:|:---:|\n";
    for (const auto& r : m.rows) {
      os << "| " << md_escape(r.backend_id) << " | " << (r.ok() ? "ok" : "failed") << " | "
         << md_metrics(r.ok() ? r.report : std::nullopt) << " |\n";
    }
    os << "\nScenario " << m.scenario_id << "; delay " << metrics::format_fixed(m.delay_s, 0) << " s.\n";
    bool header = false;
    for (const auto& r : m.rows) {
      if (r.ok()) continue;
      if (!header) os << "\n";
      header = true;
      os << md_escape(r.backend_id) << ": " << md_escape(*r.error) << "\n";
    }
  } else if (f == ReportFormat::csv) {
    os << "backend_id,status," << kMetricCsvHeader << ",error\n";
    for (const auto& r : m.rows) {
      os << csv_escape(r.backend_id) << "," << (r.ok() ? "ok" : "failed") << ","
         << csv_metrics(r.ok() ? r.report : std::nullopt) << "," << csv_escape(r.error.value_or("")) << "\n";
    }
  } else {
    os << "delay_s,metric,value\n";
    for (const auto& r : m.rows) {
      if (r.ok()) plot_report(os, m.delay_s, r.backend_id + "/", r.report, 1.0, "ssim");
    }
  }
  return os.str();
}

inline std::string render(const LadderResult& l, ReportFormat f) {
  using namespace detail;
  std::ostringstream os;
  if (f == ReportFormat::markdown) {
    os << "| Level | Template | Description | OA | MPJPE | PSNR | SSIM |\n"
       << "|:---:|:---|:---|:---:|:---:|:---:|:---:|\n";
    for (std::size_t i = 0; i < l.levels.size(); ++i) {
      const auto& c = l.levels[i];
      const std::string tmpl =
          (l.stage == vlm::Stage::descriptor ? c.descriptor_template_id : c.editor_template_id).value_or("—");
      const std::string text = c.ok() ? c.sentence.value_or("—") : "failed: " + *c.error;
      os << "| " << (i + 1) << " | " << tmpl << " | " << md_escape(text) << " | "
         << md_metrics(c.ok() ? c.report : std::nullopt) << " |\n";
    }
    os << "\n" << vlm::to_string(l.stage) << " ladder; scenario " << l.scenario_id << "; delay "
       << metrics::format_fixed(l.delay_s, 0) << " s; backend " << l.backend_id << ".\n";
  } else if (f == ReportFormat::csv) {
    os << "level,template_id,status,description," << kMetricCsvHeader << "\n";
    for (std::size_t i = 0; i < l.levels.size(); ++i) {
      const auto& c = l.levels[i];
      const std::string tmpl =
          (l.stage == vlm::Stage::descriptor ? c.descriptor_template_id : c.editor_template_id).value_or("");
      os << (i + 1) << "," << tmpl << "," << (c.ok() ? "ok" : "failed") << ","
         << csv_escape(c.sentence.value_or("")) << "," << csv_metrics(c.ok() ? c.report : std::nullopt) << "\n";
    }
  } else {
    os << "delay_s,metric,value\n";
    for (std::size_t i = 0; i < l.levels.size(); ++i) {
      const auto& c = l.levels[i];
      if (c.ok()) plot_report(os, l.delay_s, "level" + std::to_string(i + 1) + "/", c.report, 1.0, "ssim");
    }
  }
  return os.str();
}

inline std::string render(const ReportSource& src, ReportFormat f) {
  return std::visit([f](const auto& r) { return render(r, f); }, src);
}

inline std::string timings_csv(const std::vector<CellTiming>& timings) {
  std::ostringstream os;
  os << "cell,wall_ms,describe_latency_ms,edit_latency_ms,describe_cached,edit_cached\n";
  for (const auto& t : timings) {
    os << detail::csv_escape(t.label) << "," << metrics::format_fixed(t.wall_ms, 3) << ","
       << metrics::format_fixed(t.describe_latency_ms, 3) << "," << metrics::format_fixed(t.edit_latency_ms, 3) << ","
       << (t.describe_cached ? 1 : 0) << "," << (t.edit_cached ? 1 : 0) << "\n";
  }
  return os.str();
}

/// Writes one report file. Empty results are rejected before anything is
/// created.
inline void emit_report(const ReportSource& src, ReportFormat f, const std::filesystem::path& path) {
  if (is_empty(src)) throw UsageError("emit_report: no results to report");
  scene::write_text_file(path, render(src, f));
}

/// Writes <stem>.md, <stem>.csv, <stem>_plot.csv and <stem>_results.json into
/// `dir`, plus <stem>_timings.csv when timings are given. Returns the paths.
inline std::vector<std::filesystem::path> emit_all(const ReportSource& src, const std::filesystem::path& dir,
                                                   const std::string& stem,
                                                   const std::vector<CellTiming>& timings = {}) {
  if (is_empty(src)) throw UsageError("emit_report: no results to report");
  std::vector<std::filesystem::path> written;
  for (auto f : {ReportFormat::markdown, ReportFormat::csv, ReportFormat::plot_data}) {
    written.push_back(dir / (stem + file_suffix(f)));
    emit_report(src, f, written.back());
  }
  written.push_back(dir / (stem + "_results.json"));
  scene::write_json_file(written.back(), to_json(src));
  if (!timings.empty()) {
    written.push_back(dir / (stem + "_timings.csv"));
    scene::write_text_file(written.back(), timings_csv(timings));
  }
  return written;
}

}  // namespace chronolens::experiments
