#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chronolens/core/concurrency.hpp"
#include "chronolens/core/error.hpp"
#include "chronolens/experiments/scoring.hpp"
#include "chronolens/metrics/report.hpp"
#include "chronolens/traces/traces.hpp"
#include "chronolens/vlm/backend.hpp"
#include "chronolens/vlm/pipeline.hpp"
#include "chronolens/vlm/templates.hpp"

namespace chronolens::experiments {

using BackendMap = std::map<std::string, std::shared_ptr<vlm::Backend>>;

inline constexpr int kDefaultLadderLevel = 4;
inline constexpr const char* kFixedDescriptionId = "fixed";

struct ExperimentCell {
  std::string scenario_id;
  double delay_s = 0.0;
  bool thermal = false;
  bool use_descriptor = false;
  std::optional<int> descriptor_ladder;
  int editor_ladder = kDefaultLadderLevel;
  std::string backend_id;                        // editor
  std::optional<std::string> describer_id;       // defaults to the runner's describer
  std::optional<std::string> fixed_description;  // replaces the descriptor stage
  bool reconstruct = true;                       // false: descriptor output only

  bool has_description() const { return use_descriptor || fixed_description.has_value(); }

  void validate() const {
    if (use_descriptor && !descriptor_ladder) throw UsageError("cell: use_descriptor requires descriptor_ladder");
    if (use_descriptor && fixed_description) throw UsageError("cell: fixed description and descriptor stage are exclusive");
    if (descriptor_ladder && (*descriptor_ladder < 1 || *descriptor_ladder > 4)) {
      throw UsageError("cell: descriptor_ladder must be in 1..4");
    }
    if (editor_ladder < 1 || editor_ladder > 4) throw UsageError("cell: editor_ladder must be in 1..4");
    if (!reconstruct && !use_descriptor) throw UsageError("cell: nothing to run");
  }

  /// The RGB frame is always edited; the template follows the extra inputs.
  std::string editor_template_id() const {
    if (has_description() && thermal) return "p_edit" + std::to_string(editor_ladder);
    if (has_description()) return "p_gen";
    if (thermal) return "p_gen_thermal";
    return "p_gen_rgb";
  }

  std::optional<std::string> descriptor_template_id() const {
    if (use_descriptor) return "p_desc" + std::to_string(*descriptor_ladder);
    if (fixed_description) return std::string(kFixedDescriptionId);
    return std::nullopt;
  }

  std::string label() const {
    std::string s = scenario_id + "@" + scene::delay_tag(delay_s) + "/" + backend_id + "/rgb";
    if (thermal) s += "+thermal";
    if (has_description()) s += "+descriptor";
    if (descriptor_ladder) s += "/d" + std::to_string(*descriptor_ladder);
    if (reconstruct) s += "/e" + std::to_string(editor_ladder);
    return s;
  }
};

/// Everything a report needs about one cell; images and timings excluded.
struct CellSummary {
  std::string scenario_id;
  double delay_s = 0.0;
  std::string backend_id;
  bool thermal = false;
  bool descriptor = false;
  std::optional<std::string> descriptor_template_id;
  std::optional<std::string> editor_template_id;
  std::optional<std::string> error;  // set when the cell failed
  std::optional<metrics::MetricReport> report;
  std::optional<std::string> sentence;
  std::optional<std::string> inputs_hash;

  bool ok() const { return !error; }
};

struct CellTiming {
  std::string label;
  double wall_ms = 0.0;
  double describe_latency_ms = 0.0;
  double edit_latency_ms = 0.0;
  bool describe_cached = false;
  bool edit_cached = false;
};

struct ExperimentResult {
  ExperimentCell cell;
  std::optional<vlm::ReconstructionRecord> record;
  std::optional<metrics::MetricReport> report;
  std::optional<vlm::DescriptorOutput> descriptor;
  std::optional<std::string> trace_summary;
  std::optional<std::string> error;
  double wall_ms = 0.0;

  bool ok() const { return !error; }

  CellSummary summary() const {
    CellSummary s;
    s.scenario_id = cell.scenario_id;
    s.delay_s = cell.delay_s;
    s.backend_id = cell.backend_id;
    s.thermal = cell.thermal;
    s.descriptor = cell.has_description();
    s.descriptor_template_id = cell.descriptor_template_id();
    if (cell.reconstruct) s.editor_template_id = cell.editor_template_id();
    s.error = error;
    s.report = report;
    if (descriptor) s.sentence = descriptor->sentence;
    if (record) {
      s.inputs_hash = record->inputs_hash;
    } else if (descriptor) {
      s.inputs_hash = descriptor->inputs_hash;
    }
    return s;
  }

  CellTiming timing() const {
    CellTiming t{cell.label(), wall_ms, 0.0, 0.0, false, false};
    if (descriptor) {
      t.describe_latency_ms = descriptor->latency_ms;
      t.describe_cached = descriptor->from_cache;
    }
    if (record) {
      t.edit_latency_ms = record->latency_ms;
      t.edit_cached = record->from_cache;
    }
    return t;
  }
};

struct ExperimentOptions {
  int concurrency = 4;
  bool trace_evidence = true;  // embed the measured trace inventory in descriptor prompts
  traces::TraceSettings traces;
  ScoreOptions scoring;
};

/// Executes cells against registered backends. Backend failures stay inside
/// their cell; data and usage errors abort the run.
class Runner {
 public:
  Runner(vlm::Pipeline& pipeline, BackendMap backends, std::string describer_id, ExperimentOptions opt = {})
      : pipeline_(pipeline), backends_(std::move(backends)), describer_id_(std::move(describer_id)), opt_(opt) {
    if (opt_.concurrency < 1) throw UsageError("concurrency must be >= 1");
  }

  vlm::Backend& backend(const std::string& id) const {
    auto it = backends_.find(id);
    if (it == backends_.end() || !it->second) throw DataError("unknown backend '" + id + "'");
    return *it->second;
  }

  const std::string& describer_id() const { return describer_id_; }
  const ExperimentOptions& options() const { return opt_; }

  ExperimentResult run_cell(const ExperimentCell& cell, const Scenario& scenario) {
    cell.validate();
    ExperimentResult r;
    r.cell = cell;
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cap = scenario.observation(cell.delay_s);
    vlm::Backend& editor = backend(cell.backend_id);
    vlm::Backend* describer = cell.use_descriptor ? &backend(cell.describer_id.value_or(describer_id_)) : nullptr;
    try {
      if (cell.use_descriptor) {
        if (opt_.trace_evidence) {
          const auto inv = traces::analyze_capture(cap, opt_.traces, scenario.gt_labels);
          r.trace_summary = traces::join_lines(traces::inventory_summary(inv));
        }
        r.descriptor = pipeline_.describe_scene(
            cap, vlm::ladder_template(vlm::Stage::descriptor, *cell.descriptor_ladder), *describer, r.trace_summary);
      } else if (cell.fixed_description) {
        vlm::DescriptorOutput d;
        d.sentence = *cell.fixed_description;
        d.raw_response = *cell.fixed_description;
        d.template_id = kFixedDescriptionId;
        r.descriptor = std::move(d);
      }
      if (cell.reconstruct) {
        vlm::EditRequest req;
        req.rgb = cap.rgb;
        if (cell.thermal) req.thermal_pseudocolor = vlm::prepare_thermal_image(cap);
        req.description = r.descriptor;
        req.tmpl = vlm::find_template(cell.editor_template_id());
        req.target_delay_s = cell.delay_s;
        r.record = pipeline_.reconstruct_past(req, editor);
        r.report = score(scenario, r.record->image, opt_.scoring);
      }
    } catch (const BackendError& e) {
      r.error = e.what();
      r.report.reset();
    }
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

  /// Results come back in cell order whatever the completion order.
  std::vector<ExperimentResult> run_cells(const std::vector<ExperimentCell>& cells,
                                          const std::vector<const Scenario*>& scenarios) {
    std::map<std::string, const Scenario*> by_id;
    for (const auto* s : scenarios) by_id[s->id()] = s;
    for (const auto& c : cells) {
      c.validate();
      auto it = by_id.find(c.scenario_id);
      if (it == by_id.end()) throw DataError("unknown scenario '" + c.scenario_id + "'");
      it->second->observation(c.delay_s);
      backend(c.backend_id);
      if (c.use_descriptor) backend(c.describer_id.value_or(describer_id_));
    }
    std::vector<ExperimentResult> out(cells.size());
    parallel_for(cells.size(), opt_.concurrency,
                 [&](std::size_t i) { out[i] = run_cell(cells[i], *by_id.at(cells[i].scenario_id)); });
    return out;
  }

 private:
  vlm::Pipeline& pipeline_;
  BackendMap backends_;
  std::string describer_id_;
  ExperimentOptions opt_;
};

// ---------------------------------------------------------------------------
// Aggregation

struct RowSummary {
  std::optional<metrics::MetricReport> metrics;  // absent when every cell failed
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
};

inline RowSummary summarize_row(const std::vector<const CellSummary*>& cells) {
  RowSummary row;
  std::vector<metrics::MetricReport> samples;
  for (const auto* c : cells) {
    if (c->ok() && c->report) {
      samples.push_back(*c->report);
      ++row.n_ok;
    } else {
      ++row.n_failed;
    }
  }
  if (!samples.empty()) {
    try {
      row.metrics = metrics::aggregate(samples);
    } catch (const UsageError& e) {
      throw DataError(std::string("scenarios disagree on available annotations: ") + e.what());
    }
  }
  return row;
}

inline std::vector<const Scenario*> pointers(const std::vector<Scenario>& scenarios) {
  std::vector<const Scenario*> p;
  for (const auto& s : scenarios) p.push_back(&s);
  return p;
}

inline std::vector<std::string> scenario_ids(const std::vector<Scenario>& scenarios) {
  std::vector<std::string> ids;
  for (const auto& s : scenarios) ids.push_back(s.id());
  return ids;
}

inline void require_scenarios(const std::vector<Scenario>& scenarios, const char* op) {
  if (scenarios.empty()) throw UsageError(std::string(op) + ": no scenarios");
  std::set<std::string> ids;
  for (const auto& s : scenarios) {
    if (!ids.insert(s.id()).second) throw DataError(std::string(op) + ": duplicate scenario '" + s.id() + "'");
  }
}

struct LadderLevels {
  int descriptor = kDefaultLadderLevel;
  int editor = kDefaultLadderLevel;
};

// ---------------------------------------------------------------------------
// Modality ablation

struct AblationRow {
  bool thermal = false;
  bool descriptor = false;
  RowSummary summary;
};

struct AblationTable {
  double delay_s = 0.0;
  std::string backend_id;
  std::vector<std::string> scenario_ids;
  std::vector<AblationRow> rows;
  std::vector<CellSummary> cells;
  std::vector<CellTiming> timings;
};

/// Rows: RGB; RGB + thermal; RGB + thermal + descriptor.
inline AblationTable run_ablation(const std::vector<Scenario>& scenarios, const std::string& backend_id,
                                  double delay_s, Runner& runner, LadderLevels ladders = {}) {
  require_scenarios(scenarios, "ablation");
  static constexpr std::pair<bool, bool> kRows[] = {{false, false}, {true, false}, {true, true}};
  std::vector<ExperimentCell> cells;
  for (const auto& [thermal, desc] : kRows) {
    for (const auto& s : scenarios) {
      ExperimentCell c;
      c.scenario_id = s.id();
      c.delay_s = delay_s;
      c.thermal = thermal;
      c.use_descriptor = desc;
      if (desc) c.descriptor_ladder = ladders.descriptor;
      c.editor_ladder = ladders.editor;
      c.backend_id = backend_id;
      cells.push_back(std::move(c));
    }
  }
  const auto results = runner.run_cells(cells, pointers(scenarios));
  AblationTable t;
  t.delay_s = delay_s;
  t.backend_id = backend_id;
  t.scenario_ids = scenario_ids(scenarios);
  for (const auto& r : results) {
    t.cells.push_back(r.summary());
    t.timings.push_back(r.timing());
  }
  const std::size_t n = scenarios.size();
  for (std::size_t row = 0; row < 3; ++row) {
    std::vector<const CellSummary*> group;
    for (std::size_t i = 0; i < n; ++i) group.push_back(&t.cells[row * n + i]);
    t.rows.push_back({kRows[row].first, kRows[row].second, summarize_row(group)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Temporal sweep

struct SweepPoint {
  double delay_s = 0.0;
  RowSummary summary;
  double mean_trace_dt_c = 0.0;  // mean over scenarios of the observation's trace dT
};

struct SweepSeries {
  std::string backend_id;
  std::vector<std::string> scenario_ids;
  std::vector<SweepPoint> points;
  std::vector<CellSummary> cells;
  std::vector<CellTiming> timings;
};

/// Full pipeline (RGB + thermal + descriptor) at each delay.
inline SweepSeries run_temporal_sweep(const std::vector<Scenario>& scenarios, const std::string& backend_id,
                                      std::vector<double> delays_s, Runner& runner, LadderLevels ladders = {}) {
  require_scenarios(scenarios, "sweep");
  if (delays_s.empty()) throw UsageError("sweep: no delays");
  std::sort(delays_s.begin(), delays_s.end());
  if (std::adjacent_find(delays_s.begin(), delays_s.end()) != delays_s.end()) {
    throw UsageError("sweep: duplicate delay");
  }
  std::vector<ExperimentCell> cells;
  for (double d : delays_s) {
    for (const auto& s : scenarios) {
      ExperimentCell c;
      c.scenario_id = s.id();
      c.delay_s = d;
      c.thermal = true;
      c.use_descriptor = true;
      c.descriptor_ladder = ladders.descriptor;
      c.editor_ladder = ladders.editor;
      c.backend_id = backend_id;
      cells.push_back(std::move(c));
    }
  }
  const auto results = runner.run_cells(cells, pointers(scenarios));
  SweepSeries out;
  out.backend_id = backend_id;
  out.scenario_ids = scenario_ids(scenarios);
  for (const auto& r : results) {
    out.cells.push_back(r.summary());
    out.timings.push_back(r.timing());
  }
  const std::size_t n = scenarios.size();
  for (std::size_t k = 0; k < delays_s.size(); ++k) {
    std::vector<const CellSummary*> group;
    double dt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      group.push_back(&out.cells[k * n + i]);
      dt += traces::mean_trace_dt(scenarios[i].observation(delays_s[k]).thermal);
    }
    out.points.push_back({delays_s[k], summarize_row(group), dt / static_cast<double>(n)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generator comparison

struct ComparisonMatrix {
  std::string scenario_id;
  double delay_s = 0.0;
  std::vector<CellSummary> rows;  // one per backend, in request order
  std::vector<CellTiming> timings;
};

/// Same full-ladder cell for every backend; only the editor changes.
inline ComparisonMatrix run_generator_comparison(const Scenario& scenario, const std::vector<std::string>& backend_ids,
                                                 double delay_s, Runner& runner, LadderLevels ladders = {}) {
  if (backend_ids.empty()) throw UsageError("compare-generators: no backends");
  std::set<std::string> seen;
  bool any_edit = false;
  for (const auto& id : backend_ids) {
    if (!seen.insert(id).second) throw UsageError("compare-generators: duplicate backend '" + id + "'");
    any_edit = runner.backend(id).descriptor().supports(vlm::Capability::edit) || any_edit;
  }
  if (!any_edit) throw UsageError("compare-generators: no backend with edit capability");
  std::vector<ExperimentCell> cells;
  for (const auto& id : backend_ids) {
    ExperimentCell c;
    c.scenario_id = scenario.id();
    c.delay_s = delay_s;
    c.thermal = true;
    c.use_descriptor = true;
    c.descriptor_ladder = ladders.descriptor;
    c.editor_ladder = ladders.editor;
    c.backend_id = id;
    cells.push_back(std::move(c));
  }
  const auto results = runner.run_cells(cells, {&scenario});
  ComparisonMatrix m;
  m.scenario_id = scenario.id();
  m.delay_s = delay_s;
  for (const auto& r : results) {
    m.rows.push_back(r.summary());
    m.timings.push_back(r.timing());
  }
  return m;
}

/// True when `a` beats `b` on every metric both report: higher PSNR, SSIM
/// and OA, lower MPJPE. All four must be present.
inline bool strictly_dominates(const metrics::MetricReport& a, const metrics::MetricReport& b) {
  if (!a.psnr_db || !b.psnr_db || !a.ssim || !b.ssim || !a.mpjpe_px || !b.mpjpe_px || !a.oa_percent ||
      !b.oa_percent) {
    return false;
  }
  return a.psnr_db->mean > b.psnr_db->mean && a.ssim->mean > b.ssim->mean && a.mpjpe_px->mean < b.mpjpe_px->mean &&
         a.oa_percent->mean > b.oa_percent->mean;
}

// ---------------------------------------------------------------------------
// Prompt ladders

inline constexpr const char* kDefaultLadderDescription = "the person was sitting and holding the book";

struct LadderResult {
  vlm::Stage stage = vlm::Stage::descriptor;
  std::string scenario_id;
  double delay_s = 0.0;
  std::string backend_id;
  std::vector<CellSummary> levels;  // levels 1..4 in order
  std::vector<CellTiming> timings;
};

/// Descriptor stage: levels 1..4 described by `backend_id`, each sentence
/// logged; no reconstruction. Editor stage: levels 1..4 edited by
/// `backend_id` from one fixed description, scored.
inline LadderResult run_prompt_ladder(const Scenario& scenario, const std::string& backend_id, vlm::Stage stage,
                                      double delay_s, Runner& runner,
                                      const std::string& fixed_description = kDefaultLadderDescription) {
  runner.backend(backend_id).require(stage == vlm::Stage::descriptor ? vlm::Capability::describe
                                                                      : vlm::Capability::edit);
  std::vector<ExperimentCell> cells;
  for (int level = 1; level <= 4; ++level) {
    ExperimentCell c;
    c.scenario_id = scenario.id();
    c.delay_s = delay_s;
    c.thermal = true;
    c.backend_id = backend_id;
    if (stage == vlm::Stage::descriptor) {
      c.use_descriptor = true;
      c.descriptor_ladder = level;
      c.describer_id = backend_id;
      c.reconstruct = false;
    } else {
      c.fixed_description = fixed_description;
      c.editor_ladder = level;
    }
    cells.push_back(std::move(c));
  }
  const auto results = runner.run_cells(cells, {&scenario});
  LadderResult out;
  out.stage = stage;
  out.scenario_id = scenario.id();
  out.delay_s = delay_s;
  out.backend_id = backend_id;
  for (const auto& r : results) {
    out.levels.push_back(r.summary());
    out.timings.push_back(r.timing());
  }
  return out;
}

}  // namespace chronolens::experiments
