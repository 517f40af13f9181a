#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chronolens/cli/config.hpp"
#include "chronolens/core/error.hpp"
#include "chronolens/experiments/experiments.hpp"
#include "chronolens/experiments/report.hpp"
#include "chronolens/experiments/scoring.hpp"
#include "chronolens/metrics/image_quality.hpp"
#include "chronolens/metrics/pose.hpp"
#include "chronolens/metrics/segmentation.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/sim/scenario.hpp"
#include "chronolens/traces/traces.hpp"
#include "chronolens/vlm/pipeline.hpp"
#include "chronolens/vlm/templates.hpp"

namespace chronolens::cli {

/// Stable exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kBackend = 3,
  kPartial = 4,
};

namespace detail {

struct Globals {
  std::string config;
  std::string cache_dir;
  int concurrency = 0;
  std::optional<std::uint64_t> seed;
};

inline GlobalConfig resolve_globals(const Globals& g) {
  GlobalConfig cfg = load_global_config(g.config.empty() ? std::nullopt : std::optional<fs::path>(g.config));
  if (!g.cache_dir.empty()) cfg.cache_dir = fs::path(g.cache_dir);
  if (g.concurrency != 0) cfg.concurrency = g.concurrency;
  if (g.seed) cfg.seed = g.seed;
  cfg.validate();
  return cfg;
}

inline std::vector<scene::ScenarioManifest> load_manifests(const std::vector<std::string>& paths) {
  if (paths.empty()) throw UsageError("at least one --manifest is required");
  std::vector<scene::ScenarioManifest> out;
  for (const auto& p : paths) out.push_back(scene::load_manifest(p));
  return out;
}

/// Flag value if given, else the config's experiment section, else `fallback`.
template <typename T>
T pick(const std::optional<T>& flag, const GlobalConfig& cfg, const char* key, T fallback) {
  if (flag) return *flag;
  if (cfg.experiment.contains(key)) {
    try {
      return cfg.experiment.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("config.experiment.") + key + ": " + e.what());
    }
  }
  return fallback;
}

inline std::vector<std::string> pick_manifests(const std::vector<std::string>& flag, const GlobalConfig& cfg) {
  if (!flag.empty()) return flag;
  std::vector<std::string> out;
  if (cfg.experiment.contains("manifests")) {
    for (const auto& m : cfg.experiment.at("manifests")) out.push_back(cfg.resolve(m.get<std::string>()).string());
  }
  return out;
}

/// Shared state of every backend-calling command.
struct Session {
  GlobalConfig cfg;
  std::vector<scene::ScenarioManifest> manifests;
  experiments::BackendMap backends;
  std::shared_ptr<vlm::Pipeline> pipeline;

  Session(GlobalConfig c, std::vector<scene::ScenarioManifest> m) : cfg(std::move(c)), manifests(std::move(m)) {
    backends = make_backends(cfg, manifests);
    auto cache = std::make_shared<vlm::ResponseCache>(cfg.cache_dir.value_or(fs::path(kDefaultCacheDir)));
    pipeline = std::make_shared<vlm::Pipeline>(cache, make_retry(cfg), cfg.concurrency);
  }

  vlm::Backend& backend(const std::string& id) const {
    auto it = backends.find(id);
    if (it == backends.end()) throw DataError("unknown backend '" + id + "'");
    return *it->second;
  }

  std::vector<experiments::Scenario> scenarios() const {
    std::vector<experiments::Scenario> out;
    for (const auto& m : manifests) out.push_back(experiments::load_scenario(m, cfg.adapter));
    return out;
  }

  experiments::Runner runner() const {
    return experiments::Runner(*pipeline, backends, cfg.describer, make_experiment_options(cfg));
  }
};

inline int experiment_exit(std::ostream& err, std::size_t failed) {
  if (failed == 0) return kOk;
  err << "chronolens: " << failed << " cell(s) failed; see the report for details\n";
  return kPartial;
}

template <typename Cells>
std::size_t count_failed(const Cells& cells) {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const experiments::CellSummary& c) { return !c.ok(); }));
}

}  // namespace detail

/// Runs one command line (without the program name). Diagnostics go to `err`.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"chronolens: time-reversed scene reconstruction from paired RGB and thermal captures"};
  app.name("chronolens");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--cache-dir", g.cache_dir, "response cache directory");
  app.add_option("--concurrency", g.concurrency, "in-flight backend request limit")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "simulator sensor seed");

  std::function<int()> action;

  // simulate ---------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "generate synthetic paired RGB/thermal scenario sequences");
  std::vector<std::string> sim_presets;
  std::string sim_out;
  sim->add_option("--preset", sim_presets, "built-in scenario: sit_chair, lean_wall, touch_object or all");
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->callback([&] {
    action = [&] {
      GlobalConfig cfg = resolve_globals(g);
      std::vector<nlohmann::json> docs;
      for (const auto& p : sim_presets) {
        if (p == "all") {
          for (auto k : {scene::ScenarioKind::sit_chair, scene::ScenarioKind::lean_wall, scene::ScenarioKind::touch_object})
            docs.push_back(sim::preset_config_json(k));
        } else {
          docs.push_back(sim::preset_config_json(scene::scenario_kind_from_string(p)));
        }
      }
      if (!cfg.simulation.is_null()) {
        if (cfg.simulation.contains("scenarios")) {
          for (const auto& s : cfg.simulation.at("scenarios")) docs.push_back(s);
        } else {
          docs.push_back(cfg.simulation);
        }
      }
      if (docs.empty()) throw UsageError("simulate: give --preset or a --config with a simulation document");
      for (const auto& doc : docs) {
        sim::SimConfig sc = sim::sim_config_from_json(doc);
        if (cfg.seed) sc.sensor.seed = *cfg.seed;
        auto result = sim::generate_scenario_sequence(sc);
        out << sim::write_simulation(result, sim_out).string() << "\n";
      }
      return int(kOk);
    };
  });

  // ingest -----------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "validate capture manifests and optionally re-save them");
  std::vector<std::string> ing_manifests;
  std::string ing_out;
  ingest->add_option("--manifest", ing_manifests, "manifest JSON")->required();
  ingest->add_option("--out", ing_out, "write a normalized copy into this directory");
  ingest->callback([&] {
    action = [&] {
      for (const auto& m : load_manifests(ing_manifests)) {
        out << m.scenario_id << ": kind " << scene::to_string(m.kind) << ", " << m.ground_truth.rgb.width() << "x"
            << m.ground_truth.rgb.height() << " RGB, " << m.ground_truth.thermal.width() << "x"
            << m.ground_truth.thermal.height() << " thermal, delays";
        for (double d : m.delays()) out << " " << scene::delay_tag(d);
        out << (m.annotations.empty() ? ", no annotations" : ", annotated") << "\n";
        if (!ing_out.empty()) out << scene::save_manifest(m, ing_out).string() << "\n";
      }
      return int(kOk);
    };
  });

  // traces -----------------------------------------------------------------
  auto* tr = app.add_subcommand("traces", "detect and grade residual heat traces");
  std::string tr_manifest, tr_out;
  std::optional<double> tr_delay, tr_threshold;
  tr->add_option("--manifest", tr_manifest, "manifest JSON")->required();
  tr->add_option("--delay", tr_delay, "only this delay (seconds)");
  tr->add_option("--threshold", tr_threshold, "detection threshold above ambient (C)");
  tr->add_option("--out", tr_out, "write inventories as JSON");
  tr->callback([&] {
    action = [&] {
      GlobalConfig cfg = resolve_globals(g);
      if (tr_threshold) cfg.traces.threshold_dt_c = *tr_threshold;
      cfg.validate();
      const auto m = scene::load_manifest(tr_manifest);
      const auto scenario = experiments::load_scenario(m);
      nlohmann::json doc = nlohmann::json::object();
      for (const auto& o : m.observations) {
        if (tr_delay && o.delay_s != *tr_delay) continue;
        const auto inv = traces::analyze_capture(o, cfg.traces, scenario.gt_labels);
        out << m.scenario_id << " @ " << scene::delay_tag(o.delay_s) << " (ambient "
            << metrics::format_fixed(inv.ambient_c, 2) << " C)\n";
        for (const auto& line : traces::inventory_summary(inv)) out << "  " << line << "\n";
        doc[scene::delay_tag(o.delay_s)] = traces::to_json(inv);
      }
      if (tr_delay && doc.empty()) throw DataError("traces: no observation at delay " + scene::delay_tag(*tr_delay));
      if (!tr_out.empty()) scene::write_json_file(tr_out, doc);
      return int(kOk);
    };
  });

  // describe ---------------------------------------------------------------
  auto* desc = app.add_subcommand("describe", "descriptor stage: one past-tense sentence from RGB + thermal");
  std::string d_manifest, d_backend, d_template, d_out;
  double d_delay = 30.0;
  bool d_no_evidence = false;
  desc->add_option("--manifest", d_manifest, "manifest JSON")->required();
  desc->add_option("--delay", d_delay, "observation delay (seconds)");
  desc->add_option("--backend", d_backend, "describe-capable backend (default: config describer)");
  desc->add_option("--template", d_template, "descriptor template id (default p_desc4)");
  desc->add_flag("--no-evidence", d_no_evidence, "do not embed the measured trace inventory");
  desc->add_option("--out", d_out, "write the descriptor output as JSON");
  desc->callback([&] {
    action = [&] {
      Session s(resolve_globals(g), {scene::load_manifest(d_manifest)});
      const auto scenario = experiments::load_scenario(s.manifests.front());
      const auto& cap = scenario.observation(d_delay);
      const auto& tmpl = vlm::find_template(d_template.empty() ? "p_desc4" : d_template);
      vlm::Backend& backend = s.backend(d_backend.empty() ? s.cfg.describer : d_backend);
      std::optional<std::string> evidence;
      if (!d_no_evidence && s.cfg.trace_evidence) {
        evidence = traces::join_lines(
            traces::inventory_summary(traces::analyze_capture(cap, s.cfg.traces, scenario.gt_labels)));
      }
      const auto d = s.pipeline->describe_scene(cap, tmpl, backend, evidence);
      if (!d.past_tense_advisory) err << "chronolens: warning: descriptor may not be in past tense\n";
      out << d.sentence << "\n";
      if (!d_out.empty()) scene::write_json_file(d_out, vlm::to_json(d));
      return int(kOk);
    };
  });

  // reconstruct ------------------------------------------------------------
  auto* rec = app.add_subcommand("reconstruct", "editor stage: render the scene as it was before the delay");
  std::string r_manifest, r_backend, r_modalities = "rgb+thermal+descriptor", r_description, r_out;
  double r_delay = 30.0;
  int r_dlevel = experiments::kDefaultLadderLevel, r_elevel = experiments::kDefaultLadderLevel;
  rec->add_option("--manifest", r_manifest, "manifest JSON")->required();
  rec->add_option("--backend", r_backend, "edit-capable backend")->required();
  rec->add_option("--delay", r_delay, "observation delay (seconds)");
  rec->add_option("--modalities", r_modalities, "rgb, rgb+thermal, rgb+descriptor or rgb+thermal+descriptor");
  rec->add_option("--descriptor-level", r_dlevel, "descriptor ladder level 1..4")->check(CLI::Range(1, 4));
  rec->add_option("--editor-level", r_elevel, "editor ladder level 1..4")->check(CLI::Range(1, 4));
  rec->add_option("--description", r_description, "use this description instead of the descriptor stage");
  rec->add_option("--out", r_out, "output PNG; provenance goes next to it as .json")->required();
  rec->callback([&] {
    action = [&] {
      static const std::vector<std::string> kModes{"rgb", "rgb+thermal", "rgb+descriptor", "rgb+thermal+descriptor"};
      if (std::find(kModes.begin(), kModes.end(), r_modalities) == kModes.end()) {
        throw UsageError("--modalities: expected one of rgb, rgb+thermal, rgb+descriptor, rgb+thermal+descriptor");
      }
      Session s(resolve_globals(g), {scene::load_manifest(r_manifest)});
      s.backend(r_backend);
      const auto scenario = experiments::load_scenario(s.manifests.front(), s.cfg.adapter);
      experiments::ExperimentCell cell;
      cell.scenario_id = scenario.id();
      cell.delay_s = r_delay;
      cell.thermal = r_modalities.find("thermal") != std::string::npos;
      const bool wants_desc = r_modalities.find("descriptor") != std::string::npos;
      if (wants_desc && !r_description.empty()) {
        cell.fixed_description = r_description;
      } else if (wants_desc) {
        cell.use_descriptor = true;
        cell.descriptor_ladder = r_dlevel;
      } else if (!r_description.empty()) {
        throw UsageError("--description needs a descriptor modality");
      }
      cell.editor_ladder = r_elevel;
      cell.backend_id = r_backend;
      auto runner = s.runner();
      const auto result = runner.run_cell(cell, scenario);
      if (!result.ok()) throw BackendError(*result.error);
      scene::write_rgb_png(r_out, result.record->image);
      nlohmann::json prov = vlm::provenance_json(*result.record);
      prov["created_at"] = result.record->created_at;
      if (result.descriptor) prov["descriptor"] = vlm::to_json(*result.descriptor);
      if (result.report) prov["metrics"] = metrics::to_json(*result.report);
      fs::path side = r_out;
      side.replace_extension(".json");
      scene::write_json_file(side, prov);
      out << r_out << "\n";
      return int(kOk);
    };
  });

  // evaluate ---------------------------------------------------------------
  auto* ev = app.add_subcommand("evaluate", "score a candidate frame (PSNR, SSIM, MPJPE, OA)");
  std::string e_manifest, e_reference, e_candidate, e_ref_kp, e_cand_kp, e_ref_lab, e_cand_lab;
  ev->add_option("--candidate", e_candidate, "candidate RGB PNG")->required();
  ev->add_option("--manifest", e_manifest, "score against this manifest's delay-0 capture and annotations");
  ev->add_option("--reference", e_reference, "reference RGB PNG");
  ev->add_option("--reference-keypoints", e_ref_kp, "reference keypoint JSON");
  ev->add_option("--candidate-keypoints", e_cand_kp, "candidate keypoint JSON");
  ev->add_option("--reference-labels", e_ref_lab, "reference label-map PNG");
  ev->add_option("--candidate-labels", e_cand_lab, "candidate label-map PNG");
  ev->callback([&] {
    action = [&] {
      GlobalConfig cfg = resolve_globals(g);
      const auto candidate = scene::read_rgb_png(e_candidate);
      metrics::MetricReport report;
      if (!e_manifest.empty()) {
        if (!e_reference.empty()) throw UsageError("evaluate: give --manifest or --reference, not both");
        const auto scenario = experiments::load_scenario(scene::load_manifest(e_manifest), cfg.adapter);
        experiments::ScoreOptions so;
        so.min_conf = cfg.min_conf;
        report = experiments::score(scenario, candidate, so);
      } else {
        if (e_reference.empty()) throw UsageError("evaluate: --manifest or --reference is required");
        const auto reference = scene::read_rgb_png(e_reference);
        std::optional<double> mp, oa;
        if (e_ref_kp.empty() != e_cand_kp.empty()) throw UsageError("evaluate: keypoints need both files");
        if (e_ref_lab.empty() != e_cand_lab.empty()) throw UsageError("evaluate: label maps need both files");
        if (!e_ref_kp.empty()) {
          mp = metrics::mpjpe(metrics::read_keypoints(e_ref_kp), metrics::read_keypoints(e_cand_kp), cfg.min_conf);
        }
        if (!e_ref_lab.empty()) {
          oa = metrics::overall_accuracy(metrics::read_label_map(e_ref_lab), metrics::read_label_map(e_cand_lab));
        }
        report = metrics::make_report(metrics::psnr(reference, candidate), metrics::ssim(reference, candidate), mp, oa);
      }
      out << metrics::to_json(report).dump(2) << "\n";
      return int(kOk);
    };
  });

  // experiments ------------------------------------------------------------
  struct ExperimentFlags {
    std::vector<std::string> manifests;
    std::vector<std::string> backends;
    std::optional<double> delay;
    std::vector<double> delays;
    std::optional<std::string> out;
    std::optional<int> dlevel, elevel;
  };
  auto add_experiment_flags = [](CLI::App* sub, ExperimentFlags& f, bool multi_backend) {
    sub->add_option("--manifest", f.manifests, "manifest JSON (repeatable)");
    sub->add_option("--backend", f.backends, multi_backend ? "editor backend (repeatable)" : "editor backend");
    sub->add_option("--out", f.out, "report directory");
    sub->add_option("--descriptor-level", f.dlevel, "descriptor ladder level 1..4")->check(CLI::Range(1, 4));
    sub->add_option("--editor-level", f.elevel, "editor ladder level 1..4")->check(CLI::Range(1, 4));
  };
  auto ladders = [](const ExperimentFlags& f, const GlobalConfig& cfg) {
    experiments::LadderLevels l;
    l.descriptor = pick(f.dlevel, cfg, "descriptor_ladder", experiments::kDefaultLadderLevel);
    l.editor = pick(f.elevel, cfg, "editor_ladder", experiments::kDefaultLadderLevel);
    if (l.descriptor < 1 || l.descriptor > 4 || l.editor < 1 || l.editor > 4) {
      throw DataError("config.experiment: ladder levels must be in 1..4");
    }
    return l;
  };
  auto single_backend = [](const ExperimentFlags& f, const GlobalConfig& cfg) {
    if (f.backends.size() > 1) throw UsageError("--backend given more than once");
    if (!f.backends.empty()) return f.backends.front();
    auto list = pick(std::optional<std::vector<std::string>>{}, cfg, "backends", std::vector<std::string>{});
    if (list.empty()) throw UsageError("--backend is required");
    return list.front();
  };
  auto out_dir = [](const ExperimentFlags& f, const GlobalConfig& cfg) {
    return fs::path(pick(f.out, cfg, "output_dir", std::string("chronolens-out")));
  };

  ExperimentFlags ab;
  auto* abl = app.add_subcommand("ablate", "modality ablation: RGB / +thermal / +descriptor");
  add_experiment_flags(abl, ab, false);
  abl->add_option("--delay", ab.delay, "observation delay (seconds, default 30)");
  abl->callback([&] {
    action = [&] {
      GlobalConfig cfg = resolve_globals(g);
      Session s(cfg, load_manifests(pick_manifests(ab.manifests, cfg)));
      const std::string backend = single_backend(ab, s.cfg);
      s.backend(backend);
      auto runner = s.runner();
      const auto table = experiments::run_ablation(s.scenarios(), backend, pick(ab.delay, s.cfg, "delay_s", 30.0),
                                                   runner, ladders(ab, s.cfg));
      experiments::emit_all(table, out_dir(ab, s.cfg), "ablation", table.timings);
      out << experiments::render(table, experiments::ReportFormat::markdown);
      return experiment_exit(err, count_failed(table.cells));
    };
  });

  ExperimentFlags sw;
  auto* swp = app.add_subcommand("sweep", "temporal sweep over observation delays");
  add_experiment_flags(swp, sw, false);
  swp->add_option("--delays", sw.delays, "delays in seconds (default 5 15 30 120)");
  swp->callback([&] {
    action = [&] {
      GlobalConfig cfg = resolve_globals(g);
      Session s(cfg, load_manifests(pick_manifests(sw.manifests, cfg)));
      const std::string backend = single_backend(sw, s.cfg);
      s.backend(backend);
      std::vector<double> delays = sw.delays;
      if (delays.empty()) {
        delays = pick(std::optional<std::vector<double>>{}, s.cfg, "delays_s", std::vector<double>{5, 15, 30, 120});
      }
      auto runner = s.runner();
      const auto series = experiments::run_temporal_sweep(s.scenarios(), backend, delays, runner, ladders(sw, s.cfg));
      experiments::emit_all(series, out_dir(sw, s.cfg), "sweep", series.timings);
      out << experiments::render(series, experiments::ReportFormat::markdown);
      return experiment_exit(err, count_failed(series.cells));
    };
  });

  ExperimentFlags cg;
  auto* cmp = app.add_subcommand("compare-generators", "same pipeline, different editor backends");
  add_experiment_flags(cmp, cg, true);
  cmp->add_option("--delay", cg.delay, "observation delay (seconds, default 30)");
  cmp->callback([&] {
    action = [&] {
      GlobalConfig cfg = resolve_globals(g);
      Session s(cfg, load_manifests(pick_manifests(cg.manifests, cfg)));
      if (s.manifests.size() != 1) throw UsageError("compare-generators takes exactly one --manifest");
      std::vector<std::string> ids = cg.backends;
      if (ids.empty()) ids = pick(std::optional<std::vector<std::string>>{}, s.cfg, "backends", std::vector<std::string>{});
      if (ids.empty()) throw UsageError("--backend is required");
      for (const auto& id : ids) s.backend(id);
      auto runner = s.runner();
      const auto scenarios = s.scenarios();
      const auto matrix = experiments::run_generator_comparison(scenarios.front(), ids,
                                                                pick(cg.delay, s.cfg, "delay_s", 30.0), runner,
                                                                ladders(cg, s.cfg));
      experiments::emit_all(matrix, out_dir(cg, s.cfg), "comparison", matrix.timings);
      out << experiments::render(matrix, experiments::ReportFormat::markdown);
      return experiment_exit(err, count_failed(matrix.rows));
    };
  });

  ExperimentFlags pl;
  std::string pl_stage = "descriptor";
  std::string pl_description = experiments::kDefaultLadderDescription;
  auto* lad = app.add_subcommand("prompt-ladder", "run prompt ladder levels 1..4 for one stage");
  add_experiment_flags(lad, pl, false);
  lad->add_option("--stage", pl_stage, "descriptor or editor")->check(CLI::IsMember({"descriptor", "editor"}));
  lad->add_option("--delay", pl.delay, "observation delay (seconds, default 30)");
  lad->add_option("--description", pl_description, "fixed description for the editor stage");
  lad->callback([&] {
    action = [&] {
      GlobalConfig cfg = resolve_globals(g);
      Session s(cfg, load_manifests(pick_manifests(pl.manifests, cfg)));
      if (s.manifests.size() != 1) throw UsageError("prompt-ladder takes exactly one --manifest");
      const auto stage = vlm::stage_from_string(pl_stage);
      std::string backend;
      if (pl.backends.empty() && stage == vlm::Stage::descriptor) {
        backend = s.cfg.describer;
      } else {
        backend = single_backend(pl, s.cfg);
      }
      s.backend(backend);
      auto runner = s.runner();
      const auto scenarios = s.scenarios();
      const auto ladder = experiments::run_prompt_ladder(scenarios.front(), backend, stage,
                                                         pick(pl.delay, s.cfg, "delay_s", 30.0), runner,
                                                         pl_description);
      experiments::emit_all(ladder, out_dir(pl, s.cfg), "prompt_ladder_" + pl_stage, ladder.timings);
      out << experiments::render(ladder, experiments::ReportFormat::markdown);
      return experiment_exit(err, count_failed(ladder.levels));
    };
  });

  // report -----------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "re-render a results JSON as csv, markdown or plot-data");
  std::string rep_results, rep_format = "markdown", rep_out;
  rep->add_option("--results", rep_results, "<name>_results.json from an experiment run")->required();
  rep->add_option("--format", rep_format, "csv, markdown or plot-data");
  rep->add_option("--out", rep_out, "output file (default: standard output)");
  rep->callback([&] {
    action = [&] {
      resolve_globals(g);
      const auto fmt = experiments::report_format_from_string(rep_format);
      const auto src = experiments::report_source_from_json(scene::read_json_file(rep_results));
      if (rep_out.empty()) {
        if (experiments::is_empty(src)) throw UsageError("emit_report: no results to report");
        out << experiments::render(src, fmt);
      } else {
        experiments::emit_report(src, fmt, rep_out);
      }
      return int(kOk);
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    return action ? action() : int(kUsage);
  } catch (const UsageError& e) {
    err << "chronolens: usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const MalformedDescriptor& e) {
    err << "chronolens: backend error: " << e.what() << "\nraw response: " << e.raw_response() << "\n";
    return kBackend;
  } catch (const BackendError& e) {
    err << "chronolens: backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const DataError& e) {
    err << "chronolens: data error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "chronolens: data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "chronolens: error: " << e.what() << "\n";
    return kData;
  }
}

inline int run_command(int argc, char** argv) {
  return run_command(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace chronolens::cli
