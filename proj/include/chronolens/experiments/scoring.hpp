#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/metrics/image_quality.hpp"
#include "chronolens/metrics/pose.hpp"
#include "chronolens/metrics/report.hpp"
#include "chronolens/metrics/segmentation.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/sim/palette.hpp"

namespace chronolens::experiments {

namespace fs = std::filesystem;
using metrics::KeypointSet;
using metrics::LabelMap;
using scene::RgbFrame;

/// High-level annotations of one image. A keypoint set with no_detection
/// means the annotator ran and found no person.
struct Annotation {
  std::optional<KeypointSet> keypoints;
  std::optional<LabelMap> labels;
};

class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual Annotation annotate(const RgbFrame& image) = 0;
};

/// Exact annotator for flat-shaded synthetic scenes.
class PaletteAnnotator final : public Annotator {
 public:
  explicit PaletteAnnotator(sim::Palette palette) : palette_(std::move(palette)) {}

  Annotation annotate(const RgbFrame& image) override {
    Annotation a;
    a.labels = sim::segment_by_palette(image, palette_);
    a.keypoints = sim::keypoints_by_palette(*a.labels, palette_);
    if (!a.keypoints) {
      KeypointSet none;
      none.skeleton_id = palette_.keypoints.skeleton_id;
      none.no_detection = true;
      a.keypoints = std::move(none);
    }
    return a;
  }

 private:
  sim::Palette palette_;
};

/// Runs the pose/segmentation adapter executable:
///   <command> pose    --in <img> --out <dir> [--fixture]
///   <command> segment --in <img> --out <dir> [--fixture]
/// and reads <dir>/<stem>_keypoints.json, <dir>/<stem>_labels.png (+ .json).
class ExternalAnnotator final : public Annotator {
 public:
  ExternalAnnotator(std::string command, fs::path work_dir, bool fixture_mode = false)
      : command_(std::move(command)), work_dir_(std::move(work_dir)), fixture_(fixture_mode) {}

  Annotation annotate(const RgbFrame& image) override {
    const std::string stem = "img_" + std::to_string(counter_++) + "_" + std::to_string(image.width()) + "x" +
                             std::to_string(image.height());
    fs::create_directories(work_dir_);
    const fs::path in = work_dir_ / (stem + ".png");
    scene::write_rgb_png(in, image);
    Annotation a;
    run("pose", in);
    a.keypoints = metrics::read_keypoints(work_dir_ / (stem + "_keypoints.json"));
    run("segment", in);
    a.labels = metrics::read_label_map(work_dir_ / (stem + "_labels.png"));
    if (a.labels->width != image.width() || a.labels->height != image.height()) {
      throw DataError("adapter: label map dimensions differ from the input image");
    }
    return a;
  }

 private:
  static std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += (c == '\'') ? std::string("'\\''") : std::string(1, c);
    return q + "'";
  }

  void run(const char* verb, const fs::path& in) const {
    const std::string cmd = command_ + " " + verb + " --in " + quote(in.string()) + " --out " +
                            quote(work_dir_.string()) + (fixture_ ? " --fixture" : "");
    if (std::system(cmd.c_str()) != 0) throw DataError(std::string("adapter ") + verb + " failed: " + cmd);
  }

  std::string command_;
  fs::path work_dir_;
  bool fixture_;
  std::atomic<std::size_t> counter_{0};
};

/// A loaded scenario: captures, delay-0 annotations, and the annotator used
/// for candidate images. Without annotations MPJPE and OA are absent.
struct Scenario {
  scene::ScenarioManifest manifest;
  std::optional<KeypointSet> gt_keypoints;
  std::optional<LabelMap> gt_labels;
  std::shared_ptr<Annotator> annotator;

  const std::string& id() const { return manifest.scenario_id; }

  const scene::PairedCapture& observation(double delay_s) const {
    const auto* o = manifest.observation_at(delay_s);
    if (!o) {
      throw DataError("scenario '" + id() + "': no observation at delay " + scene::delay_tag(delay_s));
    }
    return *o;
  }
};

struct AdapterSettings {
  std::string command;
  fs::path work_dir;
  bool fixture_mode = false;
};

inline Scenario load_scenario(scene::ScenarioManifest manifest, const std::optional<AdapterSettings>& adapter = {}) {
  Scenario s;
  const auto& ann = manifest.annotations;
  if (ann.keypoints_path) s.gt_keypoints = metrics::read_keypoints(*ann.keypoints_path);
  if (ann.labels_path) {
    s.gt_labels = metrics::read_label_map(*ann.labels_path);
    const auto& gt = manifest.ground_truth.rgb;
    if (s.gt_labels->width != gt.width() || s.gt_labels->height != gt.height()) {
      throw DataError("scenario '" + manifest.scenario_id + "': label map does not match the ground-truth frame");
    }
  }
  if (adapter) {
    s.annotator = std::make_shared<ExternalAnnotator>(adapter->command, adapter->work_dir / manifest.scenario_id,
                                                      adapter->fixture_mode);
  } else if (ann.palette_path) {
    s.annotator = std::make_shared<PaletteAnnotator>(sim::palette_from_json(scene::read_json_file(*ann.palette_path)));
  }
  s.manifest = std::move(manifest);
  return s;
}

/// Per-joint error charged when the candidate shows no person: the image
/// diagonal, the largest displacement possible inside the frame.
inline double missing_person_penalty(const RgbFrame& f) {
  return std::hypot(static_cast<double>(f.width()), static_cast<double>(f.height()));
}

struct ScoreOptions {
  double min_conf = metrics::kDefaultMinConfidence;
  metrics::SsimParams ssim;
};

/// Scores a reconstruction against the scenario's delay-0 ground truth.
inline metrics::MetricReport score(const Scenario& s, const RgbFrame& candidate, const ScoreOptions& opt = {}) {
  const RgbFrame& gt = s.manifest.ground_truth.rgb;
  const double p = metrics::psnr(gt, candidate);
  const double q = metrics::ssim(gt, candidate, opt.ssim);
  std::optional<double> mpjpe_px;
  std::optional<double> oa;
  if (s.annotator && (s.gt_keypoints || s.gt_labels)) {
    const Annotation a = s.annotator->annotate(candidate);
    if (s.gt_keypoints && a.keypoints) {
      if (a.keypoints->no_detection || a.keypoints->joints.empty()) {
        mpjpe_px = missing_person_penalty(candidate);
      } else {
        mpjpe_px = metrics::mpjpe(*s.gt_keypoints, *a.keypoints, opt.min_conf);
      }
    }
    if (s.gt_labels && a.labels) oa = metrics::overall_accuracy(*s.gt_labels, *a.labels);
  }
  return metrics::make_report(p, q, mpjpe_px, oa);
}

}  // namespace chronolens::experiments
