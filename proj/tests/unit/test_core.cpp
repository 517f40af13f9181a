#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "chronolens/core/digest.hpp"
#include "chronolens/metrics/image_quality.hpp"
#include "chronolens/metrics/pose.hpp"
#include "chronolens/metrics/report.hpp"
#include "chronolens/metrics/segmentation.hpp"
#include "chronolens/scene/manifest.hpp"
#include "chronolens/scene/thermal_ops.hpp"
#include "chronolens/sim/physics.hpp"
#include "chronolens/sim/scenario.hpp"
#include "chronolens/sim/sensor.hpp"
#include "chronolens/traces/traces.hpp"
#include "chronolens/vlm/pipeline.hpp"
#include "chronolens/vlm/templates.hpp"
#include "support/test_support.hpp"

namespace {

using namespace chronolens;
namespace ct = chronolens::testing;
using scene::Rgb;
using scene::RgbFrame;
using scene::ThermalFrame;

ThermalFrame grid(int w, int h, std::vector<double> v) { return ThermalFrame(w, h, std::move(v)); }

// --- digest ----------------------------------------------------------------

TEST(Digest, Sha256KnownVector) {
  Sha256 h;
  h.update(std::string("abc"));
  EXPECT_EQ(h.hex(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Digest, Base64RoundTrip) {
  const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 255, 7};
  EXPECT_EQ(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}), "TWFu");
  EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
}

// --- frames and thermal ops -----------------------------------------------

TEST(Frames, ThermalRejectsImplausibleTemperature) {
  EXPECT_THROW(grid(1, 1, {200.0}), DataError);
  EXPECT_THROW(grid(1, 1, {NAN}), DataError);
  EXPECT_THROW(grid(2, 2, {1, 2, 3}), DataError);
}

TEST(ThermalOps, UpsampleTwoByTwoCenterColumns) {
  const auto out = scene::register_thermal(grid(2, 2, {20, 30, 20, 30}), 4, 4);
  ASSERT_EQ(out.width(), 4);
  for (int y = 0; y < 4; ++y) {
    EXPECT_NEAR(out.at(1, y), 25.0, 1e-9);
    EXPECT_NEAR(out.at(0, y), 20.0, 1e-9);
  }
}

TEST(ThermalOps, ConstantStaysConstantAndRangeNeverWidens) {
  const auto flat = scene::register_thermal(ThermalFrame::uniform(80, 60, 22.0), 1440, 1080);
  EXPECT_EQ(flat.width(), 1440);
  EXPECT_EQ(flat.height(), 1080);
  for (double t : flat.temps()) ASSERT_DOUBLE_EQ(t, 22.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(15, 40);
  std::vector<double> v(8 * 6);
  for (auto& x : v) x = u(rng);
  const auto src = grid(8, 6, v);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  for (const auto& a : {scene::AlignmentParams{}, scene::AlignmentParams::pixel_centers(8, 6, 33, 25),
                        scene::AlignmentParams{1.1, 0.9, -2.0, 3.0}}) {
    const auto out = scene::register_thermal(src, 33, 25, a);
    for (double t : out.temps()) {
      ASSERT_GE(t, *lo - 1e-12);
      ASSERT_LE(t, *hi + 1e-12);
    }
  }
}

TEST(ThermalOps, BilinearMatchesHandFormula) {
  // Oracle: bilinear weights evaluated by hand at one off-grid point.
  const auto src = grid(3, 2, {10, 20, 30, 40, 50, 60});
  scene::AlignmentParams a{1.0, 1.0, 0.25, 0.5};
  const auto out = scene::register_thermal(src, 3, 2, a);
  // Target (0,0) samples source (0.25, 0.5).
  const double want = 0.5 * (0.75 * 10 + 0.25 * 20) + 0.5 * (0.75 * 40 + 0.25 * 50);
  EXPECT_NEAR(out.at(0, 0), want, 1e-12);
}

TEST(ThermalOps, RegistrationErrors) {
  EXPECT_THROW(scene::register_thermal(ThermalFrame::uniform(4, 4, 22), 2, 2), UsageError);
  EXPECT_THROW(scene::register_thermal(ThermalFrame::uniform(4, 4, 22), 8, 8, {0.0, 1.0, 0, 0}), UsageError);
}

TEST(ThermalOps, Normalize) {
  const auto n = scene::normalize_thermal(grid(3, 1, {22.0, 37.0, 29.5}), 22.0);
  EXPECT_DOUBLE_EQ(n.values[0], 0.0);
  EXPECT_DOUBLE_EQ(n.values[1], 1.0);
  EXPECT_DOUBLE_EQ(n.values[2], 0.5);
  EXPECT_THROW(scene::normalize_thermal(grid(1, 1, {22}), 40.0), UsageError);
}

TEST(ThermalOps, PseudocolorRampIsMonotone) {
  const auto rgb = scene::thermal_to_pseudocolor({3, 1, {0.0, 0.5, 1.0}});
  const auto a = rgb.at(0, 0), b = rgb.at(1, 0), c = rgb.at(2, 0);
  EXPECT_EQ(a, (Rgb{0, 0, 0}));
  EXPECT_EQ(c, (Rgb{255, 255, 255}));
  EXPECT_LT(scene::luminance_bt601(a), scene::luminance_bt601(b));
  EXPECT_LT(scene::luminance_bt601(b), scene::luminance_bt601(c));
  const auto& lut = scene::pseudocolor_lut();
  for (std::size_t i = 1; i < lut.size(); ++i) {
    ASSERT_LT(scene::luminance_bt601(lut[i - 1]), scene::luminance_bt601(lut[i])) << i;
  }
  EXPECT_THROW(scene::thermal_to_pseudocolor({1, 1, {1.5}}), UsageError);
}

// --- metrics ---------------------------------------------------------------

TEST(Metrics, PsnrAnchors) {
  const RgbFrame a(4, 4, Rgb{10, 20, 30});
  EXPECT_TRUE(std::isinf(metrics::psnr(a, a)));
  EXPECT_EQ(metrics::psnr(RgbFrame(3, 3, Rgb{0, 0, 0}), RgbFrame(3, 3, Rgb{255, 255, 255})), 0.0);
  // One channel of one pixel off by 255 in a 1x1 image: MSE = 255^2/3.
  EXPECT_NEAR(metrics::psnr(RgbFrame(1, 1, Rgb{0, 0, 0}), RgbFrame(1, 1, Rgb{255, 0, 0})), 4.771212547196624, 1e-12);
  EXPECT_THROW(metrics::psnr(RgbFrame(2, 2), RgbFrame(2, 3)), UsageError);
}

TEST(Metrics, SsimCases) {
  const RgbFrame gray(16, 16, Rgb{100, 100, 100}), brighter(16, 16, Rgb{150, 150, 150});
  const double s = metrics::ssim(gray, brighter);
  EXPECT_LT(s, 1.0);
  // Constant images: only the luminance term remains, (2*100*150 + C1) / (100^2 + 150^2 + C1).
  const double c1 = (0.01 * 255) * (0.01 * 255);
  EXPECT_NEAR(s, (2.0 * 100 * 150 + c1) / (100.0 * 100 + 150.0 * 150 + c1), 1e-9);

  std::mt19937_64 rng(11);
  const auto a = ct::random_frame(rng, 20, 20);
  RgbFrame inv = a;
  for (auto& p : inv.bytes()) p = static_cast<std::uint8_t>(255 - p);
  EXPECT_LT(metrics::ssim(a, inv), 0.5);
  EXPECT_EQ(metrics::ssim(a, a), 1.0);
  EXPECT_THROW(metrics::ssim(RgbFrame(8, 8), RgbFrame(8, 8)), UsageError);
}

metrics::KeypointSet kps(std::vector<metrics::Joint> j) { return {"coco17", std::move(j), false}; }

TEST(Metrics, Mpjpe) {
  EXPECT_EQ(metrics::mpjpe(kps({{"a", 1, 1, 1}}), kps({{"a", 1, 1, 1}})), 0.0);
  EXPECT_EQ(metrics::mpjpe(kps({{"a", 0, 0, 1}, {"b", 5, 5, 1}}), kps({{"b", 5, 8, 1}, {"a", 0, 1, 1}})), 2.0);
  // Low-confidence joints drop out.
  EXPECT_EQ(metrics::mpjpe(kps({{"a", 0, 0, 1}, {"b", 0, 0, 0.1}}), kps({{"a", 3, 4, 1}, {"b", 90, 0, 1}})), 5.0);
  EXPECT_THROW(metrics::mpjpe(kps({{"a", 0, 0, 0.1}}), kps({{"a", 0, 0, 1}})), UsageError);
  EXPECT_THROW(metrics::mpjpe(kps({{"a", 0, 0, 1}}), kps({{"b", 0, 0, 1}})), UsageError);
  auto other = kps({{"a", 0, 0, 1}});
  other.skeleton_id = "mpii";
  EXPECT_THROW(metrics::mpjpe(kps({{"a", 0, 0, 1}}), other), UsageError);
}

TEST(Metrics, OverallAccuracyMatchesCount) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> c(0, 2);
  metrics::LabelMap a{16, 16, {}, {{0, "background"}, {1, "person"}, {2, "chair"}}}, b = a;
  int same = 0;
  for (int i = 0; i < 256; ++i) {
    a.labels.push_back(static_cast<std::uint8_t>(c(rng)));
    b.labels.push_back(static_cast<std::uint8_t>(c(rng)));
    same += a.labels.back() == b.labels.back();
  }
  EXPECT_NEAR(metrics::overall_accuracy(a, b), 100.0 * same / 256.0, 1e-12);
  EXPECT_EQ(metrics::overall_accuracy(a, a), 100.0);
}

TEST(Metrics, AggregateTwoPoints) {
  const auto r = metrics::aggregate({metrics::make_report(17.0, 0.5, {}, {}), metrics::make_report(19.0, 0.7, {}, {})});
  EXPECT_DOUBLE_EQ(r.psnr_db->mean, 18.0);
  EXPECT_NEAR(*r.psnr_db->std, std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(r.mpjpe_px.has_value());
  const auto one = metrics::aggregate({metrics::make_report(17.0, 0.5, {}, {})});
  EXPECT_DOUBLE_EQ(one.psnr_db->mean, 17.0);
  EXPECT_FALSE(one.psnr_db->std.has_value());
}

TEST(Metrics, AggregateExcludesInfinitePsnr) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto r = metrics::aggregate({metrics::make_report(inf, 1.0, {}, {}), metrics::make_report(20.0, 0.9, {}, {})});
  EXPECT_DOUBLE_EQ(r.psnr_db->mean, 20.0);
  EXPECT_EQ(r.psnr_db->count, 1u);
  EXPECT_EQ(r.psnr_db->excluded_infinite, 1u);
  EXPECT_THROW(metrics::aggregate({metrics::make_report(1.0, 1.0, 2.0, {}), metrics::make_report(1.0, 1.0, {}, {})}),
               UsageError);
}

TEST(Metrics, KeypointAndLabelFilesRoundTrip) {
  ct::TempDir dir("metrics_io");
  const auto k = kps({{"nose", 1.5, 2.5, 0.9}});
  metrics::write_keypoints(dir.path() / "k.json", k);
  EXPECT_EQ(metrics::read_keypoints(dir.path() / "k.json"), k);
  metrics::LabelMap m{3, 2, {0, 1, 1, 0, 2, 2}, {{0, "background"}, {1, "person"}, {2, "book"}}};
  metrics::write_label_map(dir.path() / "l.png", m);
  EXPECT_EQ(metrics::read_label_map(dir.path() / "l.png"), m);
}

TEST(Metrics, BundledAdapterFixturesValidate) {
  const auto k = metrics::read_keypoints(ct::fixture_dir() / "adapters" / "sit_pose_keypoints.json");
  EXPECT_EQ(k.skeleton_id, "coco17");
  EXPECT_EQ(k.joints.size(), 17u);
  const auto l = metrics::read_label_map(ct::fixture_dir() / "adapters" / "sit_pose_labels.png");
  EXPECT_NO_THROW(l.validate());
  EXPECT_EQ(l.class_names.at(1), "person");
  EXPECT_EQ(metrics::mpjpe(k, k), 0.0);
  EXPECT_EQ(metrics::overall_accuracy(l, l), 100.0);
}

// --- physics and sensor -----------------------------------------------------

TEST(Physics, DepositionAndCooling) {
  const sim::Material m{"m", 60.0, 20.0, 0.8};
  EXPECT_DOUBLE_EQ(sim::heat_deposition(m, 22, 37, 0), 22.0);
  EXPECT_NEAR(sim::heat_deposition(sim::Material{"full", 60, 20, 1.0}, 22, 37, 1e6), 37.0, 1e-9);
  EXPECT_NEAR(sim::heat_deposition(m, 22, 37, 30), 31.323, 1e-3);
  EXPECT_DOUBLE_EQ(sim::cooled_temperature(30, 22, m, 0), 30.0);
  EXPECT_NEAR(sim::cooled_temperature(30, 22, m, 60), 24.943, 1e-3);
  EXPECT_THROW(sim::cooled_temperature(30, 22, m, -1), UsageError);
  EXPECT_THROW(sim::Material({"bad", 0, 1, 0.5}).validate(), DataError);
}

TEST(Physics, SurfaceTemperatureTwoContacts) {
  // Oracle: chain the closed forms by hand.
  const sim::Material m{"m", 90.0, 20.0, 0.8};
  const std::vector<sim::ContactInterval> c{{-60, -40, 37}, {-20, 0, 37}};
  double t = sim::heat_deposition(m, 22, 37, 20);
  t = sim::cooled_temperature(t, 22, m, 20);
  const double target = 22 + 0.8 * 15;
  t = target + (t - target) * std::exp(-20.0 / 20.0);
  t = sim::cooled_temperature(t, 22, m, 10);
  EXPECT_NEAR(sim::surface_temperature_at(10, 22, m, c), t, 1e-12);
  EXPECT_DOUBLE_EQ(sim::surface_temperature_at(-70, 22, m, c), 22.0);
}

TEST(Sensor, AreaAveragingAndDeterminism) {
  sim::TemperatureGrid g{160, 120, std::vector<double>(160 * 120, 22.0)};
  for (int y = 40; y < 42; ++y)
    for (int x = 60; x < 62; ++x) g.temps[y * 160 + x] = 30.0;
  sim::SensorModel s{80, 60, 0.0, 0.0, 1};
  const auto out = sim::render_thermal_sensor(g, s, 0.0);
  int hot = 0;
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 80; ++x) {
      if (x == 30 && y == 20) {
        EXPECT_DOUBLE_EQ(out.at(x, y), 30.0);
        ++hot;
      } else {
        ASSERT_DOUBLE_EQ(out.at(x, y), 22.0);
      }
    }
  EXPECT_EQ(hot, 1);
  sim::SensorModel noisy{80, 60, 0.3, 0.1, 42};
  EXPECT_EQ(sim::render_thermal_sensor(g, noisy, 0.0), sim::render_thermal_sensor(g, noisy, 0.0));
  sim::TemperatureGrid flat{80, 60, std::vector<double>(80 * 60, 22.0)};
  for (double t : sim::render_thermal_sensor(flat, s, 0.0).temps()) ASSERT_DOUBLE_EQ(t, 22.0);
}

TEST(Simulator, ProtocolShape) {
  const auto cfg = sim::preset_config(scene::ScenarioKind::sit_chair);
  const auto r = sim::generate_scenario_sequence(cfg);
  EXPECT_EQ(r.manifest.observations.size(), 4u);
  EXPECT_EQ(r.manifest.delays(), (std::vector<double>{5, 15, 30, 120}));
  ASSERT_TRUE(r.gt_keypoints.has_value());
  EXPECT_EQ(r.gt_keypoints->joints.size(), 17u);
  // The person is rendered only at delay 0.
  const auto person = [](const RgbFrame& f) {
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        if (f.at(x, y) == sim::kShirtColor) return true;
    return false;
  };
  EXPECT_TRUE(person(r.manifest.ground_truth.rgb));
  for (const auto& o : r.manifest.observations) EXPECT_FALSE(person(o.rgb)) << o.delay_s;
}

TEST(Simulator, NoEventsMeansAmbient) {
  auto cfg = sim::preset_config(scene::ScenarioKind::lean_wall);
  cfg.events.clear();
  cfg.sensor.noise_sigma_c = 0.0;
  const auto r = sim::generate_scenario_sequence(cfg);
  for (const auto& o : r.manifest.observations)
    for (double t : o.thermal.temps()) ASSERT_DOUBLE_EQ(t, 22.0);
}

TEST(Simulator, PerMaterialRatioMatchesClosedForm) {
  // Seat (upholstered chair) and book touched for 30 s; ratio of dT at 5 s.
  auto cfg = sim::preset_config(scene::ScenarioKind::sit_chair);
  const auto& mats = sim::default_materials();
  nlohmann::json j = sim::preset_config_json(scene::ScenarioKind::sit_chair);
  j["events"] = nlohmann::json::array({{{"rects", {{120, 132, 80, 20}}}, {"t_start_s", -30}, {"t_end_s", 0}},
                                       {{"rects", {{252, 108, 28, 12}}}, {"t_start_s", -30}, {"t_end_s", 0}}});
  cfg = sim::sim_config_from_json(j);
  const auto r = sim::generate_scenario_sequence(cfg);
  const auto& temps = r.scene_temps[1];  // delay 5
  auto dt = [&](const sim::Material& m) {
    return sim::cooled_temperature(sim::heat_deposition(m, 22, 37, 30), 22, m, 5) - 22;
  };
  const double ratio = (temps.at(260, 112) - 22) / (temps.at(150, 140) - 22);
  EXPECT_NEAR(ratio, dt(mats.at("book_cover")) / dt(mats.at("upholstered_chair")), 1e-9);
}

TEST(Simulator, ConfigErrors) {
  auto j = sim::preset_config_json(scene::ScenarioKind::touch_object);
  j["events"][0]["rects"] = {{400, 0, 10, 10}};
  EXPECT_THROW(sim::sim_config_from_json(j), DataError);
  auto d = sim::preset_config_json(scene::ScenarioKind::touch_object);
  d["delays_s"] = {5, 30};
  EXPECT_THROW(sim::generate_scenario_sequence(sim::sim_config_from_json(d)), DataError);
}

// --- traces ------------------------------------------------------------------

TEST(Traces, AmbientIsMedian) {
  EXPECT_DOUBLE_EQ(traces::estimate_ambient(ThermalFrame::uniform(5, 5, 22.0)), 22.0);
  std::vector<double> v(100, 22.0);
  for (int i = 0; i < 5; ++i) v[i * 7] = 30.0;
  EXPECT_DOUBLE_EQ(traces::estimate_ambient(grid(10, 10, v)), 22.0);
  EXPECT_DOUBLE_EQ(traces::estimate_ambient(grid(2, 2, {20, 24, 24, 20})), 22.0);
}

TEST(Traces, DetectBlocks) {
  EXPECT_TRUE(traces::detect_traces(ThermalFrame::uniform(8, 8, 22), 22, 0.5).regions.empty());
  std::vector<double> v(20 * 10, 22.0);
  for (int y = 2; y < 7; ++y)
    for (int x = 2; x < 7; ++x) v[y * 20 + x] = 28.0;
  for (int y = 2; y < 5; ++y)
    for (int x = 12; x < 15; ++x) v[y * 20 + x] = 24.0;
  const auto inv = traces::detect_traces(grid(20, 10, v), 22.0, 0.5);
  ASSERT_EQ(inv.regions.size(), 2u);
  EXPECT_EQ(inv.regions[0].area_px, 25u);
  EXPECT_DOUBLE_EQ(inv.regions[0].peak_dt_c, 6.0);
  EXPECT_EQ(inv.regions[0].grade, traces::Grade::strong);
  EXPECT_EQ(inv.regions[0].bbox, (scene::Rect{2, 2, 5, 5}));
  EXPECT_DOUBLE_EQ(inv.regions[1].peak_dt_c, 2.0);
  EXPECT_EQ(inv.regions[1].grade, traces::Grade::moderate);
  EXPECT_THROW(traces::detect_traces(grid(1, 1, {22}), 22, 0.0), UsageError);
}

TEST(Traces, DiagonalNeighborsJoin) {
  const auto inv = traces::detect_traces(grid(3, 3, {30, 22, 22, 22, 30, 22, 22, 22, 30}), 22, 1.0, {1, {}});
  ASSERT_EQ(inv.regions.size(), 1u);
  EXPECT_EQ(inv.regions[0].area_px, 3u);
}

TEST(Traces, Grades) {
  EXPECT_EQ(traces::grade_trace(6.0), traces::Grade::strong);
  EXPECT_EQ(traces::grade_trace(4.0), traces::Grade::strong);
  EXPECT_EQ(traces::grade_trace(1.5), traces::Grade::moderate);
  EXPECT_EQ(traces::grade_trace(0.5), traces::Grade::faint);
  EXPECT_THROW(traces::grade_trace(0.2), UsageError);
}

TEST(Traces, Summary) {
  EXPECT_EQ(traces::inventory_summary({}), std::vector<std::string>{"no thermographic traces detected"});
  std::vector<double> v(30 * 10, 22.0);
  for (int y = 3; y < 7; ++y)
    for (int x = 12; x < 18; ++x) v[y * 30 + x] = 29.0;
  auto inv = traces::detect_traces(grid(30, 10, v), 22.0, 1.0);
  metrics::LabelMap labels{30, 10, std::vector<std::uint8_t>(300, 0),
                           {{0, "background"}, {1, "person"}, {2, "chair_seat"}, {3, "wall"}}};
  for (int y = 2; y < 8; ++y)
    for (int x = 11; x < 19; ++x) labels.labels[y * 30 + x] = 2;
  labels.labels[0] = 3;
  const auto lines = traces::inventory_summary(inv, labels);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].rfind("chair_seat: strong trace, center", 0), 0u) << lines[0];
  EXPECT_EQ(lines[1], "no heat: wall");
}

TEST(Traces, SweepSideChannelDecreases) {
  const auto r = sim::generate_scenario_sequence(sim::preset_config(scene::ScenarioKind::sit_chair));
  double prev = 1e9;
  for (const auto& o : r.manifest.observations) {
    const double dt = traces::mean_trace_dt(o.thermal);
    EXPECT_LT(dt, prev) << o.delay_s;
    prev = dt;
  }
}

// --- manifest ---------------------------------------------------------------

TEST(Manifest, RoundTripAndSorting) {
  ct::TempDir dir("manifest");
  auto res = sim::generate_scenario_sequence(sim::preset_config(scene::ScenarioKind::touch_object));
  const auto path = sim::write_simulation(res, dir.path());
  const auto m = scene::load_manifest(path);
  EXPECT_EQ(m.delays(), (std::vector<double>{5, 15, 30, 120}));
  EXPECT_EQ(m.ground_truth.rgb, res.manifest.ground_truth.rgb);
  for (std::size_t i = 0; i < m.observations.size(); ++i) {
    const auto a = m.observations[i].thermal.temps(), b = res.manifest.observations[i].thermal.temps();
    for (std::size_t k = 0; k < a.size(); ++k) ASSERT_NEAR(a[k], b[k], 0.006);
  }

  auto doc = scene::read_json_file(path);
  std::reverse(doc["entries"].begin(), doc["entries"].end());
  scene::write_json_file(path, doc);
  EXPECT_EQ(scene::load_manifest(path).delays(), (std::vector<double>{5, 15, 30, 120}));
}

TEST(Manifest, Errors) {
  ct::TempDir dir("manifest_err");
  auto res = sim::generate_scenario_sequence(sim::preset_config(scene::ScenarioKind::touch_object));
  const auto path = sim::write_simulation(res, dir.path());
  const auto doc = scene::read_json_file(path);

  auto gt3 = doc;
  for (auto& e : gt3["entries"])
    if (e["delay_s"] == 0) e["delay_s"] = 3;
  scene::write_json_file(path, gt3);
  try {
    scene::load_manifest(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ground truth must be delay 0"), std::string::npos) << e.what();
  }

  auto missing = doc;
  missing["entries"][1]["rgb_path"] = "nope.png";
  scene::write_json_file(path, missing);
  EXPECT_THROW(scene::load_manifest(path), DataError);
  EXPECT_THROW(scene::load_manifest(dir.path() / "absent.json"), DataError);
}

// --- prompt templates ---------------------------------------------------------

std::string fixture(const std::string& id) { return ct::slurp(ct::fixture_dir() / "prompts" / (id + ".txt")); }

TEST(Templates, EveryBuiltinMatchesItsFixture) {
  for (const auto& t : vlm::builtin_templates()) {
    const std::string got = t.stage == vlm::Stage::descriptor
                                ? vlm::render_descriptor_prompt(t, 20.0)
                                : vlm::render_edit_prompt(t, t.references("description")
                                                                 ? std::optional<std::string>(
                                                                       "the person was sitting and holding the book")
                                                                 : std::nullopt);
    EXPECT_EQ(got, fixture(t.id)) << t.id;
  }
}

TEST(Templates, LadderPhrases) {
  EXPECT_NE(vlm::render_descriptor_prompt(vlm::ladder_template(vlm::Stage::descriptor, 1), 20)
                .find("position and action 20 seconds ago"),
            std::string::npos);
  EXPECT_NE(vlm::render_descriptor_prompt(vlm::ladder_template(vlm::Stage::descriptor, 2), 45)
                .find("list all objects or furniture that show any heat traces"),
            std::string::npos);
  EXPECT_NE(vlm::render_descriptor_prompt(vlm::ladder_template(vlm::Stage::descriptor, 4), 45)
                .find("double-check that no object with visible heat traces has been left out"),
            std::string::npos);
  EXPECT_THROW(vlm::ladder_template(vlm::Stage::editor, 5), UsageError);
}

TEST(Templates, EditRendering) {
  const auto p = vlm::render_edit_prompt(vlm::find_template("p_gen"), std::string("the person sat"));
  EXPECT_NE(p.find("the person sat"), std::string::npos);
  const auto thermal_only = vlm::render_edit_prompt(vlm::find_template("p_gen_thermal"), std::nullopt);
  EXPECT_NE(thermal_only.find("thermal image"), std::string::npos);
  EXPECT_EQ(thermal_only.find('{'), std::string::npos);
  EXPECT_THROW(vlm::render_edit_prompt(vlm::find_template("p_gen"), std::nullopt), UsageError);
  EXPECT_THROW(vlm::render_edit_prompt(vlm::find_template("p_gen_rgb"), std::string("x")), UsageError);
  EXPECT_THROW(vlm::find_template("p_nope"), UsageError);
}

TEST(Templates, SubstitutionDoesNotRescan) {
  EXPECT_EQ(vlm::substitute("a {x} b", {{"x", "{x}"}}), "a {x} b");
  EXPECT_THROW(vlm::substitute("{missing}", {}), UsageError);
  EXPECT_EQ(vlm::substitute("{Not} {}", {}), "{Not} {}");
}

TEST(Templates, EvidenceSuffixAppended) {
  const auto& t = vlm::find_template("p_desc4");
  const auto p = vlm::render_descriptor_prompt(t, 30, std::string("chair_seat: strong trace, center"));
  EXPECT_EQ(p.rfind(vlm::render_descriptor_prompt(t, 30), 0), 0u);
  EXPECT_NE(p.find("chair_seat: strong trace, center"), std::string::npos);
}

// --- descriptor validation ----------------------------------------------------

TEST(Descriptor, SingleSentenceRule) {
  EXPECT_EQ(vlm::validate_descriptor("The person was sitting on the chair."), "The person was sitting on the chair.");
  EXPECT_EQ(vlm::validate_descriptor("  \"The person sat.\"  \n"), "\"The person sat.\"");
  EXPECT_EQ(vlm::validate_descriptor("The person sat at 3.5 m from the wall."),
            "The person sat at 3.5 m from the wall.");
  EXPECT_THROW(vlm::validate_descriptor(""), MalformedDescriptor);
  EXPECT_THROW(vlm::validate_descriptor("The person sat"), MalformedDescriptor);
  EXPECT_THROW(vlm::validate_descriptor("Step 1: look. The person sat."), MalformedDescriptor);
  EXPECT_THROW(vlm::validate_descriptor("One. Two. Three."), MalformedDescriptor);
  EXPECT_THROW(vlm::validate_descriptor("Analysis\nThe person sat."), MalformedDescriptor);
  try {
    vlm::validate_descriptor("A. B.");
  } catch (const MalformedDescriptor& e) {
    EXPECT_EQ(e.raw_response(), "A. B.");
  }
}

TEST(Descriptor, PastTenseAdvisory) {
  EXPECT_TRUE(vlm::looks_past_tense("The person was sitting and holding the book."));
  EXPECT_TRUE(vlm::looks_past_tense("The person leaned against the wall."));
  EXPECT_FALSE(vlm::looks_past_tense("The person is sitting."));
}

}  // namespace
