#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "chronolens/cli/app.hpp"
#include "chronolens/core/concurrency.hpp"
#include "chronolens/experiments/experiments.hpp"
#include "chronolens/experiments/report.hpp"
#include "chronolens/vlm/cache.hpp"
#include "chronolens/vlm/http_backend.hpp"
#include "chronolens/vlm/mock_backend.hpp"
#include "chronolens/vlm/pipeline.hpp"
#include "support/test_support.hpp"

namespace {

using namespace chronolens;
namespace ct = chronolens::testing;
namespace fs = std::filesystem;
using scene::Rgb;
using scene::RgbFrame;
using vlm::Capability;

/// Simulated presets shared by every test in this binary. Read-only.
class Presets : public ::testing::Environment {
 public:
  static const std::vector<experiments::Scenario>& get() {
    static ct::TempDir dir("pipeline_presets");
    static const auto s = ct::simulate_presets(dir.path());
    return s;
  }
  static fs::path manifest(const std::string& id) {
    return fs::path(*get().front().manifest.annotations.palette_path).parent_path() / (id + ".manifest.json");
  }
};

std::shared_ptr<vlm::MockBackend> mock(const std::string& id, vlm::MockConfig cfg = {},
                                       std::set<Capability> caps = {Capability::describe, Capability::edit}) {
  return std::make_shared<vlm::MockBackend>(vlm::BackendDescriptor{id, caps, "mock:" + id}, std::move(cfg));
}

vlm::Pipeline make_pipeline(std::optional<fs::path> dir = std::nullopt) {
  return vlm::Pipeline(std::make_shared<vlm::ResponseCache>(dir), vlm::RetryPolicy::no_wait());
}

const scene::PairedCapture& capture30() { return Presets::get().front().observation(30.0); }

// --- concurrency ---------------------------------------------------------------

TEST(Concurrency, ParallelForVisitsEveryIndexAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  chronolens::parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(chronolens::parallel_for(10, 3,
                                        [](std::size_t i) {
                                          if (i == 7) throw DataError("boom");
                                        }),
               DataError);
}

TEST(Concurrency, SemaphoreBoundsInFlight) {
  chronolens::Semaphore sem(2);
  std::atomic<int> now{0}, peak{0};
  chronolens::parallel_for(16, 8, [&](std::size_t) {
    chronolens::SemaphoreGuard g(sem);
    const int n = ++now;
    int p = peak.load();
    while (n > p && !peak.compare_exchange_weak(p, n)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    --now;
  });
  EXPECT_LE(peak.load(), 2);
}

// --- cache -----------------------------------------------------------------------

TEST(Cache, HitsMissesAndDiskLayout) {
  ct::TempDir dir("cache");
  vlm::ResponseCache cache(dir.path());
  int produced = 0;
  auto make = [&] {
    ++produced;
    vlm::CacheEntry e;
    e.text = "The person sat.";
    e.meta = {{"stage", "describe"}};
    return e;
  };
  EXPECT_FALSE(cache.text("b1", "abc", make).from_cache);
  EXPECT_TRUE(cache.text("b1", "abc", make).from_cache);
  EXPECT_FALSE(cache.text("b2", "abc", make).from_cache);
  EXPECT_EQ(produced, 2);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(cache.misses(), 2u);
  EXPECT_TRUE(fs::exists(dir.path() / "b1" / "abc.txt"));
  EXPECT_TRUE(fs::exists(dir.path() / "b1" / "abc.json"));

  // A second process sees the entry on disk.
  vlm::ResponseCache again(dir.path());
  const auto l = again.text("b1", "abc", make);
  EXPECT_TRUE(l.from_cache);
  EXPECT_EQ(l.entry.text, "The person sat.");
  EXPECT_EQ(produced, 2);
}

TEST(Cache, ConcurrentIdenticalRequestsShareOneCall) {
  vlm::ResponseCache cache;
  std::atomic<int> produced{0};
  chronolens::parallel_for(8, 8, [&](std::size_t) {
    cache.image("b", "same", [&] {
      ++produced;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      vlm::CacheEntry e;
      e.image = RgbFrame(2, 2, Rgb{1, 2, 3});
      return e;
    });
  });
  EXPECT_EQ(produced.load(), 1);
  EXPECT_EQ(cache.misses(), 1u);
  EXPECT_EQ(cache.hits(), 7u);
}

TEST(Cache, FailedProducerIsNotCached) {
  vlm::ResponseCache cache;
  EXPECT_THROW(cache.text("b", "k", []() -> vlm::CacheEntry { throw TransportError("down"); }), TransportError);
  const auto l = cache.text("b", "k", [] {
    vlm::CacheEntry e;
    e.text = "ok.";
    return e;
  });
  EXPECT_FALSE(l.from_cache);
}

// --- descriptor and editor stages -------------------------------------------------

TEST(Pipeline, DescribeUsesFixtureAndCaches) {
  auto pipeline = make_pipeline();
  vlm::MockConfig cfg;
  cfg.describe_response = "The person was leaning on the wall.";
  auto b = mock("echo", cfg);
  const auto& t = vlm::find_template("p_desc4");
  const auto first = pipeline.describe_scene(capture30(), t, *b);
  EXPECT_EQ(first.sentence, "The person was leaning on the wall.");
  EXPECT_FALSE(first.from_cache);
  EXPECT_TRUE(first.past_tense_advisory);
  const auto second = pipeline.describe_scene(capture30(), t, *b);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.latency_ms, 0.0);
  EXPECT_EQ(b->describe_calls(), 1);
  EXPECT_EQ(second.inputs_hash, first.inputs_hash);
  // Different evidence text is a different request.
  const auto third = pipeline.describe_scene(capture30(), t, *b, std::string("chair_seat: strong trace, center"));
  EXPECT_NE(third.inputs_hash, first.inputs_hash);
  EXPECT_EQ(b->describe_calls(), 2);
}

TEST(Pipeline, MultiSentenceIsMalformedAfterRetries) {
  auto pipeline = make_pipeline();
  vlm::MockConfig cfg;
  cfg.describe_response = "Step 1: heat on seat. Step 2: heat on back. The person sat.";
  auto b = mock("chatty", cfg);
  try {
    pipeline.describe_scene(capture30(), vlm::find_template("p_desc4"), *b);
    FAIL() << "expected MalformedDescriptor";
  } catch (const MalformedDescriptor& e) {
    EXPECT_EQ(e.raw_response(), cfg.describe_response);
  }
  EXPECT_EQ(b->describe_calls(), 3);
}

TEST(Pipeline, RetryBacksOffThenSucceeds) {
  std::vector<double> slept;
  vlm::RetryPolicy retry;
  retry.sleep = [&](double s) { slept.push_back(s); };
  vlm::Pipeline pipeline(std::make_shared<vlm::ResponseCache>(), retry);
  vlm::MockConfig cfg;
  cfg.transient_failures = 2;
  auto b = mock("flaky", cfg);
  EXPECT_NO_THROW(pipeline.describe_scene(capture30(), vlm::find_template("p_desc4"), *b));
  EXPECT_EQ(slept, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(b->describe_calls(), 3);
}

TEST(Pipeline, OutageSurfacesTransportError) {
  auto pipeline = make_pipeline();
  vlm::MockConfig cfg;
  cfg.always_fail = true;
  auto b = mock("down", cfg);
  vlm::EditRequest req;
  req.rgb = capture30().rgb;
  req.tmpl = vlm::find_template("p_gen_rgb");
  EXPECT_THROW(pipeline.reconstruct_past(req, *b), TransportError);
  EXPECT_EQ(b->edit_calls(), 3);
}

TEST(Pipeline, CapabilityIsChecked) {
  auto pipeline = make_pipeline();
  auto describer_only = mock("desc-only", {}, {Capability::describe});
  vlm::EditRequest req;
  req.rgb = capture30().rgb;
  req.tmpl = vlm::find_template("p_gen_rgb");
  EXPECT_THROW(pipeline.reconstruct_past(req, *describer_only), BackendContractViolation);
  EXPECT_EQ(describer_only->edit_calls(), 0);
}

TEST(Pipeline, IdentityAndGroundTruthEdits) {
  auto pipeline = make_pipeline();
  const auto& s = Presets::get().front();
  vlm::MockConfig gt;
  gt.edit_mode = vlm::MockEditMode::ground_truth;
  gt.edit_fixtures = vlm::ground_truth_fixtures({s.manifest});
  auto gt_backend = mock("gt", gt);
  auto id_backend = mock("id");
  vlm::EditRequest req;
  req.rgb = capture30().rgb;
  req.thermal_pseudocolor = vlm::prepare_thermal_image(capture30());
  req.tmpl = vlm::find_template("p_gen_thermal");
  req.target_delay_s = 30;
  const auto a = pipeline.reconstruct_past(req, *gt_backend);
  EXPECT_EQ(a.image, s.manifest.ground_truth.rgb);
  EXPECT_DOUBLE_EQ(a.image.capture_time_s(), 0.0);
  EXPECT_EQ(a.editor_template_id, "p_gen_thermal");
  EXPECT_FALSE(a.descriptor_template_id.has_value());
  const auto b = pipeline.reconstruct_past(req, *id_backend);
  EXPECT_EQ(b.image, req.rgb);
}

TEST(Pipeline, EditorPromptEmbedsTheValidatedSentence) {
  auto pipeline = make_pipeline();
  vlm::MockConfig cfg;
  cfg.describe_response = "  The person was sitting on the chair.  ";
  auto b = mock("echo", cfg);
  const auto d = pipeline.describe_scene(capture30(), vlm::find_template("p_desc3"), *b);
  vlm::EditRequest req;
  req.rgb = capture30().rgb;
  req.thermal_pseudocolor = vlm::prepare_thermal_image(capture30());
  req.description = d;
  req.tmpl = vlm::find_template("p_edit4");
  const auto rec = pipeline.reconstruct_past(req, *b);
  EXPECT_NE(rec.prompt.find("\"The person was sitting on the chair.\""), std::string::npos) << rec.prompt;
  EXPECT_EQ(rec.descriptor_template_id, "p_desc3");
  const auto prov = vlm::provenance_json(rec);
  EXPECT_EQ(prov.at("editor_template_id"), "p_edit4");
  EXPECT_EQ(prov.at("inputs_hash"), rec.inputs_hash);
}

TEST(Pipeline, WrongSizedEditIsRejected) {
  auto pipeline = make_pipeline();
  vlm::MockConfig cfg;
  cfg.edit_mode = vlm::MockEditMode::wrong_size;
  auto b = mock("bad", cfg);
  vlm::EditRequest req;
  req.rgb = capture30().rgb;
  req.tmpl = vlm::find_template("p_gen_rgb");
  EXPECT_THROW(pipeline.reconstruct_past(req, *b), BackendContractViolation);
}

TEST(Pipeline, EditRequestInputsMustMatchTemplate) {
  vlm::EditRequest req;
  req.rgb = capture30().rgb;
  req.tmpl = vlm::find_template("p_gen_thermal");
  EXPECT_THROW(req.validate(), UsageError);  // thermal template without thermal input
  req.thermal_pseudocolor = vlm::prepare_thermal_image(capture30());
  EXPECT_NO_THROW(req.validate());
  req.thermal_pseudocolor = RgbFrame(3, 3);
  EXPECT_THROW(req.validate(), UsageError);  // not on the RGB grid
}

TEST(Pipeline, ThermalImageIsRegisteredPseudocolor) {
  const auto img = vlm::prepare_thermal_image(capture30());
  EXPECT_EQ(img.width(), capture30().rgb.width());
  EXPECT_EQ(img.height(), capture30().rgb.height());
}

// --- HTTP adapter ------------------------------------------------------------------

class HttpFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      last_auth_ = req.get_header_value("Authorization");
      last_body_ = nlohmann::json::parse(req.body);
      if (fail_next_-- > 0) {
        res.status = 503;
        return;
      }
      res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", reply_}}}}}}}.dump(), "application/json");
    });
    server_.Post("/v1/images/edits", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      last_body_ = nlohmann::json::parse(req.body);
      if (status_ != 200) {
        res.status = status_;
        res.set_content("{\"error\":\"nope\"}", "application/json");
        return;
      }
      // Echo the input image back.
      res.set_content(nlohmann::json{{"data", {{{"b64_json", last_body_.at("image")}}}}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
    ::unsetenv("CHRONOLENS_BACKEND_HTTP_TEST_TOKEN");
  }
  vlm::HttpBackend backend() {
    return vlm::HttpBackend({"http-test", {Capability::describe, Capability::edit},
                             "http://127.0.0.1:" + std::to_string(port_)},
                            vlm::HttpBackendConfig{"model-x"});
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::string last_auth_;
  nlohmann::json last_body_;
  std::string reply_ = "The person was sitting.";
  int fail_next_ = 0;
  int status_ = 200;
};

TEST_F(HttpFixture, DescribeSendsPromptImagesAndToken) {
  ::setenv("CHRONOLENS_BACKEND_HTTP_TEST_TOKEN", "s3cret", 1);
  auto b = backend();
  const auto out = b.describe({RgbFrame(4, 4, Rgb{9, 9, 9}), RgbFrame(4, 4)}, "describe please");
  EXPECT_EQ(out, "The person was sitting.");
  EXPECT_EQ(last_auth_, "Bearer s3cret");
  EXPECT_EQ(last_body_.at("model"), "model-x");
  const auto& content = last_body_.at("messages").at(0).at("content");
  ASSERT_EQ(content.size(), 3u);
  EXPECT_EQ(content.at(0).at("text"), "describe please");
  const std::string url = content.at(1).at("image_url").at("url");
  EXPECT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
  EXPECT_EQ(scene::decode_rgb_png(base64_decode(url.substr(22))), RgbFrame(4, 4, Rgb{9, 9, 9}));
}

TEST_F(HttpFixture, EditRoundTripsImage) {
  auto b = backend();
  const RgbFrame in(5, 3, Rgb{1, 2, 3});
  EXPECT_EQ(b.edit(in, {RgbFrame(5, 3)}, "edit"), in);
  EXPECT_EQ(last_body_.at("auxiliary_images").size(), 1u);
  EXPECT_EQ(last_body_.at("prompt"), "edit");
}

TEST_F(HttpFixture, StatusMapping) {
  auto b = backend();
  fail_next_ = 1;
  EXPECT_THROW(b.describe({}, "x"), TransportError);
  status_ = 400;
  EXPECT_THROW(b.edit(RgbFrame(2, 2), {}, "x"), BackendContractViolation);
}

TEST_F(HttpFixture, PipelineRetriesServerErrors) {
  auto b = backend();
  fail_next_ = 2;
  auto pipeline = make_pipeline();
  const auto d = pipeline.describe_scene(capture30(), vlm::find_template("p_desc1"), b);
  EXPECT_EQ(d.sentence, "The person was sitting.");
  EXPECT_EQ(d.backend_id, "http-test");
}

TEST(Http, UnreachableEndpointIsTransportError) {
  vlm::HttpBackend b({"dead", {Capability::describe}, "http://127.0.0.1:9"}, vlm::HttpBackendConfig{"m", "/x", "/y", 2});
  EXPECT_THROW(b.describe({}, "x"), TransportError);
}

TEST(Http, EndpointMustBeUrl) {
  EXPECT_THROW(vlm::HttpBackend({"bad", {Capability::describe}, "ftp://x"}, {}), DataError);
  EXPECT_THROW(vlm::BackendDescriptor({"bad id!", {Capability::describe}, "http://x"}).validate(), DataError);
}

// --- experiments -------------------------------------------------------------------

experiments::BackendMap backends_with_outage() {
  auto b = ct::mock_backends(Presets::get());
  vlm::MockConfig cfg;
  cfg.always_fail = true;
  b["mock-down"] = mock("mock-down", cfg);
  return b;
}

TEST(Experiments, IdentityMockMetricsEqualDirectComputation) {
  auto pipeline = make_pipeline();
  experiments::Runner runner(pipeline, ct::mock_backends(Presets::get()), "mock-gt");
  const auto t = experiments::run_ablation(Presets::get(), "mock-identity", 30.0, runner);
  ASSERT_EQ(t.cells.size(), 9u);
  for (const auto& c : t.cells) {
    const auto& s = *std::find_if(Presets::get().begin(), Presets::get().end(),
                                  [&](const auto& x) { return x.id() == c.scenario_id; });
    const auto& gt = s.manifest.ground_truth.rgb;
    const auto& in = s.observation(30.0).rgb;
    ASSERT_TRUE(c.report.has_value()) << c.scenario_id;
    EXPECT_DOUBLE_EQ(c.report->psnr_db->mean, metrics::psnr(gt, in));
    EXPECT_DOUBLE_EQ(c.report->ssim->mean, metrics::ssim(gt, in));
    // No person in the observation: the whole skeleton is charged the diagonal.
    EXPECT_DOUBLE_EQ(c.report->mpjpe_px->mean, std::hypot(gt.width(), gt.height()));
  }
}

TEST(Experiments, FailedBackendIsIsolated) {
  auto pipeline = make_pipeline();
  experiments::Runner runner(pipeline, backends_with_outage(), "mock-gt");
  const auto m = experiments::run_generator_comparison(Presets::get().front(), {"mock-gt", "mock-down", "mock-identity"},
                                                       30.0, runner);
  ASSERT_EQ(m.rows.size(), 3u);
  EXPECT_TRUE(m.rows[0].ok());
  EXPECT_FALSE(m.rows[1].ok());
  EXPECT_NE(m.rows[1].error->find("simulated outage"), std::string::npos);
  EXPECT_TRUE(m.rows[2].ok());
  const auto md = experiments::render(m, experiments::ReportFormat::markdown);
  EXPECT_NE(md.find("mock-down"), std::string::npos);
}

TEST(Experiments, UnknownBackendAbortsBeforeAnyCall) {
  auto pipeline = make_pipeline();
  auto backends = ct::mock_backends(Presets::get());
  auto gt = std::dynamic_pointer_cast<vlm::MockBackend>(backends.at("mock-gt"));
  experiments::Runner runner(pipeline, backends, "mock-gt");
  EXPECT_THROW(experiments::run_ablation(Presets::get(), "nosuch", 30.0, runner), DataError);
  EXPECT_THROW(experiments::run_ablation(Presets::get(), "mock-gt", 45.0, runner), DataError);
  EXPECT_EQ(gt->total_calls(), 0);
}

TEST(Experiments, DescriptorLadderOnlyTemplateVaries) {
  auto pipeline = make_pipeline();
  experiments::Runner runner(pipeline, ct::mock_backends(Presets::get()), "mock-gt");
  const auto l = experiments::run_prompt_ladder(Presets::get().front(), "mock-identity", vlm::Stage::descriptor, 30.0,
                                                runner);
  ASSERT_EQ(l.levels.size(), 4u);
  std::set<std::string> sentences, hashes;
  for (const auto& c : l.levels) {
    ASSERT_TRUE(c.ok()) << *c.error;
    ASSERT_TRUE(c.sentence && c.inputs_hash);
    sentences.insert(*c.sentence);
    hashes.insert(*c.inputs_hash);
    EXPECT_FALSE(c.report.has_value());
  }
  EXPECT_EQ(sentences.size(), 1u);
  EXPECT_EQ(hashes.size(), 4u);
}

TEST(Experiments, SweepSideChannelFalls) {
  auto pipeline = make_pipeline();
  experiments::Runner runner(pipeline, ct::mock_backends(Presets::get()), "mock-gt");
  const auto s = experiments::run_temporal_sweep(Presets::get(), "mock-gt", {5, 15, 30, 120}, runner);
  ASSERT_EQ(s.points.size(), 4u);
  for (std::size_t i = 1; i < s.points.size(); ++i) EXPECT_LT(s.points[i].mean_trace_dt_c, s.points[i - 1].mean_trace_dt_c);
}

// --- reports -----------------------------------------------------------------------

TEST(Reports, FormatsAndRoundTrip) {
  auto pipeline = make_pipeline();
  experiments::Runner runner(pipeline, ct::mock_backends(Presets::get()), "mock-gt");
  const auto t = experiments::run_ablation(Presets::get(), "mock-identity", 30.0, runner);
  const auto md = experiments::render(t, experiments::ReportFormat::markdown);
  EXPECT_EQ(md.rfind("| RGB | Thermal | Descriptor | OA | MPJPE | PSNR | SSIM |\n", 0), 0u);
  const auto back = experiments::report_source_from_json(experiments::to_json(experiments::ReportSource(t)));
  EXPECT_EQ(experiments::render(back, experiments::ReportFormat::markdown), md);
  EXPECT_EQ(experiments::render(back, experiments::ReportFormat::csv),
            experiments::render(t, experiments::ReportFormat::csv));

  const auto s = experiments::run_temporal_sweep(Presets::get(), "mock-identity", {5, 30}, runner);
  const auto csv = experiments::render(s, experiments::ReportFormat::csv);
  EXPECT_NE(csv.find("ssim_x100_mean"), std::string::npos);
  std::istringstream is(csv);
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  // Column index of ssim_x100_mean, then compare with 100 x the row mean.
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    return f;
  };
  const auto h = split(header), r = split(row);
  const auto col = std::find(h.begin(), h.end(), "ssim_x100_mean") - h.begin();
  EXPECT_NEAR(std::stod(r.at(col)), 100.0 * s.points[0].summary.metrics->ssim->mean, 1e-5);
}

TEST(Reports, EmptyResultsWriteNothing) {
  ct::TempDir dir("report_empty");
  experiments::AblationTable empty;
  EXPECT_THROW(experiments::emit_report(empty, experiments::ReportFormat::csv, dir.path() / "x.csv"), UsageError);
  EXPECT_FALSE(fs::exists(dir.path() / "x.csv"));
  EXPECT_THROW(experiments::emit_all(empty, dir.path(), "y"), UsageError);
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

// --- external annotator --------------------------------------------------------

TEST(Adapter, FixtureModeFeedsMetrics) {
  ct::TempDir dir("adapter");
  experiments::ExternalAnnotator ann((ct::fixture_dir() / "adapters" / "fake_adapter.sh").string(), dir.path(), true);
  const auto& s = Presets::get().front();  // sit_chair, same size as the fixture
  const auto a = ann.annotate(s.manifest.ground_truth.rgb);
  ASSERT_TRUE(a.keypoints && a.labels);
  EXPECT_EQ(a.keypoints->joints.size(), 17u);
  EXPECT_NO_THROW(metrics::mpjpe(*s.gt_keypoints, *a.keypoints));
  EXPECT_NO_THROW(metrics::overall_accuracy(*s.gt_labels, *a.labels));
  EXPECT_TRUE(fs::exists(dir.path() / "img_0_320x240_keypoints.json"));

  // Person-class IoU against the simulator labels, and every keypoint inside the person's box.
  auto person_id = [](const metrics::LabelMap& m) {
    for (const auto& [id, name] : m.class_names)
      if (name == "person") return id;
    return -1;
  };
  const int gid = person_id(*s.gt_labels), aid = person_id(*a.labels);
  ASSERT_GE(gid, 0);
  ASSERT_GE(aid, 0);
  std::size_t inter = 0, uni = 0;
  int x0 = s.gt_labels->width, y0 = s.gt_labels->height, x1 = -1, y1 = -1;
  for (int y = 0; y < s.gt_labels->height; ++y) {
    for (int x = 0; x < s.gt_labels->width; ++x) {
      const bool g = s.gt_labels->at(x, y) == gid, p = a.labels->at(x, y) == aid;
      inter += g && p;
      uni += g || p;
      if (g) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  ASSERT_GT(uni, 0u);
  EXPECT_GE(static_cast<double>(inter) / static_cast<double>(uni), 0.5);
  for (const auto& j : a.keypoints->joints) {
    EXPECT_GE(j.x, x0) << j.name;
    EXPECT_LE(j.x, x1 + 1) << j.name;
    EXPECT_GE(j.y, y0) << j.name;
    EXPECT_LE(j.y, y1 + 1) << j.name;
  }
}

TEST(Adapter, FailingCommandIsDataError) {
  ct::TempDir dir("adapter_fail");
  experiments::ExternalAnnotator live((ct::fixture_dir() / "adapters" / "fake_adapter.sh").string(), dir.path(), false);
  EXPECT_THROW(live.annotate(RgbFrame(4, 4)), DataError);
}

TEST(Adapter, PaletteAnnotatorReportsMissingPerson) {
  const auto& s = Presets::get().front();
  const auto a = s.annotator->annotate(s.observation(30).rgb);
  EXPECT_TRUE(a.keypoints->no_detection);
  const auto g = s.annotator->annotate(s.manifest.ground_truth.rgb);
  EXPECT_EQ(*g.keypoints, *s.gt_keypoints);
  EXPECT_EQ(*g.labels, *s.gt_labels);
}

// --- configuration and CLI ---------------------------------------------------------

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Config, SecretsAreRejected) {
  ct::TempDir dir("config");
  const auto p = dir.path() / "c.json";
  scene::write_json_file(p, {{"backends", {{{"backend_id", "x"}, {"endpoint", "http://h"}, {"token", "t"}}}}});
  EXPECT_THROW(cli::load_global_config(p), DataError);
  scene::write_json_file(p, {{"backends", {{{"backend_id", "x"}, {"kind", "mock"}, {"edit_mode", "identity"}}}},
                             {"thresholds", {{"trace_dt_c", 0.5}}},
                             {"retry", {{"max_attempts", 5}}}});
  const auto c = cli::load_global_config(p);
  EXPECT_EQ(c.traces.threshold_dt_c, 0.5);
  EXPECT_EQ(c.retry_attempts, 5);
  EXPECT_EQ(c.backends.size(), 3u);
}

TEST(Cli, HelpExitsZeroWithoutSideEffects) {
  ct::TempDir dir("cli_help");
  const auto cwd = fs::current_path();
  fs::current_path(dir.path());
  const auto r = cli({"--help"});
  const auto sub = cli({"ablate", "--help"});
  fs::current_path(cwd);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("compare-generators"), std::string::npos);
  EXPECT_EQ(sub.code, 0);
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"ablate", "--delay", "abc"}).code, 1);
  EXPECT_EQ(cli({"report", "--results", "x.json", "--format", "pdf"}).code, 1);
}

TEST(Cli, UnknownBackendExitsTwo) {
  ct::TempDir dir("cli_unknown");
  const auto r = cli({"--cache-dir", (dir.path() / "c").string(), "reconstruct", "--manifest",
                      Presets::manifest("sit_chair").string(), "--backend", "nosuch", "--out",
                      (dir.path() / "r.png").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("unknown backend"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir.path() / "r.png"));
}

TEST(Cli, BadManifestExitsTwo) {
  EXPECT_EQ(cli({"traces", "--manifest", "/nonexistent/m.json"}).code, 2);
}

TEST(Cli, SimulateThenAblate) {
  ct::TempDir dir("cli_flow");
  const auto data = dir.path() / "data";
  ASSERT_EQ(cli({"simulate", "--preset", "all", "--out", data.string()}).code, 0);
  std::vector<std::string> args{"--cache-dir", (dir.path() / "cache").string(), "ablate"};
  for (const char* id : {"sit_chair", "lean_wall", "touch_object"}) {
    args.push_back("--manifest");
    args.push_back((data / (std::string(id) + ".manifest.json")).string());
  }
  for (const char* a : {"--backend", "mock-gt", "--delay", "30", "--out"}) args.push_back(a);
  args.push_back((dir.path() / "out").string());
  const auto r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("| RGB | Thermal | Descriptor | OA | MPJPE | PSNR | SSIM |"), std::string::npos);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n') >= 5, true);
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "ablation_results.json"));

  const auto rep = cli({"report", "--results", (dir.path() / "out" / "ablation_results.json").string(), "--format",
                        "markdown"});
  EXPECT_EQ(rep.code, 0);
  EXPECT_EQ(rep.out, ct::slurp(dir.path() / "out" / "ablation.md"));

  // A second run is served entirely from the cache directory.
  const auto again = cli(args);
  EXPECT_EQ(again.code, 0);
  EXPECT_EQ(again.out, r.out);
}

TEST(Cli, FailedCellsExitFour) {
  ct::TempDir dir("cli_partial");
  const auto cfg = dir.path() / "cfg.json";
  scene::write_json_file(cfg, {{"backends", {{{"backend_id", "down"}, {"kind", "mock"}, {"fail", true}}}},
                               {"retry", {{"max_attempts", 1}}}});
  const auto r = cli({"--config", cfg.string(), "--cache-dir", (dir.path() / "c").string(), "compare-generators",
                      "--manifest", Presets::manifest("sit_chair").string(), "--backend", "mock-gt", "--backend",
                      "down", "--out", (dir.path() / "out").string()});
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_TRUE(fs::exists(dir.path() / "out" / "comparison.md"));
}

TEST(Cli, BackendOutageOnSingleReconstructExitsThree) {
  ct::TempDir dir("cli_outage");
  const auto cfg = dir.path() / "cfg.json";
  scene::write_json_file(cfg, {{"backends", {{{"backend_id", "down"}, {"kind", "mock"}, {"fail", true}}}},
                               {"retry", {{"max_attempts", 1}}}});
  const auto r = cli({"--config", cfg.string(), "--cache-dir", (dir.path() / "c").string(), "reconstruct",
                      "--manifest", Presets::manifest("sit_chair").string(), "--backend", "down", "--modalities",
                      "rgb", "--out", (dir.path() / "r.png").string()});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, BinaryHelp) {
  const char* bin = std::getenv("CHRONOLENS_CLI");
  if (!bin) GTEST_SKIP() << "CHRONOLENS_CLI not set";
  EXPECT_EQ(std::system((std::string(bin) + " --help > /dev/null").c_str()), 0);
}

}  // namespace
