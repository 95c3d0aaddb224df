#include <gtest/gtest.h>

#include <json.hpp>

#include "gpal/config_io.hpp"
#include "gpal/label_service.hpp"
#include "gpal/report_io.hpp"
#include "test_support.hpp"

// After the gpal headers: <resolv.h> (pulled in by httplib) defines macros that clash with Eigen.
#include <httplib.h>

using namespace gpal;
using json = nlohmann::json;
using gpal::testing::TempDir;

namespace {

al::ALConfig service_config() {
  al::ALConfig cfg;
  cfg.initial_size = 12;
  cfg.batch_size = 8;
  cfg.max_cycles = 3;
  cfg.num_inducing = 12;
  cfg.mc_samples_train = 8;
  cfg.mc_samples_predict = 16;
  cfg.train.epochs = 3;
  cfg.train.learning_rate = 0.03;
  cfg.seed = 5;
  return cfg;
}

/// Service plus a live HTTP server on an ephemeral loopback port.
class Harness {
 public:
  explicit Harness(data::FeatureDataset ds, service::ServiceOptions opts = {}, al::ALConfig defaults = service_config())
      : svc_(std::move(ds), defaults, std::move(opts)) {
    svc_.mount(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(60, 0);
  }
  ~Harness() {
    server_.stop();
    thread_.join();
  }

  httplib::Client& http() { return *client_; }
  service::LabelService& svc() { return svc_; }

  std::string create(const std::string& body = "") {
    auto r = client_->Post("/api/session", body, "application/json");
    EXPECT_TRUE(r);
    EXPECT_EQ(r->status, 201) << r->body;
    return json::parse(r->body)["id"];
  }

  /// Polls the session until it leaves the training state.
  json wait_ready(const std::string& id) {
    for (;;) {
      auto r = client_->Get("/api/session/" + id);
      EXPECT_EQ(r->status, 200);
      auto j = json::parse(r->body);
      if (j["status"] != "training") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  json get(const std::string& path, int expect = 200) {
    auto r = client_->Get(path);
    EXPECT_TRUE(r);
    EXPECT_EQ(r->status, expect) << path << ": " << r->body;
    return json::parse(r->body);
  }

  httplib::Result post_labels(const std::string& id, const json& labels) {
    return client_->Post("/api/session/" + id + "/labels", json{{"labels", labels}}.dump(), "application/json");
  }

 private:
  service::LabelService svc_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

json truth_for(const data::FeatureDataset& ds, const json& batch) {
  json labels = json::object();
  for (const auto& item : batch["items"]) {
    const auto id = item["id"].get<std::string>();
    const auto it = std::find(ds.sample_ids.begin(), ds.sample_ids.end(), id);
    labels[id] = ds.label_at(static_cast<std::size_t>(it - ds.sample_ids.begin()));
  }
  return labels;
}

}  // namespace

TEST(LabelService, HealthAndSessionLifecycle) {
  const auto ds = gpal::testing::small_blobs();
  Harness h(ds);
  EXPECT_EQ(h.get("/healthz")["status"], "ok");

  auto r = h.http().Post("/api/session", R"({"batch_size": 6})", "application/json");
  ASSERT_EQ(r->status, 201) << r->body;
  const auto created = json::parse(r->body);
  const std::string id = created["id"];
  EXPECT_EQ(created["config"]["batch_size"], 6);
  EXPECT_EQ(created["config"]["initial_size"], 12);

  r = h.http().Post("/api/session", "", "application/json");
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(json::parse(r->body)["error"]["code"], "conflict");

  EXPECT_EQ(h.get("/api/session/nope", 404)["error"]["code"], "not_found");
  h.get("/api/session/nope/batch", 404);
  h.get("/api/session/nope/metrics", 404);

  const auto st = h.wait_ready(id);
  EXPECT_EQ(st["status"], "awaiting_labels");
  EXPECT_EQ(st["labeled_count"], 12);

  const auto metrics = h.get("/api/session/" + id + "/metrics");
  EXPECT_EQ(metrics["curve"].size(), 1u);
}

TEST(LabelService, BatchContract) {
  const auto ds = gpal::testing::small_blobs();
  Harness h(ds);
  const auto id = h.create();
  const auto st = h.wait_ready(id);
  const auto b1 = h.get("/api/session/" + id + "/batch");
  const auto b2 = h.get("/api/session/" + id + "/batch");
  EXPECT_EQ(b1, b2);
  ASSERT_EQ(b1["items"].size(), 8u);
  std::set<std::string> labeled(st["labeled_ids"].begin(), st["labeled_ids"].end());
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& item : b1["items"]) {
    EXPECT_EQ(labeled.count(item["id"]), 0u);
    EXPECT_LE(item["score"].get<double>(), prev);
    prev = item["score"];
    EXPECT_TRUE(item.contains("image_uri"));
  }
}

TEST(LabelService, InvalidSubmissionsLeaveStateUnchanged) {
  const auto ds = gpal::testing::small_blobs();
  Harness h(ds);
  const auto id = h.create();
  h.wait_ready(id);
  const auto batch = h.get("/api/session/" + id + "/batch");
  const auto before = h.get("/api/session/" + id);
  auto labels = truth_for(ds, batch);

  auto missing = labels;
  missing.erase(missing.begin());
  auto r = h.post_labels(id, missing);
  EXPECT_EQ(r->status, 400);
  EXPECT_NE(r->body.find("missing"), std::string::npos) << r->body;

  auto extra = labels;
  extra["not-a-sample"] = 0;
  EXPECT_EQ(h.post_labels(id, extra)->status, 400);

  auto out_of_range = labels;
  out_of_range.begin().value() = 3;
  EXPECT_EQ(h.post_labels(id, out_of_range)->status, 400);

  auto not_int = labels;
  not_int.begin().value() = "covid";
  EXPECT_EQ(h.post_labels(id, not_int)->status, 400);

  EXPECT_EQ(h.http().Post("/api/session/" + id + "/labels", "{oops", "application/json")->status, 400);
  EXPECT_EQ(h.http().Post("/api/session/" + id + "/labels", R"({"x":1})", "application/json")->status, 400);

  EXPECT_EQ(h.get("/api/session/" + id), before);
  EXPECT_EQ(h.get("/api/session/" + id + "/batch"), batch);

  r = h.post_labels(id, labels);
  ASSERT_EQ(r->status, 200) << r->body;
  const auto summary = json::parse(r->body);
  EXPECT_EQ(summary["labeled_count"], 20);
  EXPECT_EQ(summary["cycle"], 1);
  EXPECT_TRUE(summary["test_accuracy"].is_number());

  const auto after = h.get("/api/session/" + id);
  EXPECT_EQ(after["labeled_count"], 20);
  for (const auto& item : batch["items"])
    EXPECT_NE(std::find(after["labeled_ids"].begin(), after["labeled_ids"].end(), item["id"]),
              after["labeled_ids"].end());
  EXPECT_EQ(h.get("/api/session/" + id + "/metrics")["curve"].size(), 2u);
}

TEST(LabelService, ScriptedClientMatchesSimulatedOracle) {
  const auto ds = gpal::testing::small_blobs();
  const auto cfg = service_config();
  al::SimulatedOracle oracle(ds);
  const auto expected = al::run_al(ds, cfg, oracle);

  Harness h(ds);
  const auto id = h.create();
  int cycles = 0;
  for (;;) {
    const auto st = h.wait_ready(id);
    if (st["status"] == "finished") break;
    const auto batch = h.get("/api/session/" + id + "/batch");
    ASSERT_EQ(h.post_labels(id, truth_for(ds, batch))->status, 200);
    ++cycles;
  }
  EXPECT_EQ(cycles, cfg.max_cycles);
  const auto metrics = h.get("/api/session/" + id + "/metrics");
  EXPECT_EQ(metrics["status"], "finished");
  ASSERT_EQ(metrics["curve"].size(), expected.curve.size());
  for (std::size_t k = 0; k < expected.curve.size(); ++k) {
    EXPECT_EQ(metrics["curve"][k]["labeled_count"], expected.curve[k].labeled_count);
    EXPECT_EQ(metrics["curve"][k]["test_accuracy"].get<double>(), expected.curve[k].test_accuracy);
  }
  const auto snap = h.svc().session(id)->snapshot();
  EXPECT_EQ(io::report_json(snap.report), io::report_json(expected));

  double sum = 0.0;
  int rows = 0;
  for (const auto& row : metrics["batches"]) {
    if (row["cycle"] == 1) {
      sum += row["fraction"].get<double>();
      ++rows;
    }
  }
  EXPECT_EQ(rows, 3);
  EXPECT_NEAR(sum, 1.0, 1e-9);

  EXPECT_EQ(h.get("/api/session/" + id + "/batch", 409)["error"]["code"], "conflict");
}

TEST(LabelService, BusySessionAsksToRetry) {
  const auto ds = gpal::testing::small_blobs(4, {300, 200, 100}, {20, 20, 20}, 8);
  auto cfg = service_config();
  cfg.initial_size = 400;
  cfg.num_inducing = 64;
  cfg.train.epochs = 30;
  cfg.mc_samples_train = 64;
  Harness h(ds, {}, cfg);
  const auto id = h.create();
  auto r = h.http().Get("/api/session/" + id + "/batch");
  EXPECT_EQ(r->status, 503);
  EXPECT_EQ(r->get_header_value("Retry-After"), "1");
  EXPECT_EQ(json::parse(r->body)["error"]["code"], "training");
  EXPECT_EQ(h.post_labels(id, json::object())->status, 503);
}

TEST(LabelService, AsyncSubmitReturnsTicket) {
  const auto ds = gpal::testing::small_blobs();
  service::ServiceOptions opts;
  opts.session.async_retrain = true;
  Harness h(ds, opts);
  const auto id = h.create();
  h.wait_ready(id);
  const auto batch = h.get("/api/session/" + id + "/batch");
  auto r = h.post_labels(id, truth_for(ds, batch));
  ASSERT_EQ(r->status, 202) << r->body;
  const auto summary = json::parse(r->body);
  EXPECT_EQ(summary["ticket"], 1);
  EXPECT_EQ(summary["labeled_count"], 20);
  EXPECT_TRUE(summary["test_accuracy"].is_null());
  h.wait_ready(id);
  EXPECT_EQ(h.get("/api/session/" + id + "/metrics")["curve"].size(), 2u);
}

TEST(LabelService, ImagesAreConfinedToTheRoot) {
  TempDir tmp;
  auto ds = gpal::testing::small_blobs();
  std::filesystem::create_directories(tmp / "root" / "img");
  io::write_text(tmp / "root" / "img" / "a.png", "\x89PNG fake");
  io::write_text(tmp / "secret.png", "secret");
  ds.image_uris[0] = "img/a.png";
  ds.image_uris[1] = "../secret.png";
  ds.image_uris[2] = "img/missing.png";
  service::ServiceOptions opts;
  opts.image_root = tmp / "root";
  Harness h(ds, opts);

  auto r = h.http().Get("/api/image/" + ds.sample_ids[0]);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "\x89PNG fake");
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  r = h.http().Get("/api/image/" + ds.sample_ids[1]);
  EXPECT_EQ(r->status, 403);
  EXPECT_EQ(r->body.find("secret\""), std::string::npos);
  EXPECT_EQ(h.http().Get("/api/image/" + ds.sample_ids[2])->status, 404);
  EXPECT_EQ(h.http().Get("/api/image/" + ds.sample_ids[3])->status, 404);
  EXPECT_EQ(h.http().Get("/api/image/unknown")->status, 404);

  EXPECT_EQ(service::image_content_type("x.JPG"), "image/jpeg");
  EXPECT_EQ(service::image_content_type("x.bin"), "application/octet-stream");
}

TEST(LabelService, StaticFilesAndReportDir) {
  TempDir tmp;
  std::filesystem::create_directories(tmp / "ui");
  io::write_text(tmp / "ui" / "index.html", "<html>ui</html>");
  const auto ds = gpal::testing::small_blobs();
  service::ServiceOptions opts;
  opts.static_dir = tmp / "ui";
  opts.session.report_dir = tmp / "report";
  auto cfg = service_config();
  cfg.max_cycles = 1;
  Harness h(ds, opts, cfg);
  auto r = h.http().Get("/index.html");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>ui</html>");

  const auto id = h.create();
  h.wait_ready(id);
  ASSERT_EQ(h.post_labels(id, truth_for(ds, h.get("/api/session/" + id + "/batch")))->status, 200);
  EXPECT_EQ(h.wait_ready(id)["status"], "finished");
  for (const char* f : {io::kCurveFile, io::kBatchesFile, io::kReportFile})
    EXPECT_TRUE(std::filesystem::exists(tmp / "report" / f)) << f;
}

TEST(LabelService, SessionNeedsPreLabeledSamples) {
  auto ds = gpal::testing::small_blobs();
  for (auto i : ds.indices(data::Split::TrainPool)) ds.labels[i].reset();
  Harness h(ds);
  auto r = h.http().Post("/api/session", "", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["error"]["code"], "validation");
  r = h.http().Post("/api/session", R"({"batch_size": -1})", "application/json");
  EXPECT_EQ(r->status, 400);
}
