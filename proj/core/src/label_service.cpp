#include "gpal/label_service.hpp"

#include <cctype>
#include <cmath>
#include <limits>

#include <httplib.h>
#include <json.hpp>

#include "gpal/config_io.hpp"
#include "gpal/error.hpp"
#include "gpal/log.hpp"
#include "gpal/report_io.hpp"

namespace gpal::service {
namespace {

using ojson = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ojson real_or_null(double v) { return std::isnan(v) ? ojson() : ojson(v); }

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  res.status = status;
  res.set_content(error_json(code, message), "application/json");
}

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

// Maps library exceptions onto HTTP statuses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const RetryLater& e) {
    res.set_header("Retry-After", "1");
    send_error(res, 503, "training", e.what());
  } catch (const NotFound& e) {
    send_error(res, 404, "not_found", e.what());
  } catch (const Conflict& e) {
    send_error(res, 409, "conflict", e.what());
  } catch (const Forbidden& e) {
    send_error(res, 403, "forbidden", e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, "validation", e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, "bad_json", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

bool within(const std::filesystem::path& root, const std::filesystem::path& p) {
  auto r = root.begin();
  auto q = p.begin();
  for (; r != root.end(); ++r, ++q) {
    if (r->empty()) continue;  // trailing separator
    if (q == p.end() || *r != *q) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Training: return "training";
    case SessionStatus::AwaitingLabels: return "awaiting_labels";
    case SessionStatus::Finished: return "finished";
  }
  return "unknown";
}

Session::Session(std::string id, const data::FeatureDataset& ds, al::ALConfig cfg, SessionOptions opts)
    : id_(std::move(id)),
      cfg_(std::move(cfg)),
      learner_(std::make_unique<al::ActiveLearner>(ds, cfg_)),
      opts_(std::move(opts)),
      oracle_(ds.num_classes()) {
  snap_.report = learner_->report();
  worker_ = std::thread([this] { run(); });
}

Session::~Session() {
  oracle_.close();
  if (worker_.joinable()) worker_.join();
}

void Session::run() {
  const auto publish = [this](const al::ActiveLearner& l) {
    std::vector<std::string> ids;
    ids.reserve(l.state().labeled.size());
    for (auto i : l.state().labeled) ids.push_back(l.data().sample_ids[i]);
    auto report = l.report();
    std::lock_guard lock(mu_);
    snap_.cycle = l.state().cycle;
    snap_.labeled_ids = std::move(ids);
    snap_.report = std::move(report);
  };
  al::RunReport final_report;
  std::string error;
  try {
    final_report = al::run_al(*learner_, oracle_, publish);
    if (!final_report.error.empty()) error = final_report.error;
  } catch (const std::exception& e) {
    log().error("session {} failed: {}", id_, e.what());
    final_report = learner_->report();
    final_report.complete = false;
    final_report.stop_reason = "error";
    final_report.error = e.what();
    error = e.what();
  }
  if (opts_.report_dir) {
    try {
      io::write_run(final_report, *opts_.report_dir);
    } catch (const std::exception& e) {
      log().error("session {}: cannot write report: {}", id_, e.what());
    }
  }
  {
    std::lock_guard lock(mu_);
    snap_.report = std::move(final_report);
    snap_.error = std::move(error);
    finished_ = true;
  }
  oracle_.close();
}

SessionStatus Session::status() const {
  std::lock_guard lock(mu_);
  if (finished_) return SessionStatus::Finished;
  return oracle_.pending() ? SessionStatus::AwaitingLabels : SessionStatus::Training;
}

void Session::wait_ready() const { oracle_.wait_for_request(0); }

PendingBatch Session::batch() const {
  const auto st = status();
  if (st == SessionStatus::Finished) throw Conflict("session " + id_ + " has finished");
  const auto req = oracle_.pending();
  if (!req) throw RetryLater("session " + id_ + " is training");
  PendingBatch b;
  b.cycle = req->cycle;
  for (std::size_t k = 0; k < req->ids.size(); ++k)
    b.items.push_back({req->ids[k], req->scores[k], req->image_uris[k]});
  return b;
}

SubmitSummary Session::submit(const std::map<std::string, int>& labels) {
  std::lock_guard serial(submit_mu_);
  if (status() == SessionStatus::Finished) throw Conflict("session " + id_ + " has finished");
  const auto req = oracle_.pending();
  if (!req) throw RetryLater("session " + id_ + " is training");
  const auto seq = oracle_.request_count();
  oracle_.submit(labels);

  SubmitSummary out;
  out.cycle = req->cycle;
  out.async = opts_.async_retrain;
  if (opts_.async_retrain) {
    std::lock_guard lock(mu_);
    out.labeled_count = snap_.labeled_ids.size() + req->ids.size();
    out.test_accuracy = kNaN;
    out.status = SessionStatus::Training;
    return out;
  }
  oracle_.wait_for_request(seq);
  out.status = status();
  std::lock_guard lock(mu_);
  out.labeled_count = snap_.labeled_ids.size();
  out.test_accuracy = kNaN;
  for (const auto& rec : snap_.report.curve)
    if (rec.cycle == req->cycle) {
      out.labeled_count = rec.labeled_count;
      out.test_accuracy = rec.test_accuracy;
    }
  return out;
}

SessionSnapshot Session::snapshot() const {
  const auto st = status();
  std::lock_guard lock(mu_);
  SessionSnapshot s = snap_;
  s.status = st;
  return s;
}

LabelService::LabelService(data::FeatureDataset ds, al::ALConfig defaults, ServiceOptions opts)
    : ds_(std::move(ds)), defaults_(std::move(defaults)), opts_(std::move(opts)) {
  ds_.validate();
  defaults_.validate();
}

LabelService::~LabelService() {
  std::lock_guard lock(mu_);
  session_.reset();
}

std::shared_ptr<Session> LabelService::create_session(const al::ALConfig& cfg) {
  std::lock_guard lock(mu_);
  if (session_) throw Conflict("a session already exists: " + session_->id());
  session_ = std::make_shared<Session>("session-" + std::to_string(++created_), ds_, cfg, opts_.session);
  return session_;
}

std::shared_ptr<Session> LabelService::session(std::string_view id) const {
  std::lock_guard lock(mu_);
  if (!session_ || session_->id() != id) throw NotFound("unknown session '" + std::string(id) + "'");
  return session_;
}

std::filesystem::path LabelService::image_path(std::string_view sample_id) const {
  std::size_t idx = ds_.size();
  for (std::size_t i = 0; i < ds_.size(); ++i)
    if (ds_.sample_ids[i] == sample_id) {
      idx = i;
      break;
    }
  if (idx == ds_.size()) throw NotFound("unknown sample '" + std::string(sample_id) + "'");
  const auto& uri = ds_.image_uris[idx];
  if (!uri) throw NotFound("sample '" + std::string(sample_id) + "' has no image");
  if (!opts_.image_root) throw NotFound("no image root configured");

  std::error_code ec;
  const auto root = std::filesystem::weakly_canonical(*opts_.image_root, ec);
  if (ec) throw NotFound("image root unavailable");
  const auto target = std::filesystem::weakly_canonical(root / *uri, ec);
  if (ec || !within(root, target)) throw Forbidden("image path escapes the image root");
  if (!std::filesystem::is_regular_file(target, ec)) throw NotFound("image file missing for '" + std::string(sample_id) + "'");
  return target;
}

void LabelService::mount(httplib::Server& server) {
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, R"({"status":"ok"})");
  });

  server.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto cfg = req.body.empty() ? defaults_ : io::parse_al_config(req.body, defaults_);
      const auto s = create_session(cfg);
      ojson j;
      j["id"] = s->id();
      j["config"] = ojson::parse(io::dump_al_config(s->config()));
      j["status"] = to_string(s->status());
      send_json(res, 201, j.dump());
    });
  });

  server.Get(R"(/api/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, status_json(*session(req.matches[1].str()))); });
  });

  server.Get(R"(/api/session/([^/]+)/batch)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, batch_json(session(req.matches[1].str())->batch())); });
  });

  server.Post(R"(/api/session/([^/]+)/labels)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto s = session(req.matches[1].str());
      const auto body = ojson::parse(req.body);
      if (!body.is_object() || !body.contains("labels") || !body["labels"].is_object())
        throw ValidationError("body must be {\"labels\": {sample id: class id}}");
      std::map<std::string, int> labels;
      for (const auto& [id, v] : body["labels"].items()) {
        if (!v.is_number_integer()) throw ValidationError("label for '" + id + "' is not an integer");
        labels[id] = v.get<int>();
      }
      const auto summary = s->submit(labels);
      send_json(res, summary.async ? 202 : 200, summary_json(summary));
    });
  });

  server.Get(R"(/api/session/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, metrics_json(session(req.matches[1].str())->snapshot())); });
  });

  server.Get(R"(/api/image/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto path = image_path(req.matches[1].str());
      res.status = 200;
      res.set_content(io::read_text(path), std::string(image_content_type(path)));
    });
  });

  if (opts_.static_dir && !server.set_mount_point("/", opts_.static_dir->string()))
    throw IoError("static dir not found: " + opts_.static_dir->string());
}

std::string status_json(const Session& s) {
  const auto snap = s.snapshot();
  ojson j;
  j["id"] = s.id();
  j["status"] = to_string(snap.status);
  j["cycle"] = snap.cycle;
  j["labeled_count"] = snap.labeled_ids.size();
  j["labeled_ids"] = snap.labeled_ids;
  j["stop_reason"] = snap.report.stop_reason;
  if (!snap.error.empty()) j["error"] = snap.error;
  return j.dump();
}

std::string batch_json(const PendingBatch& b) {
  ojson items = ojson::array();
  for (const auto& it : b.items) {
    ojson row;
    row["id"] = it.id;
    row["score"] = it.score;
    row["image_uri"] = it.image_uri ? ojson(*it.image_uri) : ojson();
    items.push_back(std::move(row));
  }
  ojson j;
  j["cycle"] = b.cycle;
  j["items"] = std::move(items);
  return j.dump();
}

std::string metrics_json(const SessionSnapshot& snap) {
  const auto& r = snap.report;
  ojson curve = ojson::array();
  for (const auto& p : r.curve) {
    ojson row;
    row["cycle"] = p.cycle;
    row["labeled_count"] = p.labeled_count;
    row["test_accuracy"] = real_or_null(p.test_accuracy);
    row["balanced_accuracy"] = real_or_null(p.balanced_accuracy);
    row["seed"] = r.config.seed;
    row["strategy"] = acq::to_string(r.config.strategy);
    row["model_kind"] = al::to_string(r.config.model_kind);
    curve.push_back(std::move(row));
  }
  ojson batches = ojson::array();
  if (!r.batches.empty()) {
    const auto table = al::batch_composition(r);
    auto emit = [&](const al::CompositionRow& row) {
      for (std::size_t c = 0; c < row.fractions.size(); ++c)
        batches.push_back({{"cycle", row.cycle}, {"class_name", table.class_names[c]}, {"fraction", row.fractions[c]}});
    };
    if (table.baseline) emit(*table.baseline);
    for (const auto& row : table.rows) emit(row);
  }
  ojson j;
  j["status"] = to_string(snap.status);
  j["curve"] = std::move(curve);
  j["batches"] = std::move(batches);
  return j.dump();
}

std::string summary_json(const SubmitSummary& s) {
  ojson j;
  j["cycle"] = s.cycle;
  j["labeled_count"] = s.labeled_count;
  j["test_accuracy"] = real_or_null(s.test_accuracy);
  j["status"] = to_string(s.status);
  if (s.async) j["ticket"] = s.cycle;
  return j.dump();
}

std::string error_json(std::string_view code, std::string_view message) {
  ojson j;
  j["error"] = {{"code", code}, {"message", message}};
  return j.dump();
}

std::string_view image_content_type(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".webp") return "image/webp";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

}  // namespace gpal::service
