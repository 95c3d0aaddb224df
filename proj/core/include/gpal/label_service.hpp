#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "gpal/al_engine.hpp"
#include "gpal/dataset.hpp"
#include "gpal/oracle.hpp"

namespace httplib {
class Server;
}

namespace gpal::service {

/// The session is busy retraining; ask again later.
class RetryLater : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Conflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Path outside the configured image root.
class Forbidden : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SessionStatus { Training, AwaitingLabels, Finished };
std::string_view to_string(SessionStatus s);

struct PendingItem {
  std::string id;
  double score = 0.0;
  std::optional<std::string> image_uri;
};

struct PendingBatch {
  int cycle = 0;
  std::vector<PendingItem> items;  // descending score
};

struct SessionSnapshot {
  SessionStatus status = SessionStatus::Training;
  int cycle = 0;
  std::vector<std::string> labeled_ids;
  al::RunReport report;  // curve and batches so far
  std::string error;
};

struct SubmitSummary {
  int cycle = 0;  // cycle whose batch was just labeled
  std::size_t labeled_count = 0;
  double test_accuracy = 0.0;  // NaN when asynchronous or not evaluated
  SessionStatus status = SessionStatus::Training;
  bool async = false;
};

struct SessionOptions {
  bool async_retrain = false;
  std::optional<std::filesystem::path> report_dir;  // flushed when the run finishes
};

/**
 * One live labeling campaign. The engine runs run_al() on its own thread
 * against a RemoteOracle; HTTP handlers only exchange labels with that
 * oracle and read snapshots published after every evaluation, so no
 * handler holds session state while the model trains.
 */
class Session {
 public:
  /// Validates the config and the initial labeled subset before the worker
  /// starts (ValidationError).
  Session(std::string id, const data::FeatureDataset& ds, al::ALConfig cfg, SessionOptions opts = {});
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const al::ALConfig& config() const { return cfg_; }
  SessionStatus status() const;

  /// Blocks until a batch awaits labels or the run has finished.
  void wait_ready() const;

  /// Throws RetryLater while training and Conflict once finished.
  PendingBatch batch() const;

  /// All-or-nothing label submission for the pending batch. Synchronous mode
  /// returns after retraining and the next selection; async mode returns
  /// immediately with a ticket (the labeled cycle).
  SubmitSummary submit(const std::map<std::string, int>& labels);

  SessionSnapshot snapshot() const;

 private:
  void run();

  std::string id_;
  al::ALConfig cfg_;
  std::unique_ptr<al::ActiveLearner> learner_;  // owned by the worker once started
  SessionOptions opts_;
  al::RemoteOracle oracle_;

  mutable std::mutex mu_;  // guards everything below
  SessionSnapshot snap_;
  bool finished_ = false;

  std::mutex submit_mu_;  // serializes submitters
  std::thread worker_;
};

struct ServiceOptions {
  std::optional<std::filesystem::path> image_root;
  std::optional<std::filesystem::path> static_dir;
  SessionOptions session;
};

/// HTTP+JSON front end. Holds at most one session per process.
class LabelService {
 public:
  LabelService(data::FeatureDataset ds, al::ALConfig defaults, ServiceOptions opts = {});
  ~LabelService();

  /// Registers every route on `server`.
  void mount(httplib::Server& server);

  /// Creates the single session; Conflict if one already exists.
  std::shared_ptr<Session> create_session(const al::ALConfig& cfg);
  std::shared_ptr<Session> session(std::string_view id) const;

  /// Resolves a sample's image_uri under the image root (Forbidden when the
  /// path escapes it, NotFound when unknown or missing).
  std::filesystem::path image_path(std::string_view sample_id) const;

  const data::FeatureDataset& dataset() const { return ds_; }

 private:
  data::FeatureDataset ds_;
  al::ALConfig defaults_;
  ServiceOptions opts_;
  mutable std::mutex mu_;
  std::shared_ptr<Session> session_;
  int created_ = 0;
};

/// JSON bodies shared by the HTTP layer and tests.
std::string status_json(const Session& s);
std::string batch_json(const PendingBatch& b);
std::string metrics_json(const SessionSnapshot& snap);
std::string summary_json(const SubmitSummary& s);
std::string error_json(std::string_view code, std::string_view message);

/// Content type for an image path by extension.
std::string_view image_content_type(const std::filesystem::path& p);

}  // namespace gpal::service
