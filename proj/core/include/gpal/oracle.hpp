#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gpal/dataset.hpp"

namespace gpal::al {

/// One labeling request: the samples of the current batch in selection order.
struct LabelRequest {
  int cycle = 0;
  std::vector<std::string> ids;
  std::vector<double> scores;
  std::vector<std::optional<std::string>> image_uris;
};

/// Label source. Must return exactly one label in [0, C) per requested id,
/// in request order.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::vector<int> label(const LabelRequest& request) = 0;
};

/// Answers from the ground-truth labels of a dataset.
class SimulatedOracle final : public Oracle {
 public:
  explicit SimulatedOracle(const data::FeatureDataset& ds);
  std::vector<int> label(const LabelRequest& request) override;

  std::size_t queries() const { return queries_; }

 private:
  const data::FeatureDataset& ds_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::size_t queries_ = 0;
};

/**
 * Label source fed from another thread (the label service).
 *
 * The engine thread blocks in label() until submit() delivers a complete,
 * valid answer for the pending request, the optional timeout expires, or
 * close() is called. submit() is all-or-nothing: a rejected submission
 * leaves the pending request untouched.
 */
class RemoteOracle final : public Oracle {
 public:
  explicit RemoteOracle(int num_classes,
                        std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  std::vector<int> label(const LabelRequest& request) override;

  /// Current request awaiting labels, if any.
  std::optional<LabelRequest> pending() const;
  /// Number of requests issued so far.
  std::uint64_t request_count() const;

  /// Throws ValidationError (listing missing, unexpected and out-of-range
  /// entries) unless `labels` covers the pending ids exactly.
  void submit(const std::map<std::string, int>& labels);

  /// Blocks until a request newer than `after` is issued or the oracle is
  /// closed. Returns the latest request count.
  std::uint64_t wait_for_request(std::uint64_t after) const;

  /// Fails any blocked or future label() call with OracleError.
  void close();
  bool closed() const;

 private:
  int num_classes_;
  std::optional<std::chrono::milliseconds> timeout_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::optional<LabelRequest> pending_;
  std::optional<std::vector<int>> answer_;
  std::uint64_t requests_ = 0;
  bool closed_ = false;
};

}  // namespace gpal::al
