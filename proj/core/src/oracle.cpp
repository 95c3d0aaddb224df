#include "gpal/oracle.hpp"

#include <algorithm>
#include <sstream>

#include "gpal/error.hpp"

namespace gpal::al {

SimulatedOracle::SimulatedOracle(const data::FeatureDataset& ds) : ds_(ds) {
  by_id_.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) by_id_.emplace(ds.sample_ids[i], i);
}

std::vector<int> SimulatedOracle::label(const LabelRequest& request) {
  ++queries_;
  std::vector<int> out;
  out.reserve(request.ids.size());
  for (const auto& id : request.ids) {
    const auto it = by_id_.find(id);
    if (it == by_id_.end()) throw OracleError("simulated oracle: unknown sample id '" + id + "'");
    const auto& lab = ds_.labels[it->second];
    if (!lab) throw OracleError("simulated oracle: no ground truth for '" + id + "'");
    out.push_back(*lab);
  }
  return out;
}

RemoteOracle::RemoteOracle(int num_classes, std::optional<std::chrono::milliseconds> timeout)
    : num_classes_(num_classes), timeout_(timeout) {}

std::vector<int> RemoteOracle::label(const LabelRequest& request) {
  std::unique_lock lock(mu_);
  if (closed_) throw OracleError("remote oracle closed");
  pending_ = request;
  answer_.reset();
  ++requests_;
  cv_.notify_all();
  const auto ready = [&] { return answer_.has_value() || closed_; };
  if (timeout_) {
    if (!cv_.wait_for(lock, *timeout_, ready)) {
      pending_.reset();
      throw OracleError("remote oracle timed out waiting for labels");
    }
  } else {
    cv_.wait(lock, ready);
  }
  if (!answer_) {
    pending_.reset();
    throw OracleError("remote oracle closed while waiting for labels");
  }
  auto out = std::move(*answer_);
  answer_.reset();
  pending_.reset();
  return out;
}

std::optional<LabelRequest> RemoteOracle::pending() const {
  std::lock_guard lock(mu_);
  if (answer_) return std::nullopt;  // answered, engine not yet resumed
  return pending_;
}

std::uint64_t RemoteOracle::request_count() const {
  std::lock_guard lock(mu_);
  return requests_;
}

void RemoteOracle::submit(const std::map<std::string, int>& labels) {
  std::lock_guard lock(mu_);
  if (!pending_ || answer_) throw ValidationError("no batch is awaiting labels");
  std::vector<std::string> missing, unexpected, bad_class;
  std::vector<int> answer;
  answer.reserve(pending_->ids.size());
  for (const auto& id : pending_->ids) {
    const auto it = labels.find(id);
    if (it == labels.end()) {
      missing.push_back(id);
      continue;
    }
    if (it->second < 0 || it->second >= num_classes_) bad_class.push_back(id);
    answer.push_back(it->second);
  }
  for (const auto& [id, _] : labels)
    if (std::find(pending_->ids.begin(), pending_->ids.end(), id) == pending_->ids.end())
      unexpected.push_back(id);
  if (!missing.empty() || !unexpected.empty() || !bad_class.empty()) {
    std::ostringstream msg;
    msg << "label submission does not match the pending batch";
    auto list = [&](const char* what, const std::vector<std::string>& ids) {
      if (ids.empty()) return;
      msg << "; " << what << ":";
      for (const auto& id : ids) msg << ' ' << id;
    };
    list("missing", missing);
    list("unexpected", unexpected);
    list("class out of range", bad_class);
    throw ValidationError(msg.str());
  }
  answer_ = std::move(answer);
  cv_.notify_all();
}

std::uint64_t RemoteOracle::wait_for_request(std::uint64_t after) const {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return requests_ > after || closed_; });
  return requests_;
}

void RemoteOracle::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

bool RemoteOracle::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

}  // namespace gpal::al
