#include "gpal/al_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gpal/error.hpp"
#include "gpal/log.hpp"
#include "gpal/seed.hpp"

namespace gpal::al {
namespace {

// Stream tags for derive_seed.
enum : std::uint64_t {
  kInitialDraw = 1,
  kModelInit = 2,
  kTrain = 3,
  kAcquire = 4,
  kEvaluate = 5,
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::string_view to_string(ModelKind k) { return k == ModelKind::Svgp ? "svgp" : "softmax"; }

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "svgp") return ModelKind::Svgp;
  if (s == "softmax") return ModelKind::Softmax;
  throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

void ALConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (initial_size < 1) throw ValidationError("initial_size must be >= 1");
  if (max_cycles < 0) throw ValidationError("max_cycles must be >= 0");
  if (stop_accuracy && !(*stop_accuracy > 0.0 && *stop_accuracy <= 1.0))
    throw ValidationError("stop_accuracy must lie in (0, 1]");
  if (num_inducing < 1) throw ValidationError("num_inducing must be >= 1");
  if (mc_samples_train < 1) throw ValidationError("mc_samples_train must be >= 1");
  if (mc_samples_predict < 2) throw ValidationError("mc_samples_predict must be >= 2");
  if (model_kind == ModelKind::Softmax && strategy == acq::Strategy::Uncertainty)
    throw ValidationError("the softmax baseline has no predictive variance; use strategy 'random'");
  train.validate();
}

Eigen::MatrixXd predict_probabilities(const TrainedModel& model,
                                      const Eigen::Ref<const Eigen::MatrixXd>& X,
                                      std::uint64_t seed) {
  if (const auto* gp = std::get_if<svgp::SvgpModel>(&model))
    return svgp::predict_proba(*gp, X, gp->mc_samples_predict, seed).mean;
  return baseline::predict_softmax(std::get<baseline::SoftmaxModel>(model), X);
}

std::vector<int> argmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()), 0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Accuracy evaluate_detailed(const TrainedModel& model, const data::FeatureDataset& ds, data::Split split,
                           std::uint64_t seed) {
  const auto idx = ds.indices(split);
  if (idx.empty()) throw ValidationError("evaluate: split '" + std::string(to_string(split)) + "' is empty");
  const auto pred = argmax_rows(predict_probabilities(model, ds.rows(idx), seed));
  const auto C = static_cast<std::size_t>(ds.num_classes());
  std::vector<std::size_t> hits(C, 0), totals(C, 0);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int y = ds.label_at(idx[r]);
    ++totals[static_cast<std::size_t>(y)];
    if (pred[r] == y) {
      ++correct;
      ++hits[static_cast<std::size_t>(y)];
    }
  }
  Accuracy acc;
  acc.overall = static_cast<double>(correct) / static_cast<double>(idx.size());
  double recall_sum = 0.0;
  int present = 0;
  for (std::size_t c = 0; c < C; ++c) {
    if (totals[c] == 0) continue;
    recall_sum += static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    ++present;
  }
  acc.balanced = recall_sum / present;
  return acc;
}

double evaluate(const TrainedModel& model, const data::FeatureDataset& ds, data::Split split,
                std::uint64_t seed) {
  return evaluate_detailed(model, ds, split, seed).overall;
}

ActiveLearner::ActiveLearner(const data::FeatureDataset& ds, ALConfig cfg)
    : cfg_(std::move(cfg)), work_(ds) {
  cfg_.validate();
  work_.validate();
  if (cfg_.l2_normalize) data::l2_normalize_rows(work_);

  train_pool_ = work_.indices(data::Split::TrainPool);
  test_ = work_.indices(data::Split::Test);
  if (train_pool_.empty()) throw ValidationError("dataset has no train_pool samples");
  if (test_.empty()) throw ValidationError("dataset has no test samples");
  for (auto i : test_) (void)work_.label_at(i);

  bool pool_fully_labeled = true;
  std::vector<std::size_t> candidates;
  for (auto i : train_pool_) {
    if (work_.labels[i])
      candidates.push_back(i);
    else
      pool_fully_labeled = false;
  }
  if (pool_fully_labeled) pool_baseline_ = data::class_stats(work_, train_pool_);
  if (candidates.empty())
    throw ValidationError("no pre-labeled train_pool samples to seed the initial set");

  std::size_t k = cfg_.initial_size;
  if (k > candidates.size()) {
    log().warn("initial_size {} exceeds the {} pre-labeled samples; using all of them", k,
               candidates.size());
    k = candidates.size();
  }
  if (k < static_cast<std::size_t>(work_.num_classes()))
    log().warn("initial_size {} is below the class count {}", k, work_.num_classes());

  std::mt19937_64 rng(derive_seed(cfg_.seed, {kInitialDraw}));
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[u(rng)]);
  }
  state_.labeled.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<bool> in_labeled(work_.size(), false);
  for (auto i : state_.labeled) in_labeled[i] = true;
  for (auto i : train_pool_) {
    if (in_labeled[i]) continue;
    state_.pool.push_back(i);
    // The engine only learns pool labels through the oracle.
    work_.labels[i].reset();
  }
  check_partition();
}

void ActiveLearner::check_partition() const {
  if (state_.labeled.size() + state_.pool.size() != train_pool_.size())
    throw std::logic_error("labeled/pool partition lost samples");
  std::vector<char> seen(work_.size(), 0);
  for (auto i : state_.labeled) {
    if (seen[i]++ != 0) throw std::logic_error("duplicate labeled index");
    if (!work_.labels[i]) throw std::logic_error("labeled sample without label");
  }
  for (auto i : state_.pool)
    if (seen[i]++ != 0) throw std::logic_error("pool overlaps labeled set");
  for (auto i : train_pool_)
    if (seen[i] != 1) throw std::logic_error("train_pool sample missing from partition");
}

void ActiveLearner::fit_and_evaluate(bool force_eval) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cycle = static_cast<std::uint64_t>(state_.cycle);
  TrainConfig tcfg = cfg_.train;
  tcfg.seed = derive_seed(cfg_.seed, {kTrain, cfg_.train.seed, cycle});

  if (cfg_.model_kind == ModelKind::Svgp) {
    svgp::SvgpModel init;
    if (cfg_.warm_start && model_)
      init = std::get<svgp::SvgpModel>(*model_);
    else
      init = svgp::init_model(work_, state_.labeled, cfg_.num_inducing,
                              derive_seed(cfg_.seed, {kModelInit, cycle}));
    init.mc_samples = cfg_.mc_samples_train;
    init.mc_samples_predict = cfg_.mc_samples_predict;
    model_ = svgp::train(std::move(init), work_, state_.labeled, tcfg).model;
  } else {
    const baseline::SoftmaxModel* init = nullptr;
    if (cfg_.warm_start && model_) init = &std::get<baseline::SoftmaxModel>(*model_);
    model_ = baseline::train_softmax(work_, state_.labeled, tcfg, init).model;
  }

  CycleRecord rec;
  rec.cycle = state_.cycle;
  rec.labeled_count = state_.labeled.size();
  rec.test_accuracy = kNaN;
  rec.balanced_accuracy = kNaN;
  if (force_eval || cfg_.eval_every_cycle || cfg_.stop_accuracy) {
    const auto acc = evaluate_detailed(*model_, work_, data::Split::Test,
                                       derive_seed(cfg_.seed, {kEvaluate, cycle}));
    rec.test_accuracy = acc.overall;
    rec.balanced_accuracy = acc.balanced;
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  log().info("cycle {} labeled {} accuracy {:.4f} ({:.2f}s)", rec.cycle, rec.labeled_count,
             rec.test_accuracy, rec.wall_seconds);
  state_.records.push_back(rec);
}

void ActiveLearner::update_stop() {
  const auto& last = state_.records.back();
  if (cfg_.stop_accuracy && last.test_accuracy >= *cfg_.stop_accuracy)
    stop_reason_ = "stop_accuracy";
  else if (state_.cycle >= cfg_.max_cycles)
    stop_reason_ = "max_cycles";
  else if (state_.pool.empty())
    stop_reason_ = "pool_exhausted";
}

void ActiveLearner::bootstrap() {
  if (!state_.records.empty()) throw std::logic_error("bootstrap called twice");
  fit_and_evaluate(/*force_eval=*/true);
  update_stop();
}

std::optional<acq::BatchSelection> ActiveLearner::propose() {
  if (state_.records.empty()) throw std::logic_error("propose before bootstrap");
  if (finished()) return std::nullopt;
  const int cycle = state_.cycle + 1;
  acq::BatchSelection sel;
  if (cfg_.strategy == acq::Strategy::Random) {
    sel = acq::select_random(state_.pool, cfg_.batch_size, cfg_.seed, cycle);
  } else {
    const auto& gp = std::get<svgp::SvgpModel>(*model_);
    const auto post = svgp::predict_proba(gp, work_.rows(state_.pool), gp.mc_samples_predict,
                                          derive_seed(cfg_.seed, {kAcquire, static_cast<std::uint64_t>(cycle)}));
    const auto scores = acq::score_uncertainty(post, state_.pool);
    sel = acq::select_top(scores, cfg_.batch_size, cycle);
  }
  if (sel.pool_exhausted) {
    stop_reason_ = "pool_exhausted";
    return std::nullopt;
  }
  return sel;
}

LabelRequest ActiveLearner::request_for(const acq::BatchSelection& batch) const {
  LabelRequest req;
  req.cycle = batch.cycle;
  req.scores = batch.scores;
  for (auto i : batch.indices) {
    req.ids.push_back(work_.sample_ids[i]);
    req.image_uris.push_back(work_.image_uris[i]);
  }
  return req;
}

void ActiveLearner::commit(const acq::BatchSelection& batch, std::span<const int> labels) {
  if (finished()) throw std::logic_error("commit after the run finished");
  if (batch.cycle != state_.cycle + 1) throw ValidationError("stale batch: cycle mismatch");
  if (labels.size() != batch.indices.size()) throw ValidationError("one label per selected sample required");
  for (int y : labels)
    if (y < 0 || y >= work_.num_classes()) throw ValidationError("label out of range: " + std::to_string(y));

  std::vector<char> in_pool(work_.size(), 0);
  for (auto i : state_.pool) in_pool[i] = 1;
  for (auto i : batch.indices) {
    if (i >= work_.size() || !in_pool[i])
      throw std::logic_error("selected sample is not in the pool");
    in_pool[i] = 0;  // also catches duplicates on the second occurrence
  }

  BatchRecord rec;
  rec.cycle = batch.cycle;
  rec.indices = batch.indices;
  rec.scores = batch.scores;
  rec.labels.assign(labels.begin(), labels.end());
  for (std::size_t k = 0; k < batch.indices.size(); ++k) {
    const auto i = batch.indices[k];
    work_.labels[i] = labels[k];
    state_.labeled.push_back(i);
    rec.ids.push_back(work_.sample_ids[i]);
  }
  std::erase_if(state_.pool, [&](std::size_t i) { return !in_pool[i]; });
  state_.batches.push_back(std::move(rec));
  state_.cycle = batch.cycle;
  check_partition();

  const bool last = state_.cycle >= cfg_.max_cycles || state_.pool.empty();
  fit_and_evaluate(last);
  update_stop();
}

RunReport ActiveLearner::report() const {
  RunReport r;
  r.config = cfg_;
  r.class_names = work_.class_names;
  r.curve = state_.records;
  r.batches = state_.batches;
  r.pool_baseline = pool_baseline_;
  r.train_pool_size = train_pool_.size();
  r.test_size = test_.size();
  r.complete = finished();
  r.stop_reason = stop_reason_;
  return r;
}

RunReport run_al(const data::FeatureDataset& ds, const ALConfig& cfg, Oracle& oracle,
                 const ProgressFn& progress) {
  ActiveLearner learner(ds, cfg);
  return run_al(learner, oracle, progress);
}

RunReport run_al(ActiveLearner& learner, Oracle& oracle, const ProgressFn& progress) {
  const int num_classes = learner.data().num_classes();
  learner.bootstrap();
  if (progress) progress(learner);
  while (auto batch = learner.propose()) {
    std::vector<int> labels;
    try {
      labels = oracle.label(learner.request_for(*batch));
      if (labels.size() != batch->indices.size())
        throw OracleError("oracle returned " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(batch->indices.size()) + " samples");
      for (int y : labels)
        if (y < 0 || y >= num_classes) throw OracleError("oracle returned out-of-range label");
    } catch (const OracleError& e) {
      log().error("oracle failure in cycle {}: {}", batch->cycle, e.what());
      RunReport partial = learner.report();
      partial.complete = false;
      partial.stop_reason = "oracle_failure";
      partial.error = e.what();
      return partial;
    }
    learner.commit(*batch, labels);
    if (progress) progress(learner);
  }
  return learner.report();
}

CompositionTable batch_composition(const RunReport& report) {
  if (report.batches.empty()) throw ValidationError("batch_composition: report has no batches");
  CompositionTable t;
  t.class_names = report.class_names;
  const int C = static_cast<int>(report.class_names.size());
  if (report.pool_baseline) t.baseline = CompositionRow{0, report.pool_baseline->fractions};
  for (const auto& b : report.batches)
    t.rows.push_back({b.cycle, data::class_stats_from_labels(b.labels, C).fractions});
  return t;
}

std::string format_composition(const CompositionTable& table) {
  std::ostringstream out;
  char buf[64];
  out << "batch";
  for (const auto& name : table.class_names) {
    std::snprintf(buf, sizeof buf, " %12s", name.c_str());
    out << buf;
  }
  out << '\n';
  auto row = [&](const std::string& label, const std::vector<double>& f) {
    out << label;
    for (double v : f) {
      std::snprintf(buf, sizeof buf, " %11.2f%%", 100.0 * v);
      out << buf;
    }
    out << '\n';
  };
  if (table.baseline) row("pool ", table.baseline->fractions);
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%-5d", r.cycle);
    row(buf, r.fractions);
  }
  return out.str();
}

AggregateCurve aggregate_runs(std::span<const RunReport> reports) {
  if (reports.empty()) throw ValidationError("aggregate_runs: no reports");
  const auto& first = reports.front();
  AggregateCurve agg;
  agg.runs = reports.size();
  for (const auto& r : reports) {
    if (r.curve.size() != first.curve.size())
      throw ValidationError("aggregate_runs: curves have different lengths");
    if (r.config.strategy != first.config.strategy || r.config.model_kind != first.config.model_kind)
      throw ValidationError("aggregate_runs: runs differ in strategy or model kind");
    for (std::size_t k = 0; k < r.curve.size(); ++k)
      if (r.curve[k].labeled_count != first.curve[k].labeled_count)
        throw ValidationError("aggregate_runs: labeled counts differ at checkpoint " + std::to_string(k));
  }
  const double n = static_cast<double>(reports.size());
  for (std::size_t k = 0; k < first.curve.size(); ++k) {
    double sum = 0.0;
    for (const auto& r : reports) sum += r.curve[k].test_accuracy;
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : reports) ss += (r.curve[k].test_accuracy - mean) * (r.curve[k].test_accuracy - mean);
    agg.cycle.push_back(first.curve[k].cycle);
    agg.labeled_count.push_back(first.curve[k].labeled_count);
    agg.mean.push_back(mean);
    agg.std.push_back(reports.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0);
  }
  return agg;
}

}  // namespace gpal::al
