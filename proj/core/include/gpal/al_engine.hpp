#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "gpal/acquisition.hpp"
#include "gpal/dataset.hpp"
#include "gpal/oracle.hpp"
#include "gpal/softmax_baseline.hpp"
#include "gpal/svgp.hpp"
#include "gpal/train_config.hpp"

namespace gpal::al {

enum class ModelKind { Svgp, Softmax };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

struct ALConfig {
  std::size_t initial_size = 40;
  std::size_t batch_size = 40;
  int max_cycles = 10;
  std::optional<double> stop_accuracy;
  acq::Strategy strategy = acq::Strategy::Uncertainty;
  ModelKind model_kind = ModelKind::Svgp;
  TrainConfig train;
  std::size_t num_inducing = 128;
  int mc_samples_train = 256;
  int mc_samples_predict = 512;
  bool eval_every_cycle = true;
  std::uint64_t seed = 0;
  bool warm_start = false;
  bool l2_normalize = false;

  /// Throws ValidationError; softmax with uncertainty acquisition is rejected
  /// because the baseline has no predictive variance.
  void validate() const;
  bool operator==(const ALConfig&) const = default;
};

using TrainedModel = std::variant<svgp::SvgpModel, baseline::SoftmaxModel>;

/// Class probabilities, n x C. For the GP this is the Monte Carlo mean.
Eigen::MatrixXd predict_probabilities(const TrainedModel& model,
                                      const Eigen::Ref<const Eigen::MatrixXd>& X,
                                      std::uint64_t seed);

/// Row-wise argmax, ties to the lowest class index.
std::vector<int> argmax_rows(const Eigen::Ref<const Eigen::MatrixXd>& probs);

struct Accuracy {
  double overall = 0.0;
  double balanced = 0.0;  // mean per-class recall over classes present in the split
};

Accuracy evaluate_detailed(const TrainedModel& model, const data::FeatureDataset& ds, data::Split split,
                           std::uint64_t seed = 0);

/// Fraction of argmax-correct predictions on the split. Throws on an empty
/// split or withheld labels.
double evaluate(const TrainedModel& model, const data::FeatureDataset& ds,
                data::Split split = data::Split::Test, std::uint64_t seed = 0);

struct CycleRecord {
  int cycle = 0;
  std::size_t labeled_count = 0;
  double test_accuracy = 0.0;      // NaN when the cycle was not evaluated
  double balanced_accuracy = 0.0;  // NaN when the cycle was not evaluated
  double wall_seconds = 0.0;       // in-memory only; never serialized
};

struct BatchRecord {
  int cycle = 0;
  std::vector<std::size_t> indices;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<double> scores;
};

struct ALState {
  std::vector<std::size_t> labeled;  // dataset indices, in labeling order
  std::vector<std::size_t> pool;     // dataset indices, ascending
  int cycle = 0;
  std::vector<CycleRecord> records;
  std::vector<BatchRecord> batches;
};

struct RunReport {
  ALConfig config;
  std::vector<std::string> class_names;
  std::vector<CycleRecord> curve;
  std::vector<BatchRecord> batches;
  /// Class fractions over the whole train_pool when its labels are known.
  std::optional<data::ClassStats> pool_baseline;
  std::size_t train_pool_size = 0;
  std::size_t test_size = 0;
  bool complete = true;
  std::string stop_reason;
  std::string error;
};

/**
 * Stepwise active-learning loop. run_al() drives it with an oracle; the
 * label service drives the same object through a RemoteOracle.
 *
 * The engine works on a private copy of the dataset in which train_pool
 * labels are only visible once acquired: the initial set is drawn from
 * train_pool samples that already carry a label, every other label comes
 * from the oracle.
 */
class ActiveLearner {
 public:
  ActiveLearner(const data::FeatureDataset& ds, ALConfig cfg);

  /// Trains on the initial set and records the cycle-0 evaluation.
  void bootstrap();

  /// Next batch to label, or nullopt when the run is over.
  std::optional<acq::BatchSelection> propose();

  /// Accepts labels for the proposed batch (selection order), moves it from
  /// pool to labeled, retrains and evaluates.
  void commit(const acq::BatchSelection& batch, std::span<const int> labels);

  LabelRequest request_for(const acq::BatchSelection& batch) const;

  bool finished() const { return !stop_reason_.empty(); }
  const std::string& stop_reason() const { return stop_reason_; }
  const ALState& state() const { return state_; }
  const TrainedModel& model() const { return *model_; }
  const ALConfig& config() const { return cfg_; }
  const data::FeatureDataset& data() const { return work_; }

  RunReport report() const;

 private:
  void fit_and_evaluate(bool force_eval);
  void check_partition() const;
  void update_stop();

  ALConfig cfg_;
  data::FeatureDataset work_;
  std::vector<std::size_t> train_pool_;
  std::vector<std::size_t> test_;
  std::optional<data::ClassStats> pool_baseline_;
  ALState state_;
  std::optional<TrainedModel> model_;
  std::string stop_reason_;
};

using ProgressFn = std::function<void(const ActiveLearner&)>;

/// Full experiment. Oracle failures end the run with complete = false.
/// `progress` fires after every evaluation, before the next selection.
RunReport run_al(const data::FeatureDataset& ds, const ALConfig& cfg, Oracle& oracle,
                 const ProgressFn& progress = {});

/// Same loop over an already constructed (not yet bootstrapped) learner.
RunReport run_al(ActiveLearner& learner, Oracle& oracle, const ProgressFn& progress = {});

struct CompositionRow {
  int cycle = 0;  // 0 is the whole-pool baseline
  std::vector<double> fractions;
};

struct CompositionTable {
  std::vector<std::string> class_names;
  std::optional<CompositionRow> baseline;
  std::vector<CompositionRow> rows;
};

/// Per-batch class fractions plus the whole-pool baseline row.
CompositionTable batch_composition(const RunReport& report);

/// Fixed-width percentage table (two decimals), one row per batch.
std::string format_composition(const CompositionTable& table);

struct AggregateCurve {
  std::vector<int> cycle;
  std::vector<std::size_t> labeled_count;
  std::vector<double> mean;
  std::vector<double> std;  // sample standard deviation; 0 for a single run
  std::size_t runs = 0;
};

/// Pointwise mean and standard deviation of test accuracy across runs.
AggregateCurve aggregate_runs(std::span<const RunReport> reports);

}  // namespace gpal::al
