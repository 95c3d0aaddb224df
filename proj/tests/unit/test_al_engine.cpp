#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gpal/al_engine.hpp"
#include "gpal/error.hpp"
#include "gpal/report_io.hpp"
#include "test_support.hpp"

using namespace gpal;

namespace {

al::ALConfig fast_config(acq::Strategy s = acq::Strategy::Uncertainty,
                         al::ModelKind kind = al::ModelKind::Svgp) {
  al::ALConfig cfg;
  cfg.initial_size = 12;
  cfg.batch_size = 8;
  cfg.max_cycles = 3;
  cfg.strategy = s;
  cfg.model_kind = kind;
  cfg.num_inducing = 16;
  cfg.mc_samples_train = 16;
  cfg.mc_samples_predict = 32;
  cfg.train.epochs = 4;
  cfg.train.learning_rate = 0.03;
  cfg.seed = 7;
  return cfg;
}

al::RunReport run(const data::FeatureDataset& ds, const al::ALConfig& cfg) {
  al::SimulatedOracle oracle(ds);
  return al::run_al(ds, cfg, oracle);
}

al::RunReport constant_curve(double acc, std::size_t points) {
  al::RunReport r;
  for (std::size_t k = 0; k < points; ++k)
    r.curve.push_back({static_cast<int>(k), 10 + 5 * k, acc, acc, 0.0});
  return r;
}

/// Oracle that answers from ground truth a fixed number of times, then fails.
class FlakyOracle final : public al::Oracle {
 public:
  FlakyOracle(const data::FeatureDataset& ds, int answers) : inner_(ds), left_(answers) {}
  std::vector<int> label(const al::LabelRequest& r) override {
    if (left_-- <= 0) throw OracleError("annotator went home");
    return inner_.label(r);
  }

 private:
  al::SimulatedOracle inner_;
  int left_;
};

}  // namespace

TEST(Config, Validation) {
  auto cfg = fast_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = fast_config();
  cfg.max_cycles = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = fast_config();
  cfg.stop_accuracy = 1.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  EXPECT_THROW(fast_config(acq::Strategy::Uncertainty, al::ModelKind::Softmax).validate(), ValidationError);
  EXPECT_NO_THROW(fast_config(acq::Strategy::Random, al::ModelKind::Softmax).validate());
}

TEST(RunAl, ZeroCyclesIsTheInitialEvaluationOnly) {
  const auto ds = gpal::testing::small_blobs();
  auto cfg = fast_config();
  cfg.max_cycles = 0;
  const auto rep = run(ds, cfg);
  ASSERT_EQ(rep.curve.size(), 1u);
  EXPECT_TRUE(rep.batches.empty());
  EXPECT_EQ(rep.curve[0].cycle, 0);
  EXPECT_EQ(rep.curve[0].labeled_count, 12u);
  EXPECT_TRUE(rep.complete);
  EXPECT_EQ(rep.stop_reason, "max_cycles");
  EXPECT_THROW(al::batch_composition(rep), ValidationError);
}

TEST(RunAl, PartitionInvariantsHoldEveryCycle) {
  const auto ds = gpal::testing::small_blobs();
  for (auto s : {acq::Strategy::Uncertainty, acq::Strategy::Random}) {
    const auto cfg = fast_config(s);
    al::SimulatedOracle oracle(ds);
    const auto pool = ds.indices(data::Split::TrainPool);
    std::size_t expected = cfg.initial_size;
    int calls = 0;
    al::run_al(ds, cfg, oracle, [&](const al::ActiveLearner& l) {
      ++calls;
      const auto& st = l.state();
      ASSERT_EQ(st.labeled.size(), expected);
      ASSERT_EQ(st.labeled.size() + st.pool.size(), pool.size());
      std::set<std::size_t> u(st.labeled.begin(), st.labeled.end());
      ASSERT_EQ(u.size(), st.labeled.size());
      for (auto i : st.pool) ASSERT_TRUE(u.insert(i).second) << "pool overlaps labeled";
      ASSERT_EQ(u, std::set<std::size_t>(pool.begin(), pool.end()));
      ASSERT_TRUE(std::is_sorted(st.pool.begin(), st.pool.end()));
      expected += cfg.batch_size;
    });
    EXPECT_EQ(calls, cfg.max_cycles + 1);
  }
}

TEST(RunAl, ReportShape) {
  const auto ds = gpal::testing::small_blobs();
  const auto rep = run(ds, fast_config());
  ASSERT_EQ(rep.curve.size(), 4u);
  ASSERT_EQ(rep.batches.size(), 3u);
  for (std::size_t k = 0; k < rep.curve.size(); ++k) {
    EXPECT_EQ(rep.curve[k].cycle, static_cast<int>(k));
    EXPECT_EQ(rep.curve[k].labeled_count, 12u + 8u * k);
    EXPECT_GE(rep.curve[k].test_accuracy, 0.0);
    EXPECT_LE(rep.curve[k].test_accuracy, 1.0);
  }
  std::set<std::string> ids;
  for (const auto& b : rep.batches) {
    EXPECT_EQ(b.indices.size(), 8u);
    EXPECT_TRUE(std::is_sorted(b.scores.rbegin(), b.scores.rend()));
    for (std::size_t k = 0; k < b.ids.size(); ++k) {
      EXPECT_TRUE(ids.insert(b.ids[k]).second);
      EXPECT_EQ(b.labels[k], ds.label_at(b.indices[k]));
      EXPECT_EQ(ds.splits[b.indices[k]], data::Split::TrainPool);
    }
  }
  EXPECT_EQ(rep.train_pool_size, 100u);
  EXPECT_EQ(rep.test_size, 35u);
  ASSERT_TRUE(rep.pool_baseline);
  EXPECT_NEAR(rep.pool_baseline->fractions[2], 0.1, 1e-15);
}

TEST(RunAl, BitDeterministic) {
  const auto ds = gpal::testing::small_blobs();
  for (auto kind : {al::ModelKind::Svgp, al::ModelKind::Softmax}) {
    const auto cfg = fast_config(acq::Strategy::Random, kind);
    const auto a = run(ds, cfg);
    const auto b = run(ds, cfg);
    EXPECT_EQ(io::report_json(a), io::report_json(b));
    for (std::size_t k = 0; k < a.curve.size(); ++k)
      EXPECT_EQ(std::memcmp(&a.curve[k].test_accuracy, &b.curve[k].test_accuracy, sizeof(double)), 0);
  }
  const auto u1 = run(ds, fast_config());
  const auto u2 = run(ds, fast_config());
  EXPECT_EQ(io::report_json(u1), io::report_json(u2));
  auto other = fast_config();
  other.seed = 8;
  EXPECT_NE(io::report_json(run(ds, other)), io::report_json(u1));
}

TEST(RunAl, StopAccuracyEndsEarly) {
  const auto ds = gpal::testing::small_blobs();
  auto cfg = fast_config(acq::Strategy::Random, al::ModelKind::Softmax);
  cfg.stop_accuracy = 1e-9;
  const auto rep = run(ds, cfg);
  EXPECT_EQ(rep.curve.size(), 1u);
  EXPECT_EQ(rep.stop_reason, "stop_accuracy");
}

TEST(RunAl, PoolExhaustionCapsTheLastBatch) {
  const auto ds = gpal::testing::small_blobs(3, {10, 6, 4}, {5, 5, 5});
  auto cfg = fast_config(acq::Strategy::Random, al::ModelKind::Softmax);
  cfg.initial_size = 6;
  cfg.batch_size = 5;
  cfg.max_cycles = 10;
  const auto rep = run(ds, cfg);
  ASSERT_EQ(rep.batches.size(), 3u);
  EXPECT_EQ(rep.batches.back().indices.size(), 4u);
  EXPECT_EQ(rep.curve.back().labeled_count, 20u);
  EXPECT_EQ(rep.stop_reason, "pool_exhausted");
  EXPECT_TRUE(rep.complete);
}

TEST(RunAl, OracleFailureGivesPartialReport) {
  const auto ds = gpal::testing::small_blobs();
  FlakyOracle oracle(ds, 1);
  const auto rep = al::run_al(ds, fast_config(), oracle);
  EXPECT_FALSE(rep.complete);
  EXPECT_EQ(rep.stop_reason, "oracle_failure");
  EXPECT_NE(rep.error.find("annotator"), std::string::npos);
  EXPECT_EQ(rep.curve.size(), 2u);
  EXPECT_EQ(rep.batches.size(), 1u);
}

TEST(RunAl, InitialSetComesFromPreLabeledSamples) {
  auto ds = gpal::testing::small_blobs();
  const auto pool = ds.indices(data::Split::TrainPool);
  for (std::size_t k = 20; k < pool.size(); ++k) ds.labels[pool[k]].reset();
  auto cfg = fast_config();
  cfg.initial_size = 50;  // more than the 20 labeled ones: capped
  cfg.max_cycles = 0;
  al::ActiveLearner learner(ds, cfg);
  EXPECT_EQ(learner.state().labeled.size(), 20u);
  for (auto i : learner.state().labeled) EXPECT_LT(i, pool[20]);
  EXPECT_FALSE(learner.report().pool_baseline);

  for (auto i : pool) ds.labels[i].reset();
  EXPECT_THROW(al::ActiveLearner(ds, cfg), ValidationError);
}

TEST(RunAl, RequiresTestSplit) {
  const auto ds = gpal::testing::small_blobs(3, {20, 20, 20}, {});
  EXPECT_THROW(run(ds, fast_config()), ValidationError);
}

TEST(Composition, TableOneFixture) {
  // Pool fractions 57.14/39.22/3.64 over 10000 samples; batch of 140 with 67/36.
  al::RunReport rep;
  rep.class_names = {"normal", "pneumonia", "covid"};
  rep.pool_baseline = data::class_stats_from_labels(
      [] {
        std::vector<int> y(5714, 0);
        y.insert(y.end(), 3922, 1);
        y.insert(y.end(), 364, 2);
        return y;
      }(),
      3);
  al::BatchRecord b;
  b.cycle = 1;
  b.labels.assign(37, 0);
  b.labels.insert(b.labels.end(), 67, 1);
  b.labels.insert(b.labels.end(), 36, 2);
  rep.batches.push_back(b);
  const auto t = al::batch_composition(rep);
  ASSERT_TRUE(t.baseline);
  const auto text = al::format_composition(t);
  EXPECT_NE(text.find("39.22%"), std::string::npos) << text;
  EXPECT_NE(text.find("3.64%"), std::string::npos) << text;
  EXPECT_NE(text.find("47.86%"), std::string::npos) << text;
  EXPECT_NE(text.find("25.71%"), std::string::npos) << text;
  EXPECT_NEAR(t.rows[0].fractions[1], 0.4786, 5e-5);
  EXPECT_NEAR(t.rows[0].fractions[2], 0.2571, 5e-5);
  EXPECT_NEAR(t.baseline->fractions[2], 0.0364, 5e-5);
}

TEST(Composition, SingleClassBatchAndRowSums) {
  al::RunReport rep;
  rep.class_names = {"a", "b", "c"};
  al::BatchRecord b;
  b.cycle = 1;
  b.labels = {0, 0, 0, 0};
  rep.batches.push_back(b);
  gpal::testing::Rng rng(5);
  for (int c = 2; c < 30; ++c) {
    al::BatchRecord r;
    r.cycle = c;
    r.labels = gpal::testing::random_labels(rng, static_cast<std::size_t>(gpal::testing::uniform_int(rng, 1, 50)), 3);
    rep.batches.push_back(r);
  }
  const auto t = al::batch_composition(rep);
  EXPECT_EQ(t.rows[0].fractions, (std::vector<double>{1.0, 0.0, 0.0}));
  EXPECT_FALSE(t.baseline);
  for (const auto& row : t.rows) {
    double s = 0;
    for (double f : row.fractions) s += f;
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Aggregate, MeanAndSampleStd) {
  const std::vector<al::RunReport> two{constant_curve(0.8, 4), constant_curve(0.9, 4)};
  const auto agg = al::aggregate_runs(two);
  ASSERT_EQ(agg.mean.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(agg.mean[k], 0.85, 1e-12);
    EXPECT_NEAR(agg.std[k], 0.0707, 1e-4);
    EXPECT_NEAR(agg.std[k], std::sqrt(0.005), 1e-12);
  }
  const std::vector<al::RunReport> one{constant_curve(0.7, 3)};
  for (double s : al::aggregate_runs(one).std) EXPECT_EQ(s, 0.0);
}

TEST(Aggregate, MismatchedRunsRejected) {
  const std::vector<al::RunReport> lens{constant_curve(0.8, 4), constant_curve(0.9, 3)};
  EXPECT_THROW(al::aggregate_runs(lens), ValidationError);
  EXPECT_THROW(al::aggregate_runs({}), ValidationError);
  auto other = constant_curve(0.9, 4);
  other.config.strategy = acq::Strategy::Random;
  const std::vector<al::RunReport> mixed{constant_curve(0.8, 4), other};
  EXPECT_THROW(al::aggregate_runs(mixed), ValidationError);
}

TEST(Evaluate, UniformPredictionTiesToClassZero) {
  data::FeatureDataset ds;
  ds.features = Eigen::MatrixXd::Zero(1, 2);
  ds.labels = {0};
  ds.sample_ids = {"t0"};
  ds.image_uris = {std::nullopt};
  ds.class_names = {"a", "b", "c"};
  ds.splits = {data::Split::Test};
  EXPECT_EQ(al::evaluate(al::TrainedModel(baseline::zero_model(3, 2)), ds), 1.0);
  ds.labels = {1};
  EXPECT_EQ(al::evaluate(al::TrainedModel(baseline::zero_model(3, 2)), ds), 0.0);
  ds.labels = {std::nullopt};
  EXPECT_THROW(al::evaluate(al::TrainedModel(baseline::zero_model(3, 2)), ds), ValidationError);
  ds.splits = {data::Split::TrainPool};
  ds.labels = {0};
  EXPECT_THROW(al::evaluate(al::TrainedModel(baseline::zero_model(3, 2)), ds), ValidationError);
}

TEST(Evaluate, PerfectMarginModel) {
  data::FeatureDataset ds;
  ds.features.resize(4, 2);
  ds.features << 5, 0, 0, 5, 6, 1, 1, 7;
  ds.labels = {0, 1, 0, 1};
  ds.sample_ids = {"a", "b", "c", "d"};
  ds.image_uris.assign(4, std::nullopt);
  ds.class_names = {"x", "y"};
  ds.splits.assign(4, data::Split::Test);
  baseline::SoftmaxModel m;
  m.weights = Eigen::MatrixXd::Identity(2, 2) * 10.0;
  m.bias = Eigen::VectorXd::Zero(2);
  EXPECT_EQ(al::evaluate(al::TrainedModel(m), ds), 1.0);
  const auto acc = al::evaluate_detailed(al::TrainedModel(m), ds, data::Split::Test);
  EXPECT_EQ(acc.balanced, 1.0);
}

TEST(Evaluate, BalancedAccuracyIsMeanRecall) {
  data::FeatureDataset ds;
  ds.features = Eigen::MatrixXd::Zero(4, 1);
  ds.labels = {0, 0, 0, 1};
  ds.sample_ids = {"a", "b", "c", "d"};
  ds.image_uris.assign(4, std::nullopt);
  ds.class_names = {"x", "y"};
  ds.splits.assign(4, data::Split::Test);
  const auto acc = al::evaluate_detailed(al::TrainedModel(baseline::zero_model(2, 1)), ds, data::Split::Test);
  EXPECT_EQ(acc.overall, 0.75);
  EXPECT_EQ(acc.balanced, 0.5);
}

TEST(Evaluate, SvgpMatchesIndependentArgmax) {
  const auto ds = gpal::testing::small_blobs(11, {60, 30, 10}, {20, 20, 10});
  const auto pool = ds.indices(data::Split::TrainPool);
  auto model = svgp::init_model(ds, pool, 16, 1);
  TrainConfig tc;
  tc.epochs = 5;
  tc.learning_rate = 0.03;
  model = svgp::train(model, ds, pool, tc).model;
  const auto test = ds.indices(data::Split::Test);
  ASSERT_EQ(test.size(), 50u);
  const std::uint64_t seed = 99;
  const auto probs = svgp::predict_proba(model, ds.rows(test), model.mc_samples_predict, seed);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < probs.size(); ++r) {
    int best = 0;
    for (int c = 1; c < probs.num_classes(); ++c)
      if (probs.mean(r, c) > probs.mean(r, best)) best = c;
    correct += best == ds.label_at(test[static_cast<std::size_t>(r)]) ? 1 : 0;
  }
  EXPECT_EQ(al::evaluate(al::TrainedModel(model), ds, data::Split::Test, seed),
            static_cast<double>(correct) / 50.0);
}

TEST(ArgmaxRows, TiesToLowestIndex) {
  Eigen::MatrixXd p(3, 3);
  p << 0.2, 0.4, 0.4, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.1, 0.1, 0.8;
  EXPECT_EQ(al::argmax_rows(p), (std::vector<int>{1, 0, 2}));
}

TEST(ModelKind, NamesRoundTrip) {
  for (auto k : {al::ModelKind::Svgp, al::ModelKind::Softmax})
    EXPECT_EQ(al::model_kind_from_string(al::to_string(k)), k);
  EXPECT_THROW(al::model_kind_from_string("mlp"), ValidationError);
}
