#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "gpal/error.hpp"
#include "gpal/oracle.hpp"
#include "test_support.hpp"

using namespace gpal;
using namespace std::chrono_literals;

namespace {

al::LabelRequest request(int cycle, std::vector<std::string> ids) {
  al::LabelRequest r;
  r.cycle = cycle;
  r.ids = std::move(ids);
  r.scores.assign(r.ids.size(), 0.0);
  r.image_uris.assign(r.ids.size(), std::nullopt);
  return r;
}

}  // namespace

TEST(SimulatedOracle, AnswersGroundTruthInRequestOrder) {
  const auto ds = gpal::testing::small_blobs();
  al::SimulatedOracle oracle(ds);
  const auto labels = oracle.label(request(1, {ds.sample_ids[5], ds.sample_ids[70], ds.sample_ids[0]}));
  EXPECT_EQ(labels, (std::vector<int>{*ds.labels[5], *ds.labels[70], *ds.labels[0]}));
  EXPECT_EQ(oracle.queries(), 1u);
  EXPECT_THROW(oracle.label(request(2, {"no-such-id"})), OracleError);
}

TEST(SimulatedOracle, WithheldLabelIsAnOracleFailure) {
  auto ds = gpal::testing::small_blobs();
  ds.labels[3].reset();
  al::SimulatedOracle oracle(ds);
  EXPECT_THROW(oracle.label(request(1, {ds.sample_ids[3]})), OracleError);
}

TEST(RemoteOracle, DeliversSubmittedLabels) {
  al::RemoteOracle oracle(3);
  EXPECT_FALSE(oracle.pending());
  EXPECT_EQ(oracle.request_count(), 0u);
  std::vector<int> got;
  std::thread engine([&] { got = oracle.label(request(1, {"a", "b"})); });
  EXPECT_EQ(oracle.wait_for_request(0), 1u);
  const auto pending = oracle.pending();
  ASSERT_TRUE(pending);
  EXPECT_EQ(pending->ids, (std::vector<std::string>{"a", "b"}));
  oracle.submit({{"b", 2}, {"a", 0}});
  engine.join();
  EXPECT_EQ(got, (std::vector<int>{0, 2}));
  EXPECT_FALSE(oracle.pending());
}

TEST(RemoteOracle, RejectedSubmissionLeavesRequestPending) {
  al::RemoteOracle oracle(2);
  std::vector<int> got;
  std::thread engine([&] { got = oracle.label(request(4, {"x", "y"})); });
  oracle.wait_for_request(0);
  EXPECT_THROW(oracle.submit({{"x", 0}}), ValidationError);                      // missing y
  EXPECT_THROW(oracle.submit({{"x", 0}, {"y", 1}, {"z", 1}}), ValidationError);  // extra z
  EXPECT_THROW(oracle.submit({{"x", 0}, {"y", 2}}), ValidationError);            // out of range
  try {
    oracle.submit({{"x", 0}});
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("y"), std::string::npos);
  }
  ASSERT_TRUE(oracle.pending());
  EXPECT_EQ(oracle.pending()->cycle, 4);
  oracle.submit({{"x", 1}, {"y", 0}});
  engine.join();
  EXPECT_EQ(got, (std::vector<int>{1, 0}));
  EXPECT_THROW(oracle.submit({{"x", 1}, {"y", 0}}), ValidationError);  // nothing pending now
}

TEST(RemoteOracle, CloseFailsBlockedAndFutureCalls) {
  al::RemoteOracle oracle(2);
  std::atomic<bool> failed{false};
  std::thread engine([&] {
    try {
      oracle.label(request(1, {"a"}));
    } catch (const OracleError&) {
      failed = true;
    }
  });
  oracle.wait_for_request(0);
  oracle.close();
  engine.join();
  EXPECT_TRUE(failed);
  EXPECT_TRUE(oracle.closed());
  EXPECT_THROW(oracle.label(request(2, {"b"})), OracleError);
  EXPECT_EQ(oracle.wait_for_request(99), oracle.request_count());
}

TEST(RemoteOracle, TimesOut) {
  al::RemoteOracle oracle(2, 20ms);
  EXPECT_THROW(oracle.label(request(1, {"a"})), OracleError);
  EXPECT_FALSE(oracle.pending());
}
