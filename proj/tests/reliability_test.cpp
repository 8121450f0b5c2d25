// Copyright 2026 The mros Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "mros/reliability.hpp"

namespace mros {
namespace {

Frame reliable_frame(std::uint64_t stream, std::uint64_t seq, std::uint64_t low_water = 0,
                     std::string topic = "chatter") {
  Frame f;
  f.kind = FrameKind::kData;
  f.flags = flags::kRequiresAck;
  f.sequence = seq;
  f.topic = std::move(topic);
  f.correlation = make_stream_correlation(stream, low_water);
  return f;
}

TEST(BackoffTest, MatchesDoublingWithCap) {
  QosProfile q = QosProfile::reliable();
  q.backoff_base = Millis(50);
  q.backoff_max = Millis(2000);
  EXPECT_EQ(backoff_delay(q, 0), Nanos(0));
  for (std::uint32_t k = 1; k <= 40; ++k) {
    const double oracle_ms = std::min(50.0 * std::pow(2.0, k - 1), 2000.0);
    EXPECT_EQ(backoff_delay(q, k), Millis(static_cast<long>(oracle_ms))) << "attempt " << k;
  }
}

TEST(QosTest, ValidateRejectsBadProfiles) {
  QosProfile q = QosProfile::reliable();
  EXPECT_NO_THROW(q.validate());
  q.max_retries = 0;
  EXPECT_THROW(q.validate(), std::invalid_argument);
  EXPECT_NO_THROW(QosProfile::best_effort().validate());
  q = QosProfile::reliable();
  q.history_depth = 0;
  EXPECT_THROW(q.validate(), std::invalid_argument);
  q = QosProfile::reliable();
  q.backoff_base = Millis(3000);
  EXPECT_THROW(q.validate(), std::invalid_argument);
}

TEST(StreamCorrelationTest, RoundTrips) {
  const auto c = make_stream_correlation(0x0102030405060708ull, 99);
  EXPECT_EQ(c[0], 0x01);
  EXPECT_EQ(c[7], 0x08);
  EXPECT_EQ(c[15], 99);
  EXPECT_EQ(stream_of(c), 0x0102030405060708ull);
  EXPECT_EQ(low_water_of(c), 99u);
}

TEST(AckTest, MirrorsFrame) {
  const Frame f = reliable_frame(5, 17);
  const Frame a = make_ack(f);
  EXPECT_EQ(a.kind, FrameKind::kAck);
  EXPECT_EQ(a.sequence, 17u);
  EXPECT_EQ(a.topic, f.topic);
  EXPECT_EQ(a.correlation, f.correlation);
  EXPECT_FALSE(a.requires_ack());
}

TEST(RetryTableTest, ScheduleFollowsTimeoutPlusBackoffThenFails) {
  QosProfile q = QosProfile::reliable();
  q.max_retries = 5;
  q.ack_timeout = Millis(200);
  q.backoff_base = Millis(50);
  q.backoff_max = Millis(2000);
  RetryTable table(q);
  const TimePoint t0{};
  table.track(reliable_frame(1, 1), t0);

  // Oracle timeline: attempt k goes out ack_timeout + base*2^(k-1) after attempt k-1.
  TimePoint t = t0;
  for (std::uint32_t k = 1; k <= 5; ++k) {
    const Nanos gap = Millis(200) + Millis(50 << (k - 1));
    EXPECT_TRUE(table.collect_due(t + gap - Nanos(1)).retransmit.empty());
    t += gap;
    auto due = table.collect_due(t);
    ASSERT_EQ(due.retransmit.size(), 1u) << "attempt " << k;
    EXPECT_EQ(due.retransmit[0], reliable_frame(1, 1));
  }
  EXPECT_TRUE(table.collect_due(t + Millis(200) - Nanos(1)).failed.empty());
  auto last = table.collect_due(t + Millis(200));
  EXPECT_EQ(last.failed.size(), 1u);
  EXPECT_EQ(table.in_flight(), 0u);
  EXPECT_EQ(table.retransmissions(), 5u);
  EXPECT_EQ(table.failures(), 1u);
}

TEST(RetryTableTest, AckClearsAndRepeatedAckIsCounted) {
  RetryTable table(QosProfile::reliable());
  const Frame f = reliable_frame(3, 10);
  table.track(f, TimePoint{});
  EXPECT_TRUE(table.handle_ack(make_ack(f)));
  EXPECT_FALSE(table.handle_ack(make_ack(f)));
  EXPECT_EQ(table.unknown_acks(), 1u);
  EXPECT_EQ(table.in_flight(), 0u);
  EXPECT_TRUE(table.collect_due(TimePoint{} + Millis(100000)).retransmit.empty());
}

TEST(RetryTableTest, AckWithWrongTopicIgnored) {
  RetryTable table(QosProfile::reliable());
  table.track(reliable_frame(3, 10), TimePoint{});
  EXPECT_FALSE(table.handle_ack(make_ack(reliable_frame(3, 10, 0, "other"))));
  EXPECT_EQ(table.in_flight(), 1u);
}

TEST(RetryTableTest, LowestInFlightPerStream) {
  RetryTable table(QosProfile::reliable());
  table.track(reliable_frame(1, 7), TimePoint{});
  table.track(reliable_frame(1, 4), TimePoint{});
  table.track(reliable_frame(2, 1), TimePoint{});
  EXPECT_EQ(table.lowest_in_flight(1), 4u);
  EXPECT_EQ(table.lowest_in_flight(2), 1u);
  EXPECT_FALSE(table.lowest_in_flight(3).has_value());
}

TEST(RetryTableTest, ExpediteMakesEntriesDueWithoutSpendingAttempts) {
  QosProfile q = QosProfile::reliable();
  q.max_retries = 1;
  RetryTable table(q);
  table.track(reliable_frame(1, 1), TimePoint{});
  table.expedite(TimePoint{} + Millis(1));
  EXPECT_EQ(table.collect_due(TimePoint{} + Millis(1)).retransmit.size(), 1u);
  EXPECT_EQ(table.in_flight(), 1u);
}

TEST(DedupWindowTest, EvictsOldest) {
  DedupWindow w(3);
  EXPECT_TRUE(w.insert(1));
  EXPECT_FALSE(w.insert(1));
  w.insert(2);
  w.insert(3);
  w.insert(4);
  EXPECT_FALSE(w.contains(1));
  EXPECT_TRUE(w.insert(1));
  EXPECT_EQ(w.size(), 3u);
}

std::vector<std::uint64_t> seqs(const std::vector<Frame>& frames) {
  std::vector<std::uint64_t> out;
  for (const auto& f : frames) out.push_back(f.sequence);
  return out;
}

// Shuffles 1..n locally (displacement < `spread`) and duplicates some entries.
std::vector<std::uint64_t> scrambled(std::mt19937_64& rng, std::uint64_t n, std::size_t spread) {
  std::vector<std::uint64_t> v;
  for (std::uint64_t i = 1; i <= n; ++i) v.push_back(i);
  for (std::size_t i = 0; i + spread <= v.size(); i += spread) {
    std::shuffle(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(i + spread), rng);
  }
  std::vector<std::uint64_t> out;
  for (auto s : v) {
    out.push_back(s);
    if (rng() % 10 == 0) out.push_back(s);
  }
  return out;
}

TEST(StreamReceiverTest, ReliableReordersAndDedups) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    StreamReceiver rx(ReliabilityMode::kReliable, 16);
    std::vector<Frame> ready;
    std::size_t dup_count = 0;
    std::set<std::uint64_t> seen;
    for (auto s : scrambled(rng, 500, 8)) {
      if (!seen.insert(s).second) ++dup_count;
      // The first arriving frame carries the stream's low-water mark.
      rx.on_frame(reliable_frame(1, s, 1), ready);
    }
    std::vector<std::uint64_t> expected(500);
    std::iota(expected.begin(), expected.end(), 1);
    ASSERT_EQ(seqs(ready), expected);
    EXPECT_EQ(rx.duplicates(), dup_count);
    EXPECT_EQ(rx.gaps(), 0u);
  }
}

TEST(StreamReceiverTest, ReliableSkipsGapWhenHoldBackOverflows) {
  StreamReceiver rx(ReliabilityMode::kReliable, 4);
  std::vector<Frame> ready;
  rx.on_frame(reliable_frame(1, 1, 1), ready);
  for (std::uint64_t s = 3; s <= 7; ++s) rx.on_frame(reliable_frame(1, s, 1), ready);
  EXPECT_EQ(seqs(ready), (std::vector<std::uint64_t>{1, 3, 4, 5, 6, 7}));
  EXPECT_EQ(rx.gaps(), 1u);
  // The skipped frame arriving late is stale.
  EXPECT_EQ(rx.on_frame(reliable_frame(1, 2, 1), ready), StreamReceiver::Verdict::kDuplicate);
}

TEST(StreamReceiverTest, ReliableOutputAlwaysIncreasing) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    StreamReceiver rx(ReliabilityMode::kReliable, 1 + rng() % 8);
    std::vector<Frame> ready;
    for (auto s : scrambled(rng, 300, 12)) {
      if (rng() % 7 == 0) continue;  // lost
      rx.on_frame(reliable_frame(1, s), ready);
    }
    const auto out = seqs(ready);
    ASSERT_TRUE(std::adjacent_find(out.begin(), out.end(), std::greater_equal<>()) == out.end());
  }
}

TEST(StreamReceiverTest, LateJoinerStartsAtLowWater) {
  StreamReceiver rx(ReliabilityMode::kReliable, 16);
  std::vector<Frame> ready;
  // Publisher still had 40 unacked when it sent 42.
  rx.on_frame(reliable_frame(1, 42, 40), ready);
  EXPECT_TRUE(ready.empty());
  rx.on_frame(reliable_frame(1, 40, 40), ready);
  rx.on_frame(reliable_frame(1, 41, 40), ready);
  EXPECT_EQ(seqs(ready), (std::vector<std::uint64_t>{40, 41, 42}));
}

TEST(StreamReceiverTest, BestEffortDeliversImmediatelyWithoutDuplicates) {
  std::mt19937_64 rng(8);
  StreamReceiver rx(ReliabilityMode::kBestEffort, 16);
  std::vector<Frame> ready;
  const auto input = scrambled(rng, 400, 10);
  for (auto s : input) rx.on_frame(reliable_frame(1, s), ready);
  auto out = seqs(ready);
  EXPECT_EQ(out.size(), 400u);
  std::set<std::uint64_t> unique(out.begin(), out.end());
  EXPECT_EQ(unique.size(), 400u);
  EXPECT_EQ(rx.duplicates(), input.size() - 400);
}

}  // namespace
}  // namespace mros
