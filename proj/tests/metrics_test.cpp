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

#include "mros/metrics.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "test_util.hpp"

namespace mros {
namespace {

using testing::oracle_frame_size;

Frame data_frame(const std::string& topic, std::size_t payload) {
  Frame f;
  f.kind = FrameKind::kData;
  f.payload_type = PayloadType::kBytes;
  f.topic = topic;
  f.payload.assign(payload, 0xAB);
  return f;
}

TEST(LatencyTest, DifferenceOfTimestamps) {
  EXPECT_EQ(compute_latency(100, 100).latency, Nanos(0));
  EXPECT_EQ(compute_latency(1'000'000, 6'000'000).latency, Millis(5));
  EXPECT_THROW(compute_latency(6, 5), ClockAnomalyError);
}

TEST(LatencyTest, CollectorCountsAnomaliesInsteadOfStoring) {
  LatencyCollector c;
  EXPECT_TRUE(c.add(10, 15));
  EXPECT_FALSE(c.add(20, 15));
  EXPECT_EQ(c.size(), 1u);
  EXPECT_EQ(c.clock_anomalies(), 1u);
  EXPECT_EQ(c.snapshot()[0].latency, Nanos(5));
}

TEST(LatencyTest, CollectorAcceptsConcurrentWriters) {
  LatencyCollector c;
  {
    std::vector<std::jthread> writers;
    for (int t = 0; t < 4; ++t) {
      writers.emplace_back([&c] {
        for (std::uint64_t i = 0; i < 10000; ++i) c.add(i, i + 1);
      });
    }
  }
  EXPECT_EQ(c.size(), 40000u);
}

TEST(LatencyTest, CsvHasHeaderAndOneRowPerSample) {
  std::ostringstream out;
  write_latency_csv(out, {compute_latency(1, 4), compute_latency(10, 30)});
  EXPECT_EQ(out.str(), "t_send_ns,t_receive_ns,latency_ns\n1,4,3\n10,30,20\n");
}

TEST(ThroughputTest, Division) {
  EXPECT_EQ(compute_throughput(0, std::chrono::seconds(1)).rate, 0.0);
  EXPECT_EQ(compute_throughput(30000, std::chrono::seconds(3)).rate, 10000.0);
  EXPECT_THROW(compute_throughput(1, Nanos(0)), std::invalid_argument);
}

TEST(ThroughputTest, MatchesRecountOfADeliveryTrace) {
  std::mt19937_64 rng(3);
  // Delivery timestamps over a 2 s trace; count those inside a 1.5 s window.
  std::vector<std::uint64_t> trace(5000);
  for (auto& t : trace) t = rng() % 2'000'000'000ull;
  const std::uint64_t lo = 250'000'000, hi = 1'750'000'000;
  std::uint64_t count = 0;
  for (const auto t : trace) count += (t >= lo && t < hi) ? 1 : 0;
  const auto r = compute_throughput(count, Nanos(hi - lo));
  EXPECT_EQ(r.message_count, count);
  EXPECT_DOUBLE_EQ(r.rate, static_cast<double>(count) / 1.5);
}

TEST(BandwidthTest, CountsWholeFrames) {
  EXPECT_EQ(compute_bandwidth(8'000'000, std::chrono::seconds(1)).rate, 8e6);
  EXPECT_EQ(compute_bandwidth(0, std::chrono::seconds(1)).rate, 0.0);
  EXPECT_THROW(compute_bandwidth(1, Nanos(-1)), std::invalid_argument);
  // "chatter" with 100 bytes encodes to 153 bytes.
  const std::size_t frame = encode_frame(data_frame("chatter", 100)).size();
  ASSERT_EQ(frame, 153u);
  EXPECT_EQ(compute_bandwidth(1000 * frame * 8, std::chrono::seconds(1)).rate, 1'224'000.0);
}

TEST(BandwidthTest, ConsistentWithThroughputOnUniformRuns) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t n = rng() % 1'000'000;
    const std::uint64_t frame_bits = 8 * (46 + rng() % 70000);
    const Nanos window(1 + rng() % 10'000'000'000ull);
    const auto t = compute_throughput(n, window);
    const auto b = compute_bandwidth(n * frame_bits, window);
    ASSERT_EQ(b.bits, t.message_count * frame_bits);
    ASSERT_EQ(b.window, t.window);
    ASSERT_NEAR(b.rate, t.rate * static_cast<double>(frame_bits), 1e-9 * b.rate + 1e-12);
  }
}

TEST(CpuTest, ArithmeticMean) {
  EXPECT_EQ(compute_cpu({0.5, 0.5, 0.5}).mean, 0.5);
  EXPECT_EQ(compute_cpu({0.0, 1.0}).mean, 0.5);
  EXPECT_THROW(compute_cpu({}), std::invalid_argument);
  EXPECT_THROW(compute_cpu({0.2, 1.5}), std::invalid_argument);
  EXPECT_THROW(compute_cpu({-0.1}), std::invalid_argument);
}

TEST(CpuTest, BusySpinSaturatesOneCore) {
  CpuSampler sampler;
  const auto end = SteadyClock::now() + Millis(1000);
  volatile std::uint64_t sink = 0;
  while (SteadyClock::now() < end) sink = sink + 1;
  sampler.stop();
  const auto samples = sampler.samples();
  ASSERT_GE(samples.size(), 9u);
  const double one_core = 1.0 / CpuSampler::cores();
  const double mean = compute_cpu(samples).mean;
  EXPECT_GE(mean / one_core, 0.8);
  EXPECT_LE(mean / one_core, 1.0 + 1e-9);
}

TEST(CpuTest, IdleProcessStaysLow) {
  CpuSampler sampler;
  std::this_thread::sleep_for(Millis(500));
  sampler.stop();
  const auto samples = sampler.samples();
  ASSERT_GE(samples.size(), 4u);
  EXPECT_LT(compute_cpu(samples).mean, 0.2);
}

TEST(WireOverheadTest, KnownRatios) {
  const auto chatter = compute_wire_overhead(data_frame("chatter", 100));
  EXPECT_EQ(chatter.total_size, 153u);
  EXPECT_EQ(chatter.payload_size, 100u);
  EXPECT_EQ(chatter.overhead, 153.0 / 100.0);
  EXPECT_EQ(compute_wire_overhead(data_frame("t", 1)).overhead, 48.0);
  const auto big = compute_wire_overhead(data_frame("t", 1'048'576));
  EXPECT_EQ(big.overhead, (1'048'576.0 + 47.0) / 1'048'576.0);
  EXPECT_NEAR(big.overhead, 1.0000448, 1e-7);
  EXPECT_THROW(compute_wire_overhead(data_frame("t", 0)), std::domain_error);
}

TEST(WireOverheadTest, MatchesByteCountOracle) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 2000; ++i) {
    const auto topic = testing::random_topic(rng, 60);
    const std::size_t payload = 1 + rng() % 5000;
    const auto r = compute_wire_overhead(data_frame(topic, payload));
    ASSERT_EQ(r.total_size, oracle_frame_size(topic.size(), payload));
    ASSERT_EQ(r.overhead, static_cast<double>(oracle_frame_size(topic.size(), payload)) / payload);
  }
}

TEST(WireOverheadTest, DecreasesTowardOneAsPayloadGrows) {
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t size = 1; size <= (1u << 20); size *= 2) {
    const double o = compute_wire_overhead(data_frame("chatter", size)).overhead;
    EXPECT_LT(o, previous) << size;
    EXPECT_GT(o, 1.0);
    previous = o;
  }
  EXPECT_LT(previous, 1.0001);
}

TEST(SummaryTest, NearestRankDefinition) {
  const auto single = summarize({4.0});
  EXPECT_EQ(single.min, 4.0);
  EXPECT_EQ(single.p50, 4.0);
  EXPECT_EQ(single.p99, 4.0);
  EXPECT_EQ(single.max, 4.0);
  std::vector<double> hundred;
  for (int i = 100; i >= 1; --i) hundred.push_back(i);
  const auto s = summarize(hundred);
  EXPECT_EQ(s.p50, 50.0);
  EXPECT_EQ(s.p95, 95.0);
  EXPECT_EQ(s.p99, 99.0);
  EXPECT_EQ(s.mean, 50.5);
  EXPECT_THROW(summarize({}), std::invalid_argument);
}

// Smallest sample x with count(samples <= x) * 100 >= p * n, by scanning.
double counting_percentile(const std::vector<double>& v, unsigned p) {
  double best = std::numeric_limits<double>::infinity();
  for (const double x : v) {
    std::size_t at_or_below = 0;
    for (const double y : v) at_or_below += (y <= x) ? 1 : 0;
    if (at_or_below * 100 >= p * v.size() && x < best) best = x;
  }
  return best;
}

TEST(SummaryTest, RandomSetsMatchCountingOracle) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng() % 200);
    for (auto& x : v) x = static_cast<double>(rng() % 50);  // plenty of ties
    const auto s = summarize(v);
    ASSERT_EQ(s.p50, counting_percentile(v, 50));
    ASSERT_EQ(s.p95, counting_percentile(v, 95));
    ASSERT_EQ(s.p99, counting_percentile(v, 99));
    ASSERT_EQ(s.min, *std::min_element(v.begin(), v.end()));
    ASSERT_EQ(s.max, *std::max_element(v.begin(), v.end()));
  }
}

}  // namespace
}  // namespace mros
