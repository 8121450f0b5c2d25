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

#pragma once

#include <condition_variable>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "mros/clock.hpp"
#include "mros/envelope.hpp"

namespace mros {

/// Receive timestamp earlier than the send timestamp.
class ClockAnomalyError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct LatencySample {
  std::uint64_t t_send = 0;     // ns
  std::uint64_t t_receive = 0;  // ns
  Nanos latency{0};
};

struct ThroughputReport {
  std::uint64_t message_count = 0;
  Nanos window{0};
  double rate = 0.0;  // msg/s
};

struct CpuReport {
  std::vector<double> samples;  // fractions in [0, 1]
  double mean = 0.0;
};

struct BandwidthReport {
  std::uint64_t bits = 0;
  Nanos window{0};
  double rate = 0.0;  // bit/s
};

struct WireOverheadReport {
  std::size_t total_size = 0;
  std::size_t payload_size = 0;
  double overhead = 0.0;
};

struct Summary {
  double min = 0, mean = 0, p50 = 0, p95 = 0, p99 = 0, max = 0;
};

/// Throws ClockAnomalyError when t_receive < t_send.
LatencySample compute_latency(std::uint64_t t_send, std::uint64_t t_receive);
/// Throws std::invalid_argument for a non-positive window.
ThroughputReport compute_throughput(std::uint64_t count, Nanos window);
/// Throws std::invalid_argument for an empty set or a sample outside [0, 1].
CpuReport compute_cpu(std::vector<double> samples);
/// Throws std::invalid_argument for a non-positive window.
BandwidthReport compute_bandwidth(std::uint64_t bits, Nanos window);
/// Measures the encoded frame. Throws std::domain_error for an empty payload.
WireOverheadReport compute_wire_overhead(const Frame& frame);

/// Nearest rank: the smallest sample with at least p% of the set at or below it.
/// `sorted` must be ascending and nonempty; p in (0, 100].
double nearest_rank(const std::vector<double>& sorted, unsigned p);
/// Throws std::invalid_argument for an empty set.
Summary summarize(std::vector<double> samples);

/// Append-only latency collector, safe for concurrent writers.
class LatencyCollector {
 public:
  /// Returns false and counts a clock anomaly instead of storing a negative sample.
  bool add(std::uint64_t t_send, std::uint64_t t_receive);
  std::vector<LatencySample> snapshot() const;
  std::uint64_t clock_anomalies() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<LatencySample> samples_;
  std::uint64_t anomalies_ = 0;
};

/// Latencies in milliseconds, ready for summarize().
std::vector<double> latencies_ms(const std::vector<LatencySample>& samples);

/// Process CPU time over wall time, divided by the core count and clamped to [0, 1].
class CpuSampler {
 public:
  explicit CpuSampler(Nanos period = Millis(100));
  ~CpuSampler();
  CpuSampler(const CpuSampler&) = delete;
  CpuSampler& operator=(const CpuSampler&) = delete;

  /// Stops sampling; a final partial interval is kept when it is at least half a period.
  void stop();
  std::vector<double> samples() const;
  static unsigned cores();

 private:
  void take(TimePoint& wall, Nanos& cpu, bool final);

  const Nanos period_;
  mutable std::mutex mutex_;
  std::condition_variable_any wake_;
  std::vector<double> samples_;
  std::jthread thread_;
  TimePoint last_wall_;
  Nanos last_cpu_{0};
  bool stopped_ = false;
};

/// CPU time consumed by this process so far.
Nanos process_cpu_time();

/// One row per sample with a header naming the columns.
void write_latency_csv(std::ostream& out, const std::vector<LatencySample>& samples);

}  // namespace mros
