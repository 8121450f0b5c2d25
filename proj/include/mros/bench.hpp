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

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mros/fault.hpp"
#include "mros/metrics.hpp"
#include "mros/reliability.hpp"

namespace mros::bench {

enum class Transport { kInproc, kTcp };

const char* to_string(Transport t);
/// Throws std::invalid_argument for anything but "inproc" or "tcp".
Transport transport_from_string(const std::string& name);

struct Scenario {
  Transport transport = Transport::kInproc;
  std::vector<std::size_t> payload_sizes{256, 4096, 65536, 1048576};
  Nanos duration = std::chrono::seconds(10);  // per payload size
  QosProfile qos;
  /// Applied to the publisher's connection.
  std::optional<FaultProfile> fault;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument for an empty or zero size or a duration under 1 s.
  void validate() const;
};

/// One summary row. Latencies in milliseconds.
struct Row {
  std::size_t payload_size = 0;
  std::size_t frame_size = 0;  // encoded bytes per message
  std::uint64_t published = 0;
  std::uint64_t received = 0;
  ThroughputReport throughput;
  BandwidthReport bandwidth;
  std::optional<Summary> latency_ms;
  std::optional<CpuReport> cpu;
};

/// Publishes back to back for `duration` per size and measures at the subscriber.
std::vector<Row> run_throughput(const Scenario& scenario);

struct LatencyScenario {
  Transport transport = Transport::kInproc;
  std::size_t payload_size = 256;
  std::size_t samples = 1000;
  Nanos interval = Millis(1);
  /// Fixed delay added to every publisher frame.
  Nanos injected_delay{0};
  std::uint64_t seed = 1;
};

struct LatencyResult {
  Row row;
  std::vector<LatencySample> samples;
  std::uint64_t clock_anomalies = 0;
};

/// Paced publishing; latency is callback wall time minus timestamp_send.
LatencyResult run_latency(const LatencyScenario& scenario);

struct ReliabilityScenario {
  Transport transport = Transport::kInproc;
  std::uint64_t count = 10000;
  bool reliable = true;
  double drop = 0.0;
  double duplicate = 0.0;
  std::uint64_t seed = 1;
  std::size_t payload_size = 64;
  QosProfile qos = tuned_qos();
  /// Give up waiting for stragglers after this long.
  Nanos settle_timeout = std::chrono::seconds(30);

  /// Short timers and a retry budget sized for 10^4 messages at 20% loss.
  static QosProfile tuned_qos();
};

struct ReliabilityResult {
  Row row;
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;   // unique messages seen by the callback
  std::uint64_t duplicates = 0;  // callback invocations for an already seen message
  std::uint64_t out_of_order = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t delivery_failures = 0;
  std::uint64_t dropped_by_fault = 0;
  Nanos elapsed{0};
};

ReliabilityResult run_reliability(const ReliabilityScenario& scenario);

// Output

/// The CSV column names shared by every bench.
inline constexpr const char* kCsvColumns =
    "payload_size,msg_per_s,bit_per_s,p50_latency,p99_latency,cpu_mean";

/// "# key=value ..." followed by the column header and one line per row.
void write_csv(std::ostream& out, const std::string& params, const std::vector<Row>& rows);
void write_reliability_csv(std::ostream& out, const std::string& params,
                           const ReliabilityResult& result);
/// Fixed-width table of the same columns.
void write_table(std::ostream& out, const std::vector<Row>& rows);

}  // namespace mros::bench
