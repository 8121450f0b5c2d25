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

#include <time.h>

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>

namespace mros {

namespace {

double seconds(Nanos window) { return std::chrono::duration<double>(window).count(); }

void require_window(Nanos window) {
  if (window <= Nanos::zero()) throw std::invalid_argument("measurement window must be positive");
}

}  // namespace

LatencySample compute_latency(std::uint64_t t_send, std::uint64_t t_receive) {
  if (t_receive < t_send) {
    throw ClockAnomalyError("receive timestamp " + std::to_string(t_receive) +
                            " precedes send timestamp " + std::to_string(t_send));
  }
  return {t_send, t_receive, Nanos(static_cast<std::int64_t>(t_receive - t_send))};
}

ThroughputReport compute_throughput(std::uint64_t count, Nanos window) {
  require_window(window);
  return {count, window, static_cast<double>(count) / seconds(window)};
}

CpuReport compute_cpu(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("no CPU samples");
  for (const double s : samples) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw std::invalid_argument("CPU sample " + std::to_string(s) + " outside [0, 1]");
    }
  }
  const double sum = std::accumulate(samples.begin(), samples.end(), 0.0);
  CpuReport r;
  r.mean = sum / static_cast<double>(samples.size());
  r.samples = std::move(samples);
  return r;
}

BandwidthReport compute_bandwidth(std::uint64_t bits, Nanos window) {
  require_window(window);
  return {bits, window, static_cast<double>(bits) / seconds(window)};
}

WireOverheadReport compute_wire_overhead(const Frame& frame) {
  if (frame.payload.empty()) throw std::domain_error("wire overhead is undefined for an empty payload");
  WireOverheadReport r;
  r.total_size = encode_frame(frame).size();
  r.payload_size = frame.payload.size();
  r.overhead = static_cast<double>(r.total_size) / static_cast<double>(r.payload_size);
  return r;
}

double nearest_rank(const std::vector<double>& sorted, unsigned p) {
  if (sorted.empty()) throw std::invalid_argument("no samples");
  if (p == 0 || p > 100) throw std::invalid_argument("percentile must be in (0, 100]");
  // rank = ceil(p * n / 100), computed in integers.
  const std::size_t n = sorted.size();
  const std::size_t rank = (static_cast<std::size_t>(p) * n + 99) / 100;
  return sorted[std::max<std::size_t>(rank, 1) - 1];
}

Summary summarize(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("cannot summarize an empty sample set");
  std::sort(samples.begin(), samples.end());
  Summary s;
  s.min = samples.front();
  s.max = samples.back();
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  s.p50 = nearest_rank(samples, 50);
  s.p95 = nearest_rank(samples, 95);
  s.p99 = nearest_rank(samples, 99);
  return s;
}

bool LatencyCollector::add(std::uint64_t t_send, std::uint64_t t_receive) {
  std::lock_guard lock(mutex_);
  if (t_receive < t_send) {
    ++anomalies_;
    return false;
  }
  samples_.push_back(compute_latency(t_send, t_receive));
  return true;
}

std::vector<LatencySample> LatencyCollector::snapshot() const {
  std::lock_guard lock(mutex_);
  return samples_;
}

std::uint64_t LatencyCollector::clock_anomalies() const {
  std::lock_guard lock(mutex_);
  return anomalies_;
}

std::size_t LatencyCollector::size() const {
  std::lock_guard lock(mutex_);
  return samples_.size();
}

std::vector<double> latencies_ms(const std::vector<LatencySample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(std::chrono::duration<double, std::milli>(s.latency).count());
  return out;
}

Nanos process_cpu_time() {
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return std::chrono::seconds(ts.tv_sec) + Nanos(ts.tv_nsec);
}

unsigned CpuSampler::cores() { return std::max(1u, std::thread::hardware_concurrency()); }

CpuSampler::CpuSampler(Nanos period) : period_(period) {
  if (period <= Nanos::zero()) throw std::invalid_argument("sampling period must be positive");
  last_wall_ = SteadyClock::now();
  last_cpu_ = process_cpu_time();
  thread_ = std::jthread([this](std::stop_token st) {
    std::unique_lock lock(mutex_);
    auto next = last_wall_ + period_;
    while (!st.stop_requested()) {
      wake_.wait_until(lock, st, next, [] { return false; });
      if (st.stop_requested()) break;
      take(last_wall_, last_cpu_, false);
      next += period_;
    }
  });
}

CpuSampler::~CpuSampler() { stop(); }

void CpuSampler::take(TimePoint& wall, Nanos& cpu, bool final) {
  const auto now_wall = SteadyClock::now();
  const auto now_cpu = process_cpu_time();
  const auto dwall = now_wall - wall;
  if (dwall <= Nanos::zero() || (final && dwall < period_ / 2)) return;
  const double ratio = std::chrono::duration<double>(now_cpu - cpu).count() /
                       std::chrono::duration<double>(dwall).count() / cores();
  samples_.push_back(std::clamp(ratio, 0.0, 1.0));
  wall = now_wall;
  cpu = now_cpu;
}

void CpuSampler::stop() {
  if (thread_.joinable()) {
    thread_.request_stop();
    thread_.join();
  }
  std::lock_guard lock(mutex_);
  if (stopped_) return;
  stopped_ = true;
  take(last_wall_, last_cpu_, true);
}

std::vector<double> CpuSampler::samples() const {
  std::lock_guard lock(mutex_);
  return samples_;
}

void write_latency_csv(std::ostream& out, const std::vector<LatencySample>& samples) {
  out << "t_send_ns,t_receive_ns,latency_ns\n";
  for (const auto& s : samples) {
    out << s.t_send << ',' << s.t_receive << ',' << s.latency.count() << '\n';
  }
}

}  // namespace mros
