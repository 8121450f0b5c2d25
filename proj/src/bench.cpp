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

#include "mros/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "byte_io.hpp"
#include "mros/broker.hpp"
#include "mros/node.hpp"

namespace mros::bench {

const char* to_string(Transport t) { return t == Transport::kTcp ? "tcp" : "inproc"; }

Transport transport_from_string(const std::string& name) {
  if (name == "inproc") return Transport::kInproc;
  if (name == "tcp") return Transport::kTcp;
  throw std::invalid_argument("unknown transport '" + name + "' (expected inproc or tcp)");
}

void Scenario::validate() const {
  if (payload_sizes.empty()) throw std::invalid_argument("no payload sizes");
  for (const auto s : payload_sizes) {
    if (s == 0) throw std::invalid_argument("payload sizes must be positive");
  }
  if (duration < std::chrono::seconds(1)) throw std::invalid_argument("duration must be at least 1 s");
  qos.validate();
  if (fault) fault->validate();
}

QosProfile ReliabilityScenario::tuned_qos() {
  QosProfile q = QosProfile::reliable();
  q.history_depth = 16384;
  q.ack_timeout = Millis(50);
  q.backoff_base = Millis(10);
  q.backoff_max = Millis(200);
  q.max_retries = 10;
  return q;
}

namespace {

/// A private broker plus the options nodes need to reach it.
class Rig {
 public:
  explicit Rig(Transport transport) {
    static std::atomic<int> counter{0};
    const auto address =
        transport == Transport::kTcp
            ? EndpointAddress::tcp("127.0.0.1", 0)
            : EndpointAddress::inproc("bench_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    broker_ = Broker::serve(address);
  }
  ~Rig() { broker_->stop(); }

  std::unique_ptr<Node> node(const std::string& name, NodeOptions o = {}) {
    o.broker = broker_->address();
    return std::make_unique<Node>(name, std::move(o));
  }

 private:
  std::unique_ptr<Broker> broker_;
};

/// Subscriber-side counters written from the callback.
struct Sink {
  std::atomic<std::uint64_t> received{0};
  std::atomic<std::uint64_t> bits{0};
  std::atomic<std::int64_t> last_receive_ns{0};  // steady clock
  LatencyCollector latency;

  void on_frame(const Frame& f, const MessageInfo& info) {
    latency.add(info.timestamp_send, wall_clock_ns());
    bits += 8 * static_cast<std::uint64_t>(info.encoded_size);
    last_receive_ns = SteadyClock::now().time_since_epoch().count();
    (void)f;
    ++received;
  }
};

/// Waits until `done` holds, or until nothing new arrived for `quiet`, or `limit` passes.
template <typename Done>
void settle(const Sink& sink, Done done, Nanos quiet, Nanos limit) {
  const auto give_up = SteadyClock::now() + limit;
  std::uint64_t seen = sink.received;
  auto last_progress = SteadyClock::now();
  while (!done() && SteadyClock::now() < give_up) {
    std::this_thread::sleep_for(Millis(2));
    const std::uint64_t now = sink.received;
    if (now != seen) {
      seen = now;
      last_progress = SteadyClock::now();
    } else if (SteadyClock::now() - last_progress > quiet) {
      break;
    }
  }
}

std::size_t queue_depth_for(std::size_t payload_size) {
  // Up to 256 MiB of queued payload, within [16, 65536] messages.
  return std::clamp<std::size_t>((std::size_t{256} << 20) / payload_size, 16, 65536);
}

Row finish_row(std::size_t payload_size, std::uint64_t published, const Sink& sink, TimePoint start,
               CpuSampler& cpu) {
  cpu.stop();
  Row row;
  row.payload_size = payload_size;
  row.frame_size = 0;
  row.published = published;
  row.received = sink.received;
  const auto last = TimePoint(Nanos(sink.last_receive_ns.load()));
  const Nanos window = row.received > 0 ? std::max<Nanos>(last - start, Nanos(1)) : Nanos(1);
  row.throughput = compute_throughput(row.received, window);
  row.bandwidth = compute_bandwidth(sink.bits, window);
  const auto samples = sink.latency.snapshot();
  if (!samples.empty()) row.latency_ms = summarize(latencies_ms(samples));
  const auto cpu_samples = cpu.samples();
  if (!cpu_samples.empty()) row.cpu = compute_cpu(cpu_samples);
  return row;
}

Row throughput_leg(const Scenario& sc, std::size_t size) {
  Rig rig(sc.transport);
  std::shared_ptr<FaultyConnection> faulty;
  NodeOptions po;
  if (sc.fault) {
    po.connection_decorator = [&faulty](std::shared_ptr<Connection> c) {
      faulty = wrap_with_faults(std::move(c), {});
      return faulty;
    };
  }
  auto pubn = rig.node("bench_pub", po);
  auto subn = rig.node("bench_sub");
  Sink sink;
  QosProfile subq = sc.qos;
  subq.history_depth = std::max(sc.qos.history_depth, queue_depth_for(size));
  auto sub = subn->subscribe_raw("bench/data", subq,
                                 [&sink](const Frame& f, const MessageInfo& i) { sink.on_frame(f, i); });
  auto pub = pubn->advertise({"bench/data", PayloadType::kBytes, sc.qos});
  if (faulty) {
    FaultProfile fp = *sc.fault;
    fp.seed = sc.seed;
    faulty->set_profile(fp);
  }
  std::jthread spinner([&subn](std::stop_token st) { subn->spin(st); });

  const Bytes payload(size, 0x5A);
  CpuSampler cpu;
  const auto start = SteadyClock::now();
  const auto stop_at = start + sc.duration;
  std::uint64_t published = 0;
  while (SteadyClock::now() < stop_at) {
    for (int burst = 0; burst < 64; ++burst) {
      pub.publish_encoded(PayloadType::kBytes, payload);
      ++published;
    }
  }
  settle(sink, [&] { return sink.received >= published; }, Millis(1000), std::chrono::seconds(30));
  Row row = finish_row(size, published, sink, start, cpu);
  row.frame_size = encoded_size(std::string("bench/data").size(), size);
  return row;
}

}  // namespace

std::vector<Row> run_throughput(const Scenario& scenario) {
  scenario.validate();
  std::vector<Row> rows;
  for (const auto size : scenario.payload_sizes) rows.push_back(throughput_leg(scenario, size));
  return rows;
}

LatencyResult run_latency(const LatencyScenario& sc) {
  if (sc.samples == 0) throw std::invalid_argument("latency bench needs at least one sample");
  if (sc.payload_size == 0) throw std::invalid_argument("payload size must be positive");
  if (sc.interval <= Nanos::zero()) throw std::invalid_argument("interval must be positive");
  Rig rig(sc.transport);
  std::shared_ptr<FaultyConnection> faulty;
  NodeOptions po;
  po.connection_decorator = [&faulty](std::shared_ptr<Connection> c) {
    faulty = wrap_with_faults(std::move(c), {});
    return faulty;
  };
  auto pubn = rig.node("bench_pub", po);
  auto subn = rig.node("bench_sub");
  Sink sink;
  QosProfile subq;
  subq.history_depth = queue_depth_for(sc.payload_size);
  auto sub = subn->subscribe_raw("bench/latency", subq,
                                 [&sink](const Frame& f, const MessageInfo& i) { sink.on_frame(f, i); });
  auto pub = pubn->advertise({"bench/latency", PayloadType::kBytes, {}});
  if (sc.injected_delay > Nanos::zero()) {
    const auto d = std::chrono::duration_cast<Millis>(sc.injected_delay);
    faulty->set_profile({0.0, 0.0, d, d, sc.seed});
  }
  std::jthread spinner([&subn](std::stop_token st) { subn->spin(st); });

  const Bytes payload(sc.payload_size, 0x3C);
  CpuSampler cpu;
  RateController rate(sc.interval);
  const auto start = SteadyClock::now();
  for (std::size_t i = 0; i < sc.samples; ++i) {
    pub.publish_encoded(PayloadType::kBytes, payload);
    rate.sleep();
  }
  settle(sink, [&] { return sink.received >= sc.samples; }, sc.injected_delay + Millis(1000),
         std::chrono::seconds(30));
  LatencyResult r;
  r.row = finish_row(sc.payload_size, sc.samples, sink, start, cpu);
  r.row.frame_size = encoded_size(std::string("bench/latency").size(), sc.payload_size);
  r.samples = sink.latency.snapshot();
  r.clock_anomalies = sink.latency.clock_anomalies();
  return r;
}

ReliabilityResult run_reliability(const ReliabilityScenario& sc) {
  if (sc.count == 0) throw std::invalid_argument("reliability bench needs at least one message");
  if (sc.payload_size < 8) throw std::invalid_argument("payload must hold an 8-byte index");
  QosProfile qos = sc.qos;
  qos.mode = sc.reliable ? ReliabilityMode::kReliable : ReliabilityMode::kBestEffort;
  qos.validate();
  Rig rig(sc.transport);
  std::shared_ptr<FaultyConnection> faulty;
  NodeOptions po;
  po.connection_decorator = [&faulty](std::shared_ptr<Connection> c) {
    faulty = wrap_with_faults(std::move(c), {});
    return faulty;
  };
  auto pubn = rig.node("bench_pub", po);
  auto subn = rig.node("bench_sub");

  Sink sink;
  std::vector<bool> seen(sc.count, false);
  std::uint64_t unique = 0, duplicates = 0, out_of_order = 0, highest = 0;
  bool any = false;
  QosProfile subq = qos;
  subq.history_depth = std::max<std::size_t>(qos.history_depth, static_cast<std::size_t>(sc.count));
  auto sub = subn->subscribe_raw("bench/reliability", subq, [&](const Frame& f, const MessageInfo& i) {
    sink.on_frame(f, i);
    const auto index = detail::load_be<std::uint64_t>(f.payload.data());
    if (index >= sc.count) return;
    if (seen[index]) {
      ++duplicates;
      return;
    }
    seen[index] = true;
    ++unique;
    if (any && index < highest) ++out_of_order;
    highest = std::max(highest, index);
    any = true;
  });
  auto pub = pubn->advertise({"bench/reliability", PayloadType::kBytes, qos});
  faulty->set_profile({sc.drop, sc.duplicate, Millis(0), Millis(0), sc.seed});
  std::jthread spinner([&subn](std::stop_token st) { subn->spin(st); });

  CpuSampler cpu;
  const auto start = SteadyClock::now();
  Bytes payload(sc.payload_size, 0);
  for (std::uint64_t i = 0; i < sc.count; ++i) {
    Bytes p = payload;
    for (int b = 0; b < 8; ++b) p[b] = static_cast<std::uint8_t>(i >> (56 - 8 * b));
    pub.publish_encoded(PayloadType::kBytes, std::move(p));
  }
  if (sc.reliable) {
    settle(sink, [&] { return sink.received >= sc.count && pub.in_flight() == 0; },
           sc.settle_timeout, sc.settle_timeout);
  } else {
    settle(sink, [&] { return sink.received >= sc.count; }, Millis(500), sc.settle_timeout);
  }
  spinner.request_stop();
  spinner.join();

  ReliabilityResult r;
  r.elapsed = SteadyClock::now() - start;
  r.row = finish_row(sc.payload_size, sc.count, sink, start, cpu);
  r.row.frame_size = encoded_size(std::string("bench/reliability").size(), sc.payload_size);
  r.sent = sc.count;
  r.delivered = unique;
  r.duplicates = duplicates;
  r.out_of_order = out_of_order;
  r.retransmissions = pub.retransmissions();
  r.delivery_failures = pub.delivery_failures();
  if (faulty) r.dropped_by_fault = faulty->counters().dropped;
  return r;
}

// Output

namespace {

void write_row(std::ostream& out, const Row& r) {
  out << r.payload_size << ',' << std::fixed << std::setprecision(3) << r.throughput.rate << ','
      << r.bandwidth.rate << ',';
  out << std::setprecision(4);
  if (r.latency_ms) out << r.latency_ms->p50;
  out << ',';
  if (r.latency_ms) out << r.latency_ms->p99;
  out << ',';
  if (r.cpu) out << r.cpu->mean;
  out << std::defaultfloat;
}

}  // namespace

void write_csv(std::ostream& out, const std::string& params, const std::vector<Row>& rows) {
  out << "# " << params << '\n' << kCsvColumns << '\n';
  for (const auto& r : rows) {
    write_row(out, r);
    out << '\n';
  }
}

void write_reliability_csv(std::ostream& out, const std::string& params, const ReliabilityResult& r) {
  out << "# " << params << '\n'
      << kCsvColumns << ",sent,delivered,duplicates,out_of_order,retransmissions,delivery_failures\n";
  write_row(out, r.row);
  out << ',' << r.sent << ',' << r.delivered << ',' << r.duplicates << ',' << r.out_of_order << ','
      << r.retransmissions << ',' << r.delivery_failures << '\n';
}

void write_table(std::ostream& out, const std::vector<Row>& rows) {
  const auto flags = out.flags();
  out << std::left << std::setw(14) << "payload_size" << std::setw(16) << "msg_per_s" << std::setw(18)
      << "bit_per_s" << std::setw(14) << "p50_latency" << std::setw(14) << "p99_latency"
      << "cpu_mean\n";
  for (const auto& r : rows) {
    auto ms = [](std::optional<Summary> s, bool p99) {
      if (!s) return std::string("-");
      std::ostringstream o;
      o << std::fixed << std::setprecision(3) << (p99 ? s->p99 : s->p50) << " ms";
      return o.str();
    };
    std::ostringstream cpu;
    if (r.cpu) {
      cpu << std::fixed << std::setprecision(1) << 100.0 * r.cpu->mean << " %";
    } else {
      cpu << "-";
    }
    out << std::setw(14) << r.payload_size << std::setw(16) << std::fixed << std::setprecision(1)
        << r.throughput.rate << std::setw(18) << std::setprecision(0) << r.bandwidth.rate << std::setw(14)
        << ms(r.latency_ms, false) << std::setw(14) << ms(r.latency_ms, true) << cpu.str() << '\n';
  }
  out.flags(flags);
}

}  // namespace mros::bench
