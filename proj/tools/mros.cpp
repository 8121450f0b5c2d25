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

// mros: broker, pub/sub tools, introspection, logging and benchmarks.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "mros/bench.hpp"
#include "mros/broker.hpp"
#include "mros/datalogger.hpp"
#include "mros/node.hpp"

namespace {

using namespace mros;

std::atomic<bool> g_interrupted{false};

// A second signal exits immediately.
extern "C" void on_signal(int) {
  if (g_interrupted.exchange(true)) std::_Exit(130);
}

/// Runs until SIGINT/SIGTERM, `done` returns true, or `limit` passes.
void wait_until(const std::function<bool()>& done, std::optional<Nanos> limit = std::nullopt) {
  const auto end = limit ? std::optional(SteadyClock::now() + *limit) : std::nullopt;
  while (!g_interrupted && !(done && done()) && !(end && SteadyClock::now() >= *end)) {
    std::this_thread::sleep_for(Millis(10));
  }
}

std::string default_node_name(const std::string& role) {
  return "mros_" + role + "_" + std::to_string(::getpid());
}

PayloadType parse_type(const std::string& name) {
  const auto t = payload_type_from_string(name);
  if (!t || *t == PayloadType::kNull) throw CLI::ValidationError("--type", "unknown payload type '" + name + "'");
  return *t;
}

/// A synthetic value of `type` whose payload is roughly `size` bytes.
Value make_value(PayloadType type, std::uint64_t n, std::size_t size) {
  const Bytes fill(size, static_cast<std::uint8_t>(n));
  switch (type) {
    case PayloadType::kBool: return n % 2 == 0;
    case PayloadType::kInt64: return static_cast<std::int64_t>(n);
    case PayloadType::kFloat64: return static_cast<double>(n) * 0.5;
    case PayloadType::kStringUtf8: {
      std::string s = "msg " + std::to_string(n);
      if (s.size() < size) s.resize(size, '.');
      return s;
    }
    case PayloadType::kBytes: return Blob{fill};
    case PayloadType::kImage: {
      Image img;
      img.width = static_cast<std::uint32_t>(std::max<std::size_t>(size, 1));
      img.height = 1;
      img.channels = 1;
      img.format = PixelFormat::kGray8;
      img.data.assign(img.width, static_cast<std::uint8_t>(n));
      return img;
    }
    case PayloadType::kAudio: {
      Audio a;
      a.sample_rate = 16000;
      a.channels = 1;
      a.format = SampleFormat::kPcm16Le;
      a.frame_count = static_cast<std::uint32_t>(std::max<std::size_t>(size / 2, 1));
      a.data.assign(a.frame_count * 2u, 0);
      return a;
    }
    case PayloadType::kVideoChunk: {
      VideoChunk v;
      v.codec = VideoCodec::kOpaque;
      v.chunk_index = static_cast<std::uint32_t>(n);
      v.keyframe = n % 30 == 0;
      v.data = fill;
      return v;
    }
    case PayloadType::kNull: break;
  }
  return {};
}

std::vector<std::size_t> parse_sizes(const std::string& list) {
  std::vector<std::size_t> sizes;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0) throw CLI::ValidationError("--payload-sizes", "bad size '" + item + "'");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  if (sizes.empty()) throw CLI::ValidationError("--payload-sizes", "empty list");
  return sizes;
}

struct Common {
  std::string broker;
  std::string node_name;

  NodeOptions options() const {
    NodeOptions o;
    if (!broker.empty()) o.broker = EndpointAddress::parse(broker);
    return o;
  }
};

void emit_csv(const std::string& path, const std::function<void(std::ostream&)>& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write(out);
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  CLI::App app{"mros: typed publish/subscribe middleware tools"};
  app.require_subcommand(1);
  Common common;
  std::string log_level = "warn";
  app.add_option("--broker", common.broker, "Broker address (default: $MROS_BROKER or tcp://127.0.0.1:7447)");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // broker
  auto* broker_cmd = app.add_subcommand("broker", "Run a broker until interrupted");
  std::string listen = "tcp://127.0.0.1:7447";
  broker_cmd->add_option("--listen", listen, "Address to bind")->capture_default_str();

  // pub
  auto* pub_cmd = app.add_subcommand("pub", "Publish synthetic messages");
  std::string pub_topic, pub_type = "BYTES";
  double rate_hz = 10.0;
  std::size_t payload_size = 16;
  bool pub_reliable = false;
  std::uint64_t pub_count = 0;
  pub_cmd->add_option("--topic", pub_topic, "Topic name")->required();
  pub_cmd->add_option("--type", pub_type, "Payload type")->capture_default_str();
  pub_cmd->add_option("--rate", rate_hz, "Messages per second")->check(CLI::PositiveNumber)->capture_default_str();
  pub_cmd->add_option("--payload-size", payload_size, "Approximate payload bytes")->capture_default_str();
  pub_cmd->add_flag("--reliable", pub_reliable, "Use reliable delivery");
  pub_cmd->add_option("--count", pub_count, "Stop after this many messages (0: run until interrupted)");
  pub_cmd->add_option("--name", common.node_name, "Node name");

  // sub
  auto* sub_cmd = app.add_subcommand("sub", "Print typed messages from one topic");
  std::string sub_topic, sub_type;
  std::uint64_t sub_count = 0;
  bool sub_reliable = false;
  sub_cmd->add_option("--topic", sub_topic, "Topic name or pattern")->required();
  sub_cmd->add_option("--type", sub_type, "Payload type")->required();
  sub_cmd->add_option("--count", sub_count, "Exit after this many messages");
  sub_cmd->add_flag("--reliable", sub_reliable, "Use reliable delivery");
  sub_cmd->add_option("--name", common.node_name, "Node name");

  // echo
  auto* echo_cmd = app.add_subcommand("echo", "Print every frame on matching topics");
  std::string echo_topic;
  std::uint64_t echo_count = 0;
  echo_cmd->add_option("--topic", echo_topic, "Topic name or pattern such as a/*")->required();
  echo_cmd->add_option("--count", echo_count, "Exit after this many frames");
  echo_cmd->add_option("--name", common.node_name, "Node name");

  // graph
  auto* graph_cmd = app.add_subcommand("graph", "Print the broker's graph as JSON");

  // log
  auto* log_cmd = app.add_subcommand("log", "Record or replay traffic");
  log_cmd->require_subcommand(1);
  auto* record_cmd = log_cmd->add_subcommand("record", "Record DATA frames to a file");
  std::string log_path;
  std::vector<std::string> record_topics;
  double record_seconds = 0;
  record_cmd->add_option("--output,-o", log_path, "Log file")->required();
  record_cmd->add_option("--topic", record_topics, "Topic pattern (repeatable)")->required();
  record_cmd->add_option("--duration", record_seconds, "Stop after this many seconds");
  auto* replay_cmd = log_cmd->add_subcommand("replay", "Republish a recorded file");
  bool replay_timed = false;
  replay_cmd->add_option("--input,-i", log_path, "Log file")->required()->check(CLI::ExistingFile);
  replay_cmd->add_flag("--timed", replay_timed, "Reproduce the recorded gaps instead of publishing back to back");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Benchmarks emitting CSV and a summary table");
  bench_cmd->require_subcommand(1);
  std::string transport = "inproc", csv_path, sizes_text = "256,4096,65536,1048576";
  double duration_s = 10, drop = 0, dup = 0, delay_ms = 0, interval_ms = 1;
  std::uint64_t seed = 1, count = 10000, samples = 1000;
  bool bench_reliable = false;
  std::size_t bench_payload = 256;
  auto add_common_bench = [&](CLI::App* cmd) {
    cmd->add_option("--transport", transport, "inproc or tcp")
        ->check(CLI::IsMember({"inproc", "tcp"}))
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Fault generator seed")->capture_default_str();
    cmd->add_option("--output,-o", csv_path, "CSV file (default: stdout)");
  };
  auto* tp_cmd = bench_cmd->add_subcommand("throughput", "Back-to-back publishing per payload size");
  add_common_bench(tp_cmd);
  tp_cmd->add_option("--payload-sizes", sizes_text, "Comma-separated payload sizes")->capture_default_str();
  tp_cmd->add_option("--duration", duration_s, "Seconds per payload size (>= 1)")
      ->check(CLI::Range(1.0, 86400.0))
      ->capture_default_str();
  tp_cmd->add_flag("--reliable", bench_reliable, "Use reliable delivery");
  tp_cmd->add_option("--drop", drop, "Drop probability")->check(CLI::Range(0.0, 1.0));
  tp_cmd->add_option("--dup", dup, "Duplicate probability")->check(CLI::Range(0.0, 1.0));
  auto* lat_cmd = bench_cmd->add_subcommand("latency", "Paced publishing with per-message latency");
  add_common_bench(lat_cmd);
  lat_cmd->add_option("--payload-size", bench_payload, "Payload bytes")->capture_default_str();
  lat_cmd->add_option("--samples", samples, "Messages to send")->capture_default_str();
  lat_cmd->add_option("--interval-ms", interval_ms, "Gap between messages")->check(CLI::PositiveNumber)->capture_default_str();
  lat_cmd->add_option("--delay-ms", delay_ms, "Fixed delay injected on the publisher")->check(CLI::NonNegativeNumber);
  auto* rel_cmd = bench_cmd->add_subcommand("reliability", "Delivery under seeded loss and duplication");
  add_common_bench(rel_cmd);
  rel_cmd->add_option("--count", count, "Messages to send")->capture_default_str();
  rel_cmd->add_option("--drop", drop, "Drop probability")->check(CLI::Range(0.0, 1.0));
  rel_cmd->add_option("--dup", dup, "Duplicate probability")->check(CLI::Range(0.0, 1.0));
  rel_cmd->add_flag("--reliable", bench_reliable, "Use reliable delivery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (broker_cmd->parsed()) {
      auto broker = Broker::serve(EndpointAddress::parse(listen));
      std::cerr << "broker listening on " << broker->address().to_string() << std::endl;
      wait_until({});
      broker->stop();
      return 0;
    }

    if (pub_cmd->parsed()) {
      const PayloadType type = parse_type(pub_type);
      Node node(common.node_name.empty() ? default_node_name("pub") : common.node_name, common.options());
      QosProfile qos = pub_reliable ? QosProfile::reliable() : QosProfile::best_effort();
      auto pub = node.advertise({pub_topic, type, qos});
      RateController rate(std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(1.0 / rate_hz)));
      std::uint64_t sent = 0;
      while (!g_interrupted && (pub_count == 0 || sent < pub_count)) {
        pub.publish(make_value(type, sent, payload_size));
        ++sent;
        rate.sleep();
      }
      if (pub_reliable) wait_until([&] { return pub.in_flight() == 0; }, Millis(5000));
      std::cerr << "published " << sent << std::endl;
      return 0;
    }

    if (sub_cmd->parsed()) {
      const PayloadType type = parse_type(sub_type);
      Node node(common.node_name.empty() ? default_node_name("sub") : common.node_name, common.options());
      QosProfile qos = sub_reliable ? QosProfile::reliable() : QosProfile::best_effort();
      qos.history_depth = 1024;
      std::atomic<std::uint64_t> got{0};
      auto sub = node.subscribe({sub_topic, type, qos}, [&](const Value& v, const MessageInfo& info) {
        std::cout << info.topic << " #" << info.sequence << ": " << describe(v) << '\n' << std::flush;
        ++got;
      });
      std::jthread spinner([&node](std::stop_token st) { node.spin(st); });
      wait_until([&] { return sub_count > 0 && got >= sub_count; });
      return 0;
    }

    if (echo_cmd->parsed()) {
      Node node(common.node_name.empty() ? default_node_name("echo") : common.node_name, common.options());
      QosProfile qos;
      qos.history_depth = 1024;
      std::atomic<std::uint64_t> got{0};
      auto sub = node.subscribe_raw(echo_topic, qos, [&](const Frame& f, const MessageInfo& info) {
        std::cout << info.topic << " seq=" << info.sequence << " type=" << to_string(f.payload_type)
                  << " bytes=" << f.payload.size() << '\n'
                  << std::flush;
        ++got;
      });
      std::jthread spinner([&node](std::stop_token st) { node.spin(st); });
      wait_until([&] { return echo_count > 0 && got >= echo_count; });
      return 0;
    }

    if (graph_cmd->parsed()) {
      Node node(common.node_name.empty() ? default_node_name("graph") : common.node_name, common.options());
      std::cout << node.graph().to_json() << std::endl;
      return 0;
    }

    if (record_cmd->parsed()) {
      Node node(default_node_name("record"), common.options());
      Recorder recorder(node, record_topics, log_path);
      std::jthread spinner([&node](std::stop_token st) { node.spin(st); });
      std::optional<Nanos> limit;
      if (record_seconds > 0) {
        limit = std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(record_seconds));
      }
      wait_until([&] { return recorder.error().has_value(); }, limit);
      spinner.request_stop();
      spinner.join();
      recorder.stop();
      std::cerr << "recorded " << recorder.frames() << " frames to " << log_path << std::endl;
      if (const auto err = recorder.error()) {
        std::cerr << "error: " << *err << std::endl;
        return 1;
      }
      return 0;
    }

    if (replay_cmd->parsed()) {
      Node node(default_node_name("replay"), common.options());
      const auto stats = replay(log_path, node, replay_timed ? ReplayMode::kTimed : ReplayMode::kFast);
      std::cerr << "replayed " << stats.published << " frames" << (stats.truncated ? " (log truncated)" : "")
                << std::endl;
      if (stats.error) {
        std::cerr << "error: " << *stats.error << std::endl;
        return 1;
      }
      return 0;
    }

    const auto t = bench::transport_from_string(transport);
    if (tp_cmd->parsed()) {
      bench::Scenario sc;
      sc.transport = t;
      sc.payload_sizes = parse_sizes(sizes_text);
      sc.duration = std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(duration_s));
      sc.qos = bench_reliable ? QosProfile::reliable() : QosProfile::best_effort();
      if (bench_reliable) sc.qos.history_depth = 65536;
      if (drop > 0 || dup > 0) sc.fault = FaultProfile{drop, dup, Millis(0), Millis(0), seed};
      sc.seed = seed;
      const auto rows = bench::run_throughput(sc);
      std::ostringstream params;
      params << "bench=throughput transport=" << transport << " payload_sizes=" << sizes_text
             << " duration_s=" << duration_s << " qos=" << (bench_reliable ? "reliable" : "best_effort")
             << " drop=" << drop << " dup=" << dup << " seed=" << seed;
      emit_csv(csv_path, [&](std::ostream& out) { bench::write_csv(out, params.str(), rows); });
      bench::write_table(std::cerr, rows);
      for (const auto& r : rows) {
        if (r.received == 0) return 1;
      }
      return 0;
    }

    if (lat_cmd->parsed()) {
      bench::LatencyScenario sc;
      sc.transport = t;
      sc.payload_size = bench_payload;
      sc.samples = samples;
      sc.interval = std::chrono::duration_cast<Nanos>(std::chrono::duration<double, std::milli>(interval_ms));
      sc.injected_delay = std::chrono::duration_cast<Nanos>(std::chrono::duration<double, std::milli>(delay_ms));
      sc.seed = seed;
      const auto r = bench::run_latency(sc);
      std::ostringstream params;
      params << "bench=latency transport=" << transport << " payload_size=" << bench_payload
             << " samples=" << samples << " interval_ms=" << interval_ms << " delay_ms=" << delay_ms
             << " seed=" << seed;
      emit_csv(csv_path, [&](std::ostream& out) { bench::write_csv(out, params.str(), {r.row}); });
      bench::write_table(std::cerr, {r.row});
      return r.row.received == samples ? 0 : 1;
    }

    if (rel_cmd->parsed()) {
      bench::ReliabilityScenario sc;
      sc.transport = t;
      sc.count = count;
      sc.reliable = bench_reliable;
      sc.drop = drop;
      sc.duplicate = dup;
      sc.seed = seed;
      const auto r = bench::run_reliability(sc);
      std::ostringstream params;
      params << "bench=reliability transport=" << transport << " count=" << count
             << " qos=" << (bench_reliable ? "reliable" : "best_effort") << " drop=" << drop << " dup=" << dup
             << " seed=" << seed;
      emit_csv(csv_path, [&](std::ostream& out) { bench::write_reliability_csv(out, params.str(), r); });
      bench::write_table(std::cerr, {r.row});
      std::cerr << "delivered=" << r.delivered << " duplicates=" << r.duplicates
                << " out_of_order=" << r.out_of_order << " retransmissions=" << r.retransmissions
                << " delivery_failures=" << r.delivery_failures << std::endl;
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
