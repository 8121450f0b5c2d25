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

#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mros/broker.hpp"
#include "mros/timer_queue.hpp"

namespace mros::detail {

/// Broker-side end of one client connection.
class SessionSink {
 public:
  virtual ~SessionSink() = default;
  virtual bool deliver(Frame frame) = 0;
  virtual void close() = 0;
};

using SessionId = std::uint64_t;

class BrokerCore {
 public:
  explicit BrokerCore(BrokerConfig config);
  ~BrokerCore();

  void start();
  void shutdown();

  SessionId open_session(std::shared_ptr<SessionSink> sink);
  /// Routes one inbound frame. False if the session is gone.
  bool on_frame(SessionId session, Frame frame);
  void close_session(SessionId session);

  GraphInfo graph() const;
  BrokerStats stats() const;

 private:
  struct Subscription {
    std::uint64_t handle;
    std::string pattern;
    PayloadType type;
    bool reliable;
  };
  struct Advertisement {
    std::uint64_t handle;
    std::string name;
    PayloadType type;
    AdvertiseRole role;
  };
  struct Session {
    std::shared_ptr<SessionSink> sink;
    std::string node_name;
    TimePoint last_rx;
    std::vector<Subscription> subscriptions;
    std::vector<Advertisement> advertisements;
    std::unique_ptr<RetryTable> retries;
  };
  struct Route {
    SessionId client;
    SessionId server;
    std::string name;
  };
  struct AckWaiter {
    SessionId publisher = 0;
    Frame ack;
    std::set<SessionId> pending;  // reliable subscribers yet to acknowledge
  };
  using Outgoing = std::vector<std::pair<std::shared_ptr<SessionSink>, Frame>>;

  void handle_locked(SessionId id, Session& s, Frame& frame, Outgoing& out);
  void route_data_locked(SessionId id, Session& s, Frame& frame, Outgoing& out);
  void remove_session_locked(SessionId id, Outgoing& out);
  void drop_waiter_target_locked(SessionId target, std::uint64_t stream, std::uint64_t sequence);
  GraphInfo graph_locked() const;
  void heartbeat_tick();
  void retry_tick();
  static void flush(Outgoing& out);

  BrokerConfig config_;
  TimePoint started_at_;
  mutable std::mutex mutex_;
  std::map<SessionId, Session> sessions_;
  SessionId next_session_ = 1;
  std::map<std::string, std::pair<SessionId, std::uint64_t>> service_registry_;  // name -> (session, handle)
  std::map<CorrelationId, Route> pending_calls_;
  std::map<CorrelationId, Route> goals_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, AckWaiter> ack_waiters_;  // (stream, sequence)
  BrokerStats stats_;
  bool running_ = false;
  std::unique_ptr<TimerQueue> timers_;
};

// In-process endpoint registry.
void register_inproc(const std::string& name, const std::shared_ptr<BrokerCore>& core);
void unregister_inproc(const std::string& name, const BrokerCore* core);
std::shared_ptr<BrokerCore> lookup_inproc(const std::string& name);

/// Accepts TCP connections and bridges each one to a BrokerCore session.
class TcpListener {
 public:
  TcpListener(const EndpointAddress& address, std::shared_ptr<BrokerCore> core);
  ~TcpListener();

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;
};

}  // namespace mros::detail
