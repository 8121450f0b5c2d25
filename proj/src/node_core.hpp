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

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "mros/node.hpp"
#include "mros/timer_queue.hpp"

namespace mros::detail {

class NodeCore;

struct PublisherState {
  std::shared_ptr<NodeCore> core;
  TopicSpec spec;
  std::uint64_t handle = 0;
  std::uint64_t stream = 0;
  std::unique_ptr<RetryTable> retries;  // reliable publishers only
  std::mutex send_mutex;
  std::uint64_t next_sequence = 1;
  std::atomic<std::uint64_t> failures{0};
  std::mutex callback_mutex;
  std::function<void(std::uint64_t)> on_failed;
  EntityId failure_entity = 0;
  std::atomic<bool> active{true};
};

struct SubscriptionState : std::enable_shared_from_this<SubscriptionState> {
  std::shared_ptr<NodeCore> core;
  std::string pattern;
  std::optional<PayloadType> type;  // unset: raw subscription
  QosProfile qos;
  std::uint64_t handle = 0;
  EntityId entity = 0;
  Node::Callback typed;
  Node::RawCallback raw;
  std::atomic<bool> active{true};
  std::atomic<std::uint64_t> received{0};
  std::atomic<std::uint64_t> mismatches{0};

  mutable std::mutex rx_mutex;
  std::unordered_map<std::uint64_t, StreamReceiver> receivers;  // by publisher stream

  /// Runs on the receive thread.
  void deliver(const Frame& frame, std::uint64_t received_at);
  std::uint64_t duplicates() const;
  std::uint64_t gaps() const;
};

struct TimerState {
  std::shared_ptr<NodeCore> core;
  Nanos period{0};
  std::function<void()> callback;
  TimerQueue::TaskId task = 0;
  EntityId entity = 0;
  std::atomic<bool> active{true};
  std::atomic<std::uint64_t> fired{0};
};

/// SVC_RESP answering `request` with a typed payload.
Frame make_response(const Frame& request, TypedPayload payload);
/// SVC_RESP with the error flag and `message` as STRING_UTF8 payload.
Frame make_error_response(const Frame& request, const std::string& message);
std::string error_text(const Frame& frame);

class NodeCore : public std::enable_shared_from_this<NodeCore> {
 public:
  /// Receives frames routed by kind and name or by correlation. A frame with
  /// the error flag set also signals node shutdown to correlation handlers.
  using Handler = std::function<void(Frame&)>;

  NodeCore(std::string name, NodeOptions options);
  ~NodeCore();

  /// Connects, registers the name and starts the receive and housekeeping threads.
  void start();
  void close();

  const std::string& name() const { return name_; }
  const NodeOptions& options() const { return options_; }
  NodeState state() const;
  /// Throws NodeError when the node has failed or closed.
  void ensure_usable() const;

  Executor& executor() { return *executor_; }
  std::shared_ptr<Executor> executor_ptr() const { return executor_; }
  TimerQueue& timers() { return *timers_; }
  EntityId add_entity(const std::string& label, std::size_t depth);
  void remove_entity(EntityId id);

  /// False while disconnected.
  bool send(const Frame& frame);

  std::uint64_t next_handle() { return next_handle_.fetch_add(1); }
  std::uint64_t random_u64();
  CorrelationId new_correlation();

  /// Registration frames are replayed after every reconnect.
  void add_registration(std::uint64_t handle, const Frame& frame);
  /// Sends `frame` followed by an INFO_REQ barrier and throws NodeError if the
  /// broker rejects it.
  void confirm_registration(std::uint64_t handle, Frame frame, Nanos timeout = Millis(2000));
  /// Forgets the registration and sends UNSUB for its handle.
  void drop_registration(std::uint64_t handle);

  void set_name_handler(FrameKind kind, const std::string& name, Handler handler);
  void clear_name_handler(FrameKind kind, const std::string& name);
  void set_correlation_handler(const CorrelationId& correlation, Handler handler);
  bool clear_correlation_handler(const CorrelationId& correlation);

  void add_publisher(const std::shared_ptr<PublisherState>& publisher);
  void remove_publisher(std::uint64_t stream);
  void add_subscription(const std::shared_ptr<SubscriptionState>& subscription);
  void remove_subscription(const SubscriptionState* subscription);

  void count_stale_response() { ++stale_responses_; }
  NodeStats stats() const;
  GraphInfo graph(Nanos timeout);

  void declare_parameter(const ParameterDecl& decl);
  Value get_parameter(const std::string& name) const;
  void set_parameter(const std::string& name, const Value& value);
  std::vector<std::string> list_parameters() const;

 private:
  std::shared_ptr<Connection> open_connection();
  void handshake(Connection& connection);
  void install(std::shared_ptr<Connection> connection);
  std::shared_ptr<Connection> connection() const;
  void set_state(NodeState state);

  void receive_loop(std::stop_token stop);
  bool reconnect(std::stop_token stop);
  void dispatch(Frame& frame);
  void on_data(const Frame& frame);
  void on_ack(const Frame& frame);
  void heartbeat_tick();
  void retry_tick();

  void host_parameter_services();
  void serve_parameter_request(const Frame& request);

  const std::string name_;
  NodeOptions options_;
  EndpointAddress address_;
  std::shared_ptr<Executor> executor_;
  std::unique_ptr<TimerQueue> timers_;

  mutable std::mutex state_mutex_;
  NodeState state_ = NodeState::kReconnecting;
  bool closed_ = false;

  mutable std::mutex conn_mutex_;
  std::shared_ptr<Connection> conn_;
  std::atomic<std::int64_t> last_rx_ns_{0};

  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  std::atomic<std::uint64_t> next_handle_{1};
  std::uint64_t hello_sequence_ = 0;

  mutable std::mutex registry_mutex_;
  std::map<std::uint64_t, Frame> registrations_;
  std::map<std::pair<FrameKind, std::string>, Handler> name_handlers_;
  std::map<CorrelationId, Handler> correlation_handlers_;

  mutable std::mutex pubs_mutex_;
  std::unordered_map<std::uint64_t, std::shared_ptr<PublisherState>> publishers_;  // by stream
  mutable std::mutex subs_mutex_;
  std::vector<std::shared_ptr<SubscriptionState>> subscriptions_;

  std::mutex entities_mutex_;
  std::set<EntityId> entities_;

  mutable std::mutex params_mutex_;
  std::map<std::string, std::pair<ParameterDecl, Value>> params_;
  EntityId params_entity_ = 0;

  std::atomic<std::uint64_t> frames_in_{0};
  std::atomic<std::uint64_t> unknown_acks_{0};
  std::atomic<std::uint64_t> stale_responses_{0};
  std::atomic<std::uint64_t> reconnects_{0};
  std::atomic<std::uint64_t> orphan_mismatches_{0};

  std::vector<TimerQueue::TaskId> housekeeping_;
  std::mutex wait_mutex_;
  std::condition_variable_any wait_cv_;
  std::jthread receiver_;
};

}  // namespace mros::detail
