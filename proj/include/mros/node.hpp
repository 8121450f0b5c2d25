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

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <vector>

#include "mros/broker.hpp"
#include "mros/executor.hpp"
#include "mros/payload.hpp"
#include "mros/reliability.hpp"
#include "mros/transport.hpp"

namespace mros {

namespace detail {
class NodeCore;
struct PublisherState;
struct SubscriptionState;
struct TimerState;
}  // namespace detail

class NodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised locally when a value does not match the declared payload type.
class TypeMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TopicSpec {
  std::string name;
  PayloadType payload_type = PayloadType::kNull;
  QosProfile qos;
};

/// Delay before reconnect attempt k is min(base * 2^(k-1), max).
struct ReconnectPolicy {
  Nanos base = Millis(50);
  Nanos max = Millis(1000);
  std::uint32_t max_attempts = 0;  // 0: unlimited
};

enum class NodeState { kConnected, kReconnecting, kFailed, kClosed };

const char* to_string(NodeState state);

struct NodeOptions {
  /// Unset: $MROS_BROKER or the default TCP address.
  std::optional<EndpointAddress> broker;
  /// Shared by every node passed the same pointer. Unset: a private CFS executor.
  std::shared_ptr<Executor> executor;
  std::uint32_t weight = 1024;  // executor weight of each entity the node creates
  Nanos heartbeat_interval = Millis(500);
  std::uint32_t missed_heartbeats = 3;
  ReconnectPolicy reconnect;
  /// Seeds stream and correlation ids; unset draws from std::random_device.
  std::optional<std::uint64_t> seed;
  Nanos default_call_timeout = Millis(5000);
  /// Applied to every connection the node opens, including reconnects.
  std::function<std::shared_ptr<Connection>(std::shared_ptr<Connection>)> connection_decorator;
  /// Called from the node's receive thread.
  std::function<void(NodeState)> on_state_change;
};

struct MessageInfo {
  std::string topic;
  std::uint64_t sequence = 0;
  std::uint64_t timestamp_send = 0;
  std::uint64_t timestamp_receive = 0;  // wall clock at arrival, before queueing
  PayloadType payload_type = PayloadType::kNull;
  std::uint64_t stream = 0;
  std::size_t encoded_size = 0;
};

struct NodeStats {
  std::uint64_t frames_in = 0;
  std::uint64_t type_mismatches = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t gaps = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t delivery_failures = 0;
  std::uint64_t unknown_acks = 0;
  std::uint64_t stale_responses = 0;
  std::uint64_t reconnects = 0;
};

/// Fixed-cadence pacing: deadline(k) = epoch + k * period.
class RateController {
 public:
  explicit RateController(Nanos period, TimePoint epoch = SteadyClock::now());

  struct Step {
    std::uint64_t cycle;  // index of the deadline that was waited for
    TimePoint deadline;
    bool sleep;  // false when the caller is behind by less than one period
  };
  /// Decides the next wake from `now` and advances the cycle count. A caller
  /// behind by a full period or more skips to the next future deadline.
  Step next(TimePoint now);
  /// next(now), then sleeps until the returned deadline when it is in the future.
  TimePoint sleep();

  TimePoint deadline(std::uint64_t k) const { return epoch_ + period_ * static_cast<std::int64_t>(k); }
  Nanos period() const { return period_; }
  TimePoint epoch() const { return epoch_; }
  std::uint64_t cycle() const { return cycle_; }

 private:
  Nanos period_;
  TimePoint epoch_;
  std::uint64_t cycle_ = 0;
};

struct ParameterRange {
  std::optional<double> min;  // numeric types
  std::optional<double> max;
  std::optional<std::size_t> max_length;  // STRING_UTF8, in bytes
};

struct ParameterDecl {
  std::string name;
  PayloadType type = PayloadType::kInt64;  // BOOL, INT64, FLOAT64 or STRING_UTF8
  Value default_value;
  std::optional<ParameterRange> range;
};

class ParameterError : public std::runtime_error {
 public:
  enum class Reason { kUnknown, kAlreadyDeclared, kTypeMismatch, kValidation, kInvalidDecl };
  ParameterError(Reason reason, const std::string& what)
      : std::runtime_error(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

/// Throws ParameterError(kTypeMismatch or kValidation) when `value` does not satisfy `decl`.
void check_parameter(const ParameterDecl& decl, const Value& value);

/// Wire encoding of a remote set request: [u16 name_len][name][u8 type][typed payload].
Bytes encode_parameter_set(const std::string& name, const Value& value);
std::pair<std::string, Value> decode_parameter_set(ByteView bytes);

/// Service names hosted by every node for remote parameter access.
std::string parameter_service(const std::string& node_name, const std::string& operation);

class Publisher {
 public:
  Publisher() = default;
  Publisher(Publisher&&) noexcept;
  Publisher& operator=(Publisher&&) noexcept;
  ~Publisher();

  /// Throws TypeMismatchError before anything is sent when the value type
  /// differs from the topic's, and NodeError once the node has failed or closed.
  /// Returns the sequence number assigned to the message.
  std::uint64_t publish(const Value& value);
  /// Publishes an already encoded typed payload.
  std::uint64_t publish_encoded(PayloadType type, Bytes payload);

  const TopicSpec& spec() const;
  std::uint64_t stream() const;
  /// Reliable frames not yet acknowledged.
  std::size_t in_flight() const;
  std::uint64_t retransmissions() const;
  std::uint64_t delivery_failures() const;
  /// Called on the executor with the sequence of each frame whose retry budget ran out.
  void on_delivery_failed(std::function<void(std::uint64_t)> callback);
  void shutdown();
  explicit operator bool() const { return state_ != nullptr; }

 private:
  friend class Node;
  explicit Publisher(std::shared_ptr<detail::PublisherState> state);
  std::shared_ptr<detail::PublisherState> state_;
};

class Subscription {
 public:
  Subscription() = default;
  Subscription(Subscription&&) noexcept;
  Subscription& operator=(Subscription&&) noexcept;
  ~Subscription();

  /// Sends UNSUB and discards queued messages. Idempotent.
  void unsubscribe();
  const std::string& pattern() const;
  std::uint64_t received() const;
  std::uint64_t type_mismatches() const;
  std::uint64_t duplicates() const;
  std::uint64_t gaps() const;
  std::uint64_t dropped() const;  // evicted from the bounded queue
  explicit operator bool() const { return state_ != nullptr; }

 private:
  friend class Node;
  explicit Subscription(std::shared_ptr<detail::SubscriptionState> state);
  std::shared_ptr<detail::SubscriptionState> state_;
};

class Timer {
 public:
  Timer() = default;
  Timer(Timer&&) noexcept;
  Timer& operator=(Timer&&) noexcept;
  ~Timer();

  void cancel();
  Nanos period() const;
  std::uint64_t fired() const;
  explicit operator bool() const { return state_ != nullptr; }

 private:
  friend class Node;
  explicit Timer(std::shared_ptr<detail::TimerState> state);
  std::shared_ptr<detail::TimerState> state_;
};

/// A named endpoint on a broker. Callbacks run only inside the executor's spin.
class Node {
 public:
  using Callback = std::function<void(const Value&, const MessageInfo&)>;
  using RawCallback = std::function<void(const Frame&, const MessageInfo&)>;

  /// Connects and registers `name`. Throws NodeError when the name is taken or
  /// the broker cannot be reached.
  explicit Node(const std::string& name, NodeOptions options = {});
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  const std::string& name() const;
  NodeState state() const;
  std::shared_ptr<Executor> executor() const;
  NodeStats stats() const;

  /// Throws std::invalid_argument for a bad topic name or QoS and NodeError
  /// when the broker rejects a conflicting payload type.
  Publisher advertise(const TopicSpec& spec);
  /// Messages whose payload type differs from spec.payload_type are counted and dropped.
  Subscription subscribe(const TopicSpec& spec, Callback callback);
  /// Receives every matching DATA frame regardless of payload type.
  Subscription subscribe_raw(const std::string& pattern, const QosProfile& qos,
                             RawCallback callback);
  /// Fires at epoch + k * period; missed deadlines are skipped.
  Timer create_timer(Nanos period, std::function<void()> callback);

  void declare_parameter(const ParameterDecl& decl);
  Value get_parameter(const std::string& name) const;
  void set_parameter(const std::string& name, const Value& value);
  std::vector<std::string> list_parameters() const;

  /// INFO_REQ round trip.
  GraphInfo graph(Nanos timeout = Millis(2000));

  bool spin_once(Nanos timeout = Millis(100));
  void spin_for(Nanos duration);
  bool spin_until(const std::function<bool()>& done, Nanos timeout);
  void spin(std::stop_token stop);

  /// Stops the node's threads and closes the connection. Idempotent.
  void close();

  std::shared_ptr<detail::NodeCore> core() const { return core_; }

 private:
  std::shared_ptr<detail::NodeCore> core_;
};

}  // namespace mros
