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
#include <memory>
#include <string>
#include <vector>

#include "mros/reliability.hpp"
#include "mros/transport.hpp"

namespace mros {

namespace detail {
class BrokerCore;
class TcpListener;
}  // namespace detail

/// Role byte carried as the single payload byte of an ADVERTISE frame.
enum class AdvertiseRole : std::uint8_t { kTopic = 0, kService = 1, kAction = 2 };

struct BrokerConfig {
  Nanos heartbeat_interval = Millis(500);
  std::uint32_t missed_heartbeats = 3;
  /// Retransmission policy for reliable frames forwarded to subscribers.
  QosProfile forward_qos = QosProfile::reliable();
  /// After start, reliable DATA that matches no subscription is left
  /// unacknowledged so publishers retry until reconnecting subscribers re-register.
  Nanos recovery_window = Millis(1500);
  std::size_t outbox_capacity = 65536;
};

/// Introspection snapshot, serialized as the INFO_RESP JSON document.
struct GraphInfo {
  struct Topic {
    std::string name;
    std::string type;
    int publishers = 0;
    int subscribers = 0;
    friend bool operator==(const Topic&, const Topic&) = default;
  };

  std::vector<std::string> nodes;
  std::vector<Topic> topics;
  std::vector<std::string> services;

  std::string to_json() const;
  static GraphInfo from_json(std::string_view json);

  friend bool operator==(const GraphInfo&, const GraphInfo&) = default;
};

struct BrokerStats {
  std::uint64_t frames_in = 0;
  std::uint64_t data_delivered = 0;
  std::uint64_t data_unmatched = 0;
  std::uint64_t acks_deferred = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t forward_failures = 0;
  std::uint64_t sessions_open = 0;
  std::uint64_t sessions_expired = 0;
};

/// The central router. Fans DATA out to matching subscriptions, routes service
/// and action traffic by name and correlation id, answers INFO_REQ and emits
/// heartbeats.
class Broker {
 public:
  /// Binds `address` and starts serving. Throws TransportError on bind failure.
  static std::unique_ptr<Broker> serve(const EndpointAddress& address, BrokerConfig config = {});

  ~Broker();
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  /// Closes every session and releases the address.
  void stop();

  /// The bound address; for tcp with port 0 this carries the chosen port.
  const EndpointAddress& address() const { return address_; }

  GraphInfo graph() const;
  BrokerStats stats() const;

 private:
  Broker(EndpointAddress address, std::shared_ptr<detail::BrokerCore> core);

  EndpointAddress address_;
  std::shared_ptr<detail::BrokerCore> core_;
  std::unique_ptr<detail::TcpListener> listener_;
  bool stopped_ = false;
};

}  // namespace mros
