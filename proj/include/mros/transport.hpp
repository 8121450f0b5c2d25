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
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mros/clock.hpp"
#include "mros/envelope.hpp"

namespace mros {

inline constexpr std::uint16_t kDefaultTcpPort = 7447;
inline constexpr const char* kBrokerEnvVar = "MROS_BROKER";

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EndpointAddress {
  enum class Scheme { kInproc, kTcp };

  Scheme scheme = Scheme::kTcp;
  std::string target;  // registry key (inproc) or host:port (tcp)

  static EndpointAddress inproc(std::string name) { return {Scheme::kInproc, std::move(name)}; }
  static EndpointAddress tcp(std::string host, std::uint16_t port) {
    return {Scheme::kTcp, std::move(host) + ":" + std::to_string(port)};
  }

  /// Accepts "inproc://name", "tcp://host:port" and bare "host:port".
  static EndpointAddress parse(std::string_view text);
  /// $MROS_BROKER when set, otherwise tcp://127.0.0.1:7447.
  static EndpointAddress from_environment();

  std::string host() const;
  std::uint16_t port() const;
  std::string to_string() const;

  friend bool operator==(const EndpointAddress&, const EndpointAddress&) = default;
};

/// Full-duplex ordered frame stream to a broker.
///
/// send_frame is safe from any number of threads; receiving is single-consumer.
class Connection {
 public:
  virtual ~Connection() = default;

  /// False once the connection is closed; the frame is then lost.
  virtual bool send_frame(const Frame& frame) = 0;

  /// Appends every frame available within `timeout`. Returns false when the
  /// connection has closed and nothing more will arrive.
  bool recv_frames(std::vector<Frame>& out, Nanos timeout);

  std::optional<Frame> recv_frame(Nanos timeout);

  virtual void close() = 0;
  virtual bool is_open() const = 0;

 protected:
  virtual bool do_recv_frames(std::vector<Frame>& out, Nanos timeout) = 0;

 private:
  std::vector<Frame> spill_;
  std::size_t spill_pos_ = 0;
};

/// Opens a client connection. Throws TransportError when the broker is not reachable.
std::shared_ptr<Connection> connect(const EndpointAddress& address);

/// Topic names: one or more segments of [A-Za-z0-9_] joined by '/'.
bool is_valid_topic_name(std::string_view name);
/// A topic name, or a topic name prefix followed by "/*".
bool is_valid_topic_pattern(std::string_view pattern);

/// Exact match, or trailing "/*" matching any topic strictly below the prefix.
bool topic_matches(std::string_view pattern, std::string_view topic);

}  // namespace mros
