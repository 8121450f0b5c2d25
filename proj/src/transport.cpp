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

#include "mros/transport.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>

#include "broker_core.hpp"
#include "mros/frame_queue.hpp"
#include "tcp.hpp"

namespace mros {

// --- addresses ------------------------------------------------------------------

EndpointAddress EndpointAddress::parse(std::string_view text) {
  constexpr std::string_view kInproc = "inproc://";
  constexpr std::string_view kTcp = "tcp://";
  EndpointAddress addr;
  if (text.starts_with(kInproc)) {
    addr.scheme = Scheme::kInproc;
    addr.target = std::string(text.substr(kInproc.size()));
    if (addr.target.empty()) throw std::invalid_argument("inproc address needs a name");
    return addr;
  }
  if (text.starts_with(kTcp)) text.remove_prefix(kTcp.size());
  addr.scheme = Scheme::kTcp;
  addr.target = std::string(text);
  // Validates host:port.
  if (addr.host().empty()) throw std::invalid_argument("tcp address needs a host: " + addr.target);
  (void)addr.port();
  return addr;
}

EndpointAddress EndpointAddress::from_environment() {
  if (const char* env = std::getenv(kBrokerEnvVar); env != nullptr && *env != '\0') {
    return parse(env);
  }
  return tcp("127.0.0.1", kDefaultTcpPort);
}

std::string EndpointAddress::host() const {
  if (scheme == Scheme::kInproc) return {};
  const auto colon = target.rfind(':');
  return colon == std::string::npos ? target : target.substr(0, colon);
}

std::uint16_t EndpointAddress::port() const {
  if (scheme == Scheme::kInproc) return 0;
  const auto colon = target.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("tcp address needs a port: " + target);
  const std::string_view digits = std::string_view(target).substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  // Port 0 is accepted for listeners that let the OS pick.
  if (ec != std::errc() || ptr != digits.data() + digits.size() || value > 65535) {
    throw std::invalid_argument("invalid tcp port in " + target);
  }
  return static_cast<std::uint16_t>(value);
}

std::string EndpointAddress::to_string() const {
  return (scheme == Scheme::kInproc ? "inproc://" : "tcp://") + target;
}

// --- topic grammar --------------------------------------------------------------

namespace {
bool is_segment_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}
}  // namespace

bool is_valid_topic_name(std::string_view name) {
  if (name.empty()) return false;
  bool segment_empty = true;
  for (char c : name) {
    if (c == '/') {
      if (segment_empty) return false;
      segment_empty = true;
    } else if (is_segment_char(c)) {
      segment_empty = false;
    } else {
      return false;
    }
  }
  return !segment_empty;
}

bool is_valid_topic_pattern(std::string_view pattern) {
  if (pattern.ends_with("/*")) return is_valid_topic_name(pattern.substr(0, pattern.size() - 2));
  return is_valid_topic_name(pattern);
}

bool topic_matches(std::string_view pattern, std::string_view topic) {
  if (pattern == topic) return true;
  if (!pattern.ends_with("/*")) return false;
  const std::string_view prefix = pattern.substr(0, pattern.size() - 1);  // keeps the '/'
  return topic.size() > prefix.size() && topic.starts_with(prefix);
}

// --- Connection -----------------------------------------------------------------

bool Connection::recv_frames(std::vector<Frame>& out, Nanos timeout) {
  if (spill_pos_ < spill_.size()) {
    for (; spill_pos_ < spill_.size(); ++spill_pos_) out.push_back(std::move(spill_[spill_pos_]));
    spill_.clear();
    spill_pos_ = 0;
    return true;
  }
  return do_recv_frames(out, timeout);
}

std::optional<Frame> Connection::recv_frame(Nanos timeout) {
  if (spill_pos_ >= spill_.size()) {
    spill_.clear();
    spill_pos_ = 0;
    if (!do_recv_frames(spill_, timeout) || spill_.empty()) return std::nullopt;
  }
  Frame f = std::move(spill_[spill_pos_++]);
  if (spill_pos_ == spill_.size()) {
    spill_.clear();
    spill_pos_ = 0;
  }
  return f;
}

// --- inproc -----------------------------------------------------------------------

namespace {

class InprocSink final : public detail::SessionSink {
 public:
  explicit InprocSink(std::size_t capacity) : inbox(capacity) {}
  bool deliver(Frame frame) override { return inbox.push(std::move(frame)) == FrameQueue::PushResult::kOk; }
  void close() override { inbox.close(); }

  FrameQueue inbox;
};

class InprocConnection final : public Connection {
 public:
  explicit InprocConnection(std::shared_ptr<detail::BrokerCore> core)
      : core_(std::move(core)), sink_(std::make_shared<InprocSink>(65536)) {
    session_ = core_->open_session(sink_);
  }
  ~InprocConnection() override { close(); }

  bool send_frame(const Frame& frame) override {
    if (closed_.load(std::memory_order_acquire)) return false;
    validate_frame(frame);
    if (!core_->on_frame(session_, frame)) {
      closed_.store(true);
      sink_->inbox.close();
      return false;
    }
    return true;
  }

  void close() override {
    if (closed_.exchange(true)) return;
    core_->close_session(session_);
    sink_->inbox.close();
  }

  bool is_open() const override { return !closed_.load() && !sink_->inbox.closed(); }

 protected:
  bool do_recv_frames(std::vector<Frame>& out, Nanos timeout) override {
    return sink_->inbox.pop_all(out, timeout);
  }

 private:
  std::shared_ptr<detail::BrokerCore> core_;
  std::shared_ptr<InprocSink> sink_;
  detail::SessionId session_ = 0;
  std::atomic<bool> closed_{false};
};

}  // namespace

std::shared_ptr<Connection> connect(const EndpointAddress& address) {
  if (address.scheme == EndpointAddress::Scheme::kInproc) {
    auto core = detail::lookup_inproc(address.target);
    if (!core) throw TransportError("connection refused: no inproc broker at " + address.to_string());
    try {
      return std::make_shared<InprocConnection>(std::move(core));
    } catch (const TransportError&) {
      throw TransportError("connection refused: broker at " + address.to_string() + " is stopping");
    }
  }
  return detail::connect_tcp(address);
}

}  // namespace mros
