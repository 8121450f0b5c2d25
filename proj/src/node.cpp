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

#include "mros/node.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <future>

#include "node_core.hpp"

namespace mros {

const char* to_string(NodeState state) {
  switch (state) {
    case NodeState::kConnected: return "connected";
    case NodeState::kReconnecting: return "reconnecting";
    case NodeState::kFailed: return "failed";
    case NodeState::kClosed: return "closed";
  }
  return "?";
}

// RateController

RateController::RateController(Nanos period, TimePoint epoch) : period_(period), epoch_(epoch) {
  if (period <= Nanos{0}) throw std::invalid_argument("rate period must be positive");
}

RateController::Step RateController::next(TimePoint now) {
  const TimePoint due = deadline(cycle_ + 1);
  if (now <= due) {
    ++cycle_;
    return {cycle_, due, true};
  }
  if (now - due < period_) {
    ++cycle_;
    return {cycle_, due, false};
  }
  // Behind by a full period or more: skip to the first deadline after now.
  cycle_ = static_cast<std::uint64_t>((now - epoch_) / period_) + 1;
  return {cycle_, deadline(cycle_), true};
}

TimePoint RateController::sleep() {
  const Step step = next(SteadyClock::now());
  if (step.sleep) std::this_thread::sleep_until(step.deadline);
  return step.deadline;
}

namespace detail {

namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<Nanos>(SteadyClock::now().time_since_epoch()).count();
}

Frame control_frame(FrameKind kind, std::string topic) {
  Frame f;
  f.kind = kind;
  f.timestamp_send = wall_clock_ns();
  f.topic = std::move(topic);
  return f;
}

bool valid_node_name(const std::string& name) {
  if (name.empty() || name.front() == '/') return false;
  return std::none_of(name.begin(), name.end(),
                      [](unsigned char c) { return std::isspace(c) != 0 || c < 0x20; });
}

}  // namespace

Frame make_response(const Frame& request, TypedPayload payload) {
  Frame f;
  f.kind = FrameKind::kSvcResp;
  f.payload_type = payload.type;
  f.sequence = request.sequence;
  f.timestamp_send = wall_clock_ns();
  f.topic = request.topic;
  f.correlation = request.correlation;
  f.payload = std::move(payload.bytes);
  return f;
}

Frame make_error_response(const Frame& request, const std::string& message) {
  Frame f = make_response(request, {PayloadType::kStringUtf8, Bytes(message.begin(), message.end())});
  f.flags = flags::kErrorResponse;
  return f;
}

std::string error_text(const Frame& frame) {
  return std::string(frame.payload.begin(), frame.payload.end());
}

// SubscriptionState

void SubscriptionState::deliver(const Frame& frame, std::uint64_t received_at) {
  std::vector<Frame> ready;
  {
    std::lock_guard lock(rx_mutex);
    const std::uint64_t stream = stream_of(frame.correlation);
    auto it = receivers.find(stream);
    if (it == receivers.end()) {
      const auto mode = frame.requires_ack() && qos.is_reliable() ? ReliabilityMode::kReliable
                                                                  : ReliabilityMode::kBestEffort;
      it = receivers.emplace(stream, StreamReceiver(mode, qos.history_depth)).first;
    }
    it->second.on_frame(frame, ready);
  }
  for (auto& f : ready) {
    MessageInfo info;
    info.topic = f.topic;
    info.sequence = f.sequence;
    info.timestamp_send = f.timestamp_send;
    info.timestamp_receive = received_at;
    info.payload_type = f.payload_type;
    info.stream = stream_of(f.correlation);
    info.encoded_size = encoded_size(f);
    if (type) {
      if (f.payload_type != *type) {
        ++mismatches;
        continue;
      }
      Value value;
      try {
        value = decode_typed_payload(f.payload_type, f.payload);
      } catch (const CodecError& e) {
        spdlog::warn("subscription '{}': undecodable payload: {}", pattern, e.what());
        ++mismatches;
        continue;
      }
      ++received;
      core->executor().post(entity, [self = shared_from_this(), value = std::move(value),
                                     info = std::move(info)] {
        if (self->active) self->typed(value, info);
      });
    } else {
      ++received;
      core->executor().post(entity, [self = shared_from_this(), f = std::move(f),
                                     info = std::move(info)] {
        if (self->active) self->raw(f, info);
      });
    }
  }
}

std::uint64_t SubscriptionState::duplicates() const {
  std::lock_guard lock(rx_mutex);
  std::uint64_t n = 0;
  for (const auto& [stream, rx] : receivers) n += rx.duplicates();
  return n;
}

std::uint64_t SubscriptionState::gaps() const {
  std::lock_guard lock(rx_mutex);
  std::uint64_t n = 0;
  for (const auto& [stream, rx] : receivers) n += rx.gaps();
  return n;
}

// NodeCore

NodeCore::NodeCore(std::string name, NodeOptions options)
    : name_(std::move(name)),
      options_(std::move(options)),
      address_(options_.broker ? *options_.broker : EndpointAddress::from_environment()),
      executor_(options_.executor ? options_.executor : make_executor(ExecutorKind::kCfs)) {
  if (!valid_node_name(name_)) throw std::invalid_argument("invalid node name '" + name_ + "'");
  if (options_.heartbeat_interval <= Nanos{0} || options_.missed_heartbeats == 0) {
    throw std::invalid_argument("heartbeat interval and missed count must be positive");
  }
  if (options_.reconnect.base <= Nanos{0} || options_.reconnect.base > options_.reconnect.max) {
    throw std::invalid_argument("reconnect base must be positive and at most max");
  }
  if (options_.seed) {
    rng_.seed(*options_.seed);
  } else {
    std::random_device rd;
    rng_.seed((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  }
}

NodeCore::~NodeCore() { close(); }

std::shared_ptr<Connection> NodeCore::open_connection() {
  auto c = connect(address_);
  if (options_.connection_decorator) c = options_.connection_decorator(std::move(c));
  return c;
}

void NodeCore::handshake(Connection& c) {
  Frame hello = control_frame(FrameKind::kHeartbeat, name_);
  hello.flags = flags::kRequiresAck;
  hello.sequence = ++hello_sequence_;
  const TimePoint give_up = SteadyClock::now() + Millis(2000);
  TimePoint resend = SteadyClock::now();
  while (SteadyClock::now() < give_up) {
    if (SteadyClock::now() >= resend) {
      if (!c.send_frame(hello)) throw TransportError("connection closed during hello");
      resend = SteadyClock::now() + Millis(200);
    }
    auto reply = c.recv_frame(Millis(20));
    if (!reply) {
      if (!c.is_open()) throw TransportError("connection closed during hello");
      continue;
    }
    if (reply->kind != FrameKind::kHeartbeat || reply->topic != name_) continue;
    if (reply->is_error()) throw NodeError(error_text(*reply));
    return;
  }
  throw TransportError("no reply to hello from " + address_.to_string());
}

void NodeCore::install(std::shared_ptr<Connection> c) {
  last_rx_ns_ = now_ns();
  std::lock_guard lock(conn_mutex_);
  conn_ = std::move(c);
}

std::shared_ptr<Connection> NodeCore::connection() const {
  std::lock_guard lock(conn_mutex_);
  return conn_;
}

void NodeCore::start() {
  std::shared_ptr<Connection> c;
  try {
    c = open_connection();
    handshake(*c);
  } catch (const TransportError& e) {
    if (c) c->close();
    throw NodeError("node '" + name_ + "': " + e.what());
  } catch (...) {
    if (c) c->close();
    throw;
  }
  install(std::move(c));
  set_state(NodeState::kConnected);

  timers_ = std::make_unique<TimerQueue>();
  std::weak_ptr<NodeCore> weak = weak_from_this();
  housekeeping_.push_back(timers_->schedule_every(
      options_.heartbeat_interval,
      [weak] {
        if (auto self = weak.lock()) self->heartbeat_tick();
      },
      options_.heartbeat_interval));
  housekeeping_.push_back(timers_->schedule_every(
      Millis(5),
      [weak] {
        if (auto self = weak.lock()) self->retry_tick();
      },
      Millis(5)));
  receiver_ = std::jthread([this](std::stop_token st) { receive_loop(st); });
  host_parameter_services();
}

void NodeCore::close() {
  {
    std::lock_guard lock(state_mutex_);
    if (closed_) return;
    closed_ = true;
  }
  set_state(NodeState::kClosed);
  if (receiver_.joinable()) {
    receiver_.request_stop();
    wait_cv_.notify_all();
  }
  if (auto c = connection()) c->close();
  if (receiver_.joinable()) {
    if (receiver_.get_id() == std::this_thread::get_id()) {
      receiver_.detach();
    } else {
      receiver_.join();
    }
  }
  if (timers_) timers_->stop();

  // Outstanding requests learn about the shutdown through an error frame.
  std::map<CorrelationId, Handler> pending;
  {
    std::lock_guard lock(registry_mutex_);
    pending.swap(correlation_handlers_);
    name_handlers_.clear();
    registrations_.clear();
  }
  for (auto& [correlation, handler] : pending) {
    Frame closed;
    closed.kind = FrameKind::kSvcResp;
    closed.flags = flags::kErrorResponse;
    closed.correlation = correlation;
    const std::string msg = "node closed";
    closed.payload_type = PayloadType::kStringUtf8;
    closed.payload.assign(msg.begin(), msg.end());
    handler(closed);
  }

  std::unordered_map<std::uint64_t, std::shared_ptr<PublisherState>> pubs;
  std::vector<std::shared_ptr<SubscriptionState>> subs;
  {
    std::lock_guard lock(pubs_mutex_);
    pubs.swap(publishers_);
  }
  {
    std::lock_guard lock(subs_mutex_);
    subs.swap(subscriptions_);
  }
  for (auto& s : subs) s->active = false;
  for (auto& [stream, p] : pubs) p->active = false;
  std::set<EntityId> entities;
  {
    std::lock_guard lock(entities_mutex_);
    entities.swap(entities_);
  }
  for (EntityId id : entities) executor_->remove_entity(id);
}

NodeState NodeCore::state() const {
  std::lock_guard lock(state_mutex_);
  return state_;
}

void NodeCore::set_state(NodeState state) {
  {
    std::lock_guard lock(state_mutex_);
    if (state_ == state) return;
    if (closed_ && state != NodeState::kClosed) return;
    state_ = state;
  }
  spdlog::debug("node '{}': {}", name_, to_string(state));
  if (options_.on_state_change) options_.on_state_change(state);
}

void NodeCore::ensure_usable() const {
  const NodeState s = state();
  if (s == NodeState::kFailed) throw NodeError("node '" + name_ + "' has failed");
  if (s == NodeState::kClosed) throw NodeError("node '" + name_ + "' is closed");
}

EntityId NodeCore::add_entity(const std::string& label, std::size_t depth) {
  const EntityId id = executor_->add_entity(name_ + ":" + label, options_.weight, depth);
  std::lock_guard lock(entities_mutex_);
  entities_.insert(id);
  return id;
}

void NodeCore::remove_entity(EntityId id) {
  {
    std::lock_guard lock(entities_mutex_);
    if (entities_.erase(id) == 0) return;
  }
  executor_->remove_entity(id);
}

bool NodeCore::send(const Frame& frame) {
  auto c = connection();
  return c && c->send_frame(frame);
}

std::uint64_t NodeCore::random_u64() {
  std::lock_guard lock(rng_mutex_);
  std::uint64_t v = 0;
  while (v == 0) v = rng_();
  return v;
}

CorrelationId NodeCore::new_correlation() {
  CorrelationId id{};
  std::lock_guard lock(rng_mutex_);
  while (id == kNoCorrelation) {
    const std::uint64_t hi = rng_();
    const std::uint64_t lo = rng_();
    for (int i = 0; i < 8; ++i) {
      id[i] = static_cast<std::uint8_t>(hi >> (56 - 8 * i));
      id[8 + i] = static_cast<std::uint8_t>(lo >> (56 - 8 * i));
    }
  }
  return id;
}

void NodeCore::add_registration(std::uint64_t handle, const Frame& frame) {
  {
    std::lock_guard lock(registry_mutex_);
    registrations_[handle] = frame;
  }
  send(frame);
}

void NodeCore::confirm_registration(std::uint64_t handle, Frame frame, Nanos timeout) {
  frame.correlation = new_correlation();
  auto outcome = std::make_shared<std::promise<std::optional<std::string>>>();
  auto settled = std::make_shared<std::atomic<bool>>(false);
  auto future = outcome->get_future();
  set_correlation_handler(frame.correlation, [outcome, settled](Frame& reply) {
    if (settled->exchange(true)) return;
    if (reply.is_error()) {
      outcome->set_value(error_text(reply));
    } else {
      outcome->set_value(std::nullopt);
    }
  });
  add_registration(handle, frame);
  Frame barrier = control_frame(FrameKind::kInfoReq, {});
  barrier.correlation = frame.correlation;
  send(barrier);
  const bool answered = future.wait_for(timeout) == std::future_status::ready;
  clear_correlation_handler(frame.correlation);
  if (!answered) {
    spdlog::warn("node '{}': no confirmation for '{}' within {} ms", name_, frame.topic,
                 std::chrono::duration_cast<Millis>(timeout).count());
    return;
  }
  if (auto error = future.get()) {
    {
      std::lock_guard lock(registry_mutex_);
      registrations_.erase(handle);
    }
    throw NodeError(*error);
  }
}

void NodeCore::drop_registration(std::uint64_t handle) {
  {
    std::lock_guard lock(registry_mutex_);
    if (registrations_.erase(handle) == 0) return;
  }
  Frame unsub = control_frame(FrameKind::kUnsub, {});
  unsub.sequence = handle;
  send(unsub);
}

void NodeCore::set_name_handler(FrameKind kind, const std::string& name, Handler handler) {
  std::lock_guard lock(registry_mutex_);
  name_handlers_[{kind, name}] = std::move(handler);
}

void NodeCore::clear_name_handler(FrameKind kind, const std::string& name) {
  std::lock_guard lock(registry_mutex_);
  name_handlers_.erase({kind, name});
}

void NodeCore::set_correlation_handler(const CorrelationId& correlation, Handler handler) {
  std::lock_guard lock(registry_mutex_);
  correlation_handlers_[correlation] = std::move(handler);
}

bool NodeCore::clear_correlation_handler(const CorrelationId& correlation) {
  std::lock_guard lock(registry_mutex_);
  return correlation_handlers_.erase(correlation) != 0;
}

void NodeCore::add_publisher(const std::shared_ptr<PublisherState>& publisher) {
  std::lock_guard lock(pubs_mutex_);
  publishers_[publisher->stream] = publisher;
}

void NodeCore::remove_publisher(std::uint64_t stream) {
  std::shared_ptr<PublisherState> gone;
  std::lock_guard lock(pubs_mutex_);
  auto it = publishers_.find(stream);
  if (it == publishers_.end()) return;
  gone = std::move(it->second);
  publishers_.erase(it);
}

void NodeCore::add_subscription(const std::shared_ptr<SubscriptionState>& subscription) {
  std::lock_guard lock(subs_mutex_);
  subscriptions_.push_back(subscription);
}

void NodeCore::remove_subscription(const SubscriptionState* subscription) {
  std::shared_ptr<SubscriptionState> gone;
  std::lock_guard lock(subs_mutex_);
  auto it = std::find_if(subscriptions_.begin(), subscriptions_.end(),
                         [&](const auto& s) { return s.get() == subscription; });
  if (it == subscriptions_.end()) return;
  gone = std::move(*it);
  subscriptions_.erase(it);
}

NodeStats NodeCore::stats() const {
  NodeStats s;
  s.frames_in = frames_in_;
  s.unknown_acks = unknown_acks_;
  s.stale_responses = stale_responses_;
  s.reconnects = reconnects_;
  s.type_mismatches = orphan_mismatches_;
  {
    std::lock_guard lock(subs_mutex_);
    for (const auto& sub : subscriptions_) {
      s.type_mismatches += sub->mismatches;
      s.duplicates += sub->duplicates();
      s.gaps += sub->gaps();
    }
  }
  std::lock_guard lock(pubs_mutex_);
  for (const auto& [stream, pub] : publishers_) {
    s.delivery_failures += pub->failures;
    if (pub->retries) {
      s.retransmissions += pub->retries->retransmissions();
      s.unknown_acks += pub->retries->unknown_acks();
    }
  }
  return s;
}

GraphInfo NodeCore::graph(Nanos timeout) {
  ensure_usable();
  Frame req = control_frame(FrameKind::kInfoReq, {});
  req.correlation = new_correlation();
  auto reply = std::make_shared<std::promise<Frame>>();
  auto settled = std::make_shared<std::atomic<bool>>(false);
  auto future = reply->get_future();
  set_correlation_handler(req.correlation, [reply, settled](Frame& f) {
    if (!settled->exchange(true)) reply->set_value(f);
  });
  send(req);
  const bool answered = future.wait_for(timeout) == std::future_status::ready;
  clear_correlation_handler(req.correlation);
  if (!answered) throw NodeError("graph query timed out");
  Frame f = future.get();
  if (f.is_error()) throw NodeError(error_text(f));
  return GraphInfo::from_json(std::string(f.payload.begin(), f.payload.end()));
}

// Receive path

void NodeCore::receive_loop(std::stop_token stop) {
  std::vector<Frame> batch;
  while (!stop.stop_requested()) {
    auto c = connection();
    if (!c) {
      if (!reconnect(stop)) return;
      continue;
    }
    batch.clear();
    const bool open = c->recv_frames(batch, Millis(50));
    if (!batch.empty()) last_rx_ns_ = now_ns();
    for (auto& f : batch) dispatch(f);
    if (!open && !stop.stop_requested()) {
      spdlog::info("node '{}': connection lost", name_);
      std::lock_guard lock(conn_mutex_);
      if (conn_ == c) conn_.reset();
    }
  }
}

bool NodeCore::reconnect(std::stop_token stop) {
  set_state(NodeState::kReconnecting);
  const ReconnectPolicy& policy = options_.reconnect;
  Nanos delay = policy.base;
  for (std::uint32_t attempt = 1;; ++attempt) {
    if (policy.max_attempts != 0 && attempt > policy.max_attempts) {
      spdlog::error("node '{}': reconnect budget of {} attempts exhausted", name_,
                    policy.max_attempts);
      set_state(NodeState::kFailed);
      return false;
    }
    {
      std::unique_lock lock(wait_mutex_);
      wait_cv_.wait_for(lock, stop, delay, [] { return false; });
    }
    if (stop.stop_requested()) return false;
    delay = std::min(delay * 2, policy.max);
    std::shared_ptr<Connection> c;
    try {
      c = open_connection();
      handshake(*c);
    } catch (const std::exception& e) {
      spdlog::debug("node '{}': reconnect attempt {} failed: {}", name_, attempt, e.what());
      if (c) c->close();
      continue;
    }
    install(c);
    std::vector<Frame> replay;
    {
      std::lock_guard lock(registry_mutex_);
      for (const auto& [handle, frame] : registrations_) replay.push_back(frame);
    }
    for (const auto& f : replay) c->send_frame(f);
    {
      const TimePoint now = SteadyClock::now();
      std::lock_guard lock(pubs_mutex_);
      for (auto& [stream, pub] : publishers_) {
        if (pub->retries) pub->retries->expedite(now);
      }
    }
    ++reconnects_;
    spdlog::info("node '{}': reconnected after {} attempt(s)", name_, attempt);
    set_state(NodeState::kConnected);
    return true;
  }
}

void NodeCore::dispatch(Frame& frame) {
  ++frames_in_;
  switch (frame.kind) {
    case FrameKind::kData:
      on_data(frame);
      return;
    case FrameKind::kAck:
      on_ack(frame);
      return;
    case FrameKind::kHeartbeat:
      return;
    case FrameKind::kSvcReq:
    case FrameKind::kActionGoal:
    case FrameKind::kActionCancel: {
      Handler handler;
      {
        std::lock_guard lock(registry_mutex_);
        auto it = name_handlers_.find({frame.kind, frame.topic});
        if (it != name_handlers_.end()) handler = it->second;
      }
      if (handler) {
        handler(frame);
      } else if (frame.kind == FrameKind::kSvcReq) {
        send(make_error_response(frame, "service '" + frame.topic + "' is not hosted here"));
      }
      return;
    }
    case FrameKind::kSvcResp:
    case FrameKind::kActionFeedback:
    case FrameKind::kActionResult:
    case FrameKind::kInfoResp:
    case FrameKind::kAdvertise:
    case FrameKind::kSub:
    case FrameKind::kUnsub:
    case FrameKind::kInfoReq: {
      Handler handler;
      {
        std::lock_guard lock(registry_mutex_);
        auto it = correlation_handlers_.find(frame.correlation);
        if (it != correlation_handlers_.end()) handler = it->second;
      }
      if (handler) {
        handler(frame);
      } else if (frame.kind == FrameKind::kSvcResp || frame.kind == FrameKind::kActionResult) {
        ++stale_responses_;
      } else if (frame.is_error()) {
        spdlog::warn("node '{}': broker rejected {} '{}': {}", name_, to_string(frame.kind),
                     frame.topic, error_text(frame));
      }
      return;
    }
  }
}

void NodeCore::on_data(const Frame& frame) {
  // Acknowledge first: a lost ack must be answered again on retransmission.
  if (frame.requires_ack()) send(make_ack(frame));
  const auto received_at = wall_clock_ns();
  std::lock_guard lock(subs_mutex_);
  for (const auto& sub : subscriptions_) {
    if (sub->active && topic_matches(sub->pattern, frame.topic)) sub->deliver(frame, received_at);
  }
}

void NodeCore::on_ack(const Frame& frame) {
  std::shared_ptr<PublisherState> pub;
  {
    std::lock_guard lock(pubs_mutex_);
    auto it = publishers_.find(stream_of(frame.correlation));
    if (it != publishers_.end()) pub = it->second;
  }
  if (!pub || !pub->retries) {
    ++unknown_acks_;
    return;
  }
  pub->retries->handle_ack(frame);
}

void NodeCore::heartbeat_tick() {
  if (state() != NodeState::kConnected) return;
  auto c = connection();
  if (!c) return;
  c->send_frame(control_frame(FrameKind::kHeartbeat, name_));
  const auto silent = Nanos(now_ns() - last_rx_ns_.load());
  if (silent > options_.heartbeat_interval * options_.missed_heartbeats) {
    spdlog::warn("node '{}': broker silent for {} ms, reconnecting", name_,
                 std::chrono::duration_cast<Millis>(silent).count());
    c->close();
  }
}

void NodeCore::retry_tick() {
  std::vector<std::shared_ptr<PublisherState>> reliable;
  {
    std::lock_guard lock(pubs_mutex_);
    for (const auto& [stream, pub] : publishers_) {
      if (pub->retries && pub->retries->in_flight() > 0) reliable.push_back(pub);
    }
  }
  const TimePoint now = SteadyClock::now();
  for (const auto& pub : reliable) {
    auto due = pub->retries->collect_due(now);
    for (const auto& f : due.retransmit) send(f);
    if (due.failed.empty()) continue;
    pub->failures += due.failed.size();
    std::function<void(std::uint64_t)> callback;
    EntityId entity = 0;
    {
      std::lock_guard lock(pub->callback_mutex);
      callback = pub->on_failed;
      entity = pub->failure_entity;
    }
    for (const auto& f : due.failed) {
      spdlog::debug("node '{}': delivery failed for '{}' #{}", name_, f.topic, f.sequence);
      if (callback) executor_->post(entity, [callback, seq = f.sequence] { callback(seq); });
    }
  }
}

}  // namespace detail

// Publisher

Publisher::Publisher(std::shared_ptr<detail::PublisherState> state) : state_(std::move(state)) {}
Publisher::Publisher(Publisher&&) noexcept = default;
Publisher& Publisher::operator=(Publisher&& other) noexcept {
  if (this != &other) {
    shutdown();
    state_ = std::move(other.state_);
  }
  return *this;
}
Publisher::~Publisher() { shutdown(); }

void Publisher::shutdown() {
  if (!state_) return;
  auto s = std::move(state_);
  if (!s->active.exchange(false)) return;
  s->core->drop_registration(s->handle);
  s->core->remove_publisher(s->stream);
  EntityId entity = 0;
  {
    std::lock_guard lock(s->callback_mutex);
    entity = s->failure_entity;
  }
  if (entity != 0) s->core->remove_entity(entity);
}

std::uint64_t Publisher::publish(const Value& value) {
  if (!state_) throw NodeError("publisher is shut down");
  const PayloadType type = type_of(value);
  if (type != state_->spec.payload_type) {
    throw TypeMismatchError("topic '" + state_->spec.name + "' carries " +
                            to_string(state_->spec.payload_type) + ", not " + to_string(type));
  }
  TypedPayload payload = encode_typed_payload(value);
  return publish_encoded(payload.type, std::move(payload.bytes));
}

std::uint64_t Publisher::publish_encoded(PayloadType type, Bytes payload) {
  if (!state_) throw NodeError("publisher is shut down");
  auto& s = *state_;
  if (type != s.spec.payload_type) {
    throw TypeMismatchError("topic '" + s.spec.name + "' carries " +
                            to_string(s.spec.payload_type) + ", not " + to_string(type));
  }
  if (!s.active) throw NodeError("publisher is shut down");
  s.core->ensure_usable();
  Frame f;
  f.kind = FrameKind::kData;
  f.payload_type = type;
  f.topic = s.spec.name;
  f.payload = std::move(payload);
  // Sequence assignment and send share one lock so the wire order matches.
  std::lock_guard lock(s.send_mutex);
  f.sequence = s.next_sequence++;
  f.timestamp_send = wall_clock_ns();
  if (s.retries) {
    f.flags = flags::kRequiresAck;
    const auto low = s.retries->lowest_in_flight(s.stream);
    f.correlation = make_stream_correlation(s.stream, low ? *low : f.sequence);
    s.retries->track(f, SteadyClock::now());
  } else {
    f.correlation = make_stream_correlation(s.stream, f.sequence);
  }
  s.core->send(f);
  return f.sequence;
}

const TopicSpec& Publisher::spec() const { return state_->spec; }
std::uint64_t Publisher::stream() const { return state_ ? state_->stream : 0; }
std::size_t Publisher::in_flight() const {
  return state_ && state_->retries ? state_->retries->in_flight() : 0;
}
std::uint64_t Publisher::retransmissions() const {
  return state_ && state_->retries ? state_->retries->retransmissions() : 0;
}
std::uint64_t Publisher::delivery_failures() const { return state_ ? state_->failures.load() : 0; }

void Publisher::on_delivery_failed(std::function<void(std::uint64_t)> callback) {
  if (!state_) throw NodeError("publisher is shut down");
  std::lock_guard lock(state_->callback_mutex);
  if (state_->failure_entity == 0) {
    state_->failure_entity = state_->core->add_entity("failed:" + state_->spec.name, 0);
  }
  state_->on_failed = std::move(callback);
}

// Subscription

Subscription::Subscription(std::shared_ptr<detail::SubscriptionState> state)
    : state_(std::move(state)) {}
Subscription::Subscription(Subscription&&) noexcept = default;
Subscription& Subscription::operator=(Subscription&& other) noexcept {
  if (this != &other) {
    unsubscribe();
    state_ = std::move(other.state_);
  }
  return *this;
}
Subscription::~Subscription() { unsubscribe(); }

void Subscription::unsubscribe() {
  if (!state_) return;
  auto s = state_;
  if (!s->active.exchange(false)) return;
  s->core->drop_registration(s->handle);
  s->core->remove_subscription(s.get());
  s->core->remove_entity(s->entity);
}

const std::string& Subscription::pattern() const { return state_->pattern; }
std::uint64_t Subscription::received() const { return state_ ? state_->received.load() : 0; }
std::uint64_t Subscription::type_mismatches() const {
  return state_ ? state_->mismatches.load() : 0;
}
std::uint64_t Subscription::duplicates() const { return state_ ? state_->duplicates() : 0; }
std::uint64_t Subscription::gaps() const { return state_ ? state_->gaps() : 0; }
std::uint64_t Subscription::dropped() const {
  if (!state_) return 0;
  const auto stats = state_->core->executor().stats();
  const auto* e = stats.find(state_->entity);
  return e ? e->dropped : 0;
}

// Timer

Timer::Timer(std::shared_ptr<detail::TimerState> state) : state_(std::move(state)) {}
Timer::Timer(Timer&&) noexcept = default;
Timer& Timer::operator=(Timer&& other) noexcept {
  if (this != &other) {
    cancel();
    state_ = std::move(other.state_);
  }
  return *this;
}
Timer::~Timer() { cancel(); }

void Timer::cancel() {
  if (!state_) return;
  auto s = state_;
  if (!s->active.exchange(false)) return;
  s->core->timers().cancel(s->task);
  s->core->remove_entity(s->entity);
}

Nanos Timer::period() const { return state_ ? state_->period : Nanos{0}; }
std::uint64_t Timer::fired() const { return state_ ? state_->fired.load() : 0; }

// Node

Node::Node(const std::string& name, NodeOptions options)
    : core_(std::make_shared<detail::NodeCore>(name, std::move(options))) {
  core_->start();
}

Node::~Node() { close(); }

void Node::close() {
  if (core_) core_->close();
}

const std::string& Node::name() const { return core_->name(); }
NodeState Node::state() const { return core_->state(); }
std::shared_ptr<Executor> Node::executor() const { return core_->executor_ptr(); }
NodeStats Node::stats() const { return core_->stats(); }

namespace {

void check_user_topic(const std::string& name, bool pattern) {
  const bool ok = pattern ? is_valid_topic_pattern(name) : is_valid_topic_name(name);
  if (!ok) throw std::invalid_argument("invalid topic '" + name + "'");
  if (name.rfind("__", 0) == 0) {
    throw std::invalid_argument("topic '" + name + "' uses the reserved '__' prefix");
  }
}

}  // namespace

Publisher Node::advertise(const TopicSpec& spec) {
  check_user_topic(spec.name, false);
  spec.qos.validate();
  core_->ensure_usable();
  auto s = std::make_shared<detail::PublisherState>();
  s->core = core_;
  s->spec = spec;
  s->handle = core_->next_handle();
  s->stream = core_->random_u64();
  if (spec.qos.is_reliable()) s->retries = std::make_unique<RetryTable>(spec.qos);

  Frame adv;
  adv.kind = FrameKind::kAdvertise;
  adv.payload_type = spec.payload_type;
  adv.sequence = s->handle;
  adv.timestamp_send = wall_clock_ns();
  adv.topic = spec.name;
  adv.payload = {static_cast<std::uint8_t>(AdvertiseRole::kTopic)};
  core_->confirm_registration(s->handle, adv);
  core_->add_publisher(s);
  return Publisher(std::move(s));
}

namespace {

std::shared_ptr<detail::SubscriptionState> make_subscription(
    const std::shared_ptr<detail::NodeCore>& core, const std::string& pattern,
    const QosProfile& qos, std::optional<PayloadType> type) {
  check_user_topic(pattern, true);
  qos.validate();
  core->ensure_usable();
  auto s = std::make_shared<detail::SubscriptionState>();
  s->core = core;
  s->pattern = pattern;
  s->type = type;
  s->qos = qos;
  s->handle = core->next_handle();
  s->entity = core->add_entity("sub:" + pattern, qos.history_depth);
  return s;
}

void register_subscription(const std::shared_ptr<detail::NodeCore>& core,
                           const std::shared_ptr<detail::SubscriptionState>& s) {
  core->add_subscription(s);
  Frame sub;
  sub.kind = FrameKind::kSub;
  sub.payload_type = s->type.value_or(PayloadType::kNull);
  sub.flags = s->qos.is_reliable() ? flags::kRequiresAck : 0;
  sub.sequence = s->handle;
  sub.timestamp_send = wall_clock_ns();
  sub.topic = s->pattern;
  try {
    core->confirm_registration(s->handle, sub);
  } catch (...) {
    s->active = false;
    core->remove_subscription(s.get());
    core->remove_entity(s->entity);
    throw;
  }
}

}  // namespace

Subscription Node::subscribe(const TopicSpec& spec, Callback callback) {
  if (!callback) throw std::invalid_argument("subscription callback is empty");
  auto s = make_subscription(core_, spec.name, spec.qos, spec.payload_type);
  s->typed = std::move(callback);
  register_subscription(core_, s);
  return Subscription(std::move(s));
}

Subscription Node::subscribe_raw(const std::string& pattern, const QosProfile& qos,
                                 RawCallback callback) {
  if (!callback) throw std::invalid_argument("subscription callback is empty");
  auto s = make_subscription(core_, pattern, qos, std::nullopt);
  s->raw = std::move(callback);
  register_subscription(core_, s);
  return Subscription(std::move(s));
}

Timer Node::create_timer(Nanos period, std::function<void()> callback) {
  if (period <= Nanos{0}) throw std::invalid_argument("timer period must be positive");
  if (!callback) throw std::invalid_argument("timer callback is empty");
  core_->ensure_usable();
  auto s = std::make_shared<detail::TimerState>();
  s->core = core_;
  s->period = period;
  s->callback = std::move(callback);
  // Depth 1: a tick still queued when the next one fires is replaced, not stacked.
  s->entity = core_->add_entity("timer", 1);
  std::weak_ptr<detail::TimerState> weak = s;
  s->task = core_->timers().schedule_every(
      period,
      [weak] {
        auto t = weak.lock();
        if (!t || !t->active) return;
        t->core->executor().post(t->entity, [weak] {
          auto t = weak.lock();
          if (!t || !t->active) return;
          ++t->fired;
          t->callback();
        });
      },
      period);
  return Timer(std::move(s));
}

void Node::declare_parameter(const ParameterDecl& decl) { core_->declare_parameter(decl); }
Value Node::get_parameter(const std::string& name) const { return core_->get_parameter(name); }
void Node::set_parameter(const std::string& name, const Value& value) {
  core_->set_parameter(name, value);
}
std::vector<std::string> Node::list_parameters() const { return core_->list_parameters(); }

GraphInfo Node::graph(Nanos timeout) { return core_->graph(timeout); }

bool Node::spin_once(Nanos timeout) { return core_->executor().spin_once(timeout); }
void Node::spin_for(Nanos duration) { core_->executor().spin_for(duration); }
bool Node::spin_until(const std::function<bool()>& done, Nanos timeout) {
  return core_->executor().spin_until(done, timeout);
}
void Node::spin(std::stop_token stop) { core_->executor().spin(stop); }

}  // namespace mros
