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

#include "mros/broker.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <json.hpp>
#include <set>

#include "broker_core.hpp"

namespace mros {

namespace detail {

namespace {

Frame error_reply(FrameKind kind, const Frame& request, const std::string& message) {
  Frame f;
  f.kind = kind;
  f.payload_type = PayloadType::kStringUtf8;
  f.flags = flags::kErrorResponse;
  f.sequence = request.sequence;
  f.timestamp_send = wall_clock_ns();
  f.topic = request.topic;
  f.correlation = request.correlation;
  f.payload.assign(message.begin(), message.end());
  return f;
}

Frame control(FrameKind kind, const std::string& topic = {}) {
  Frame f;
  f.kind = kind;
  f.timestamp_send = wall_clock_ns();
  f.topic = topic;
  return f;
}

}  // namespace

BrokerCore::BrokerCore(BrokerConfig config) : config_(std::move(config)) {
  config_.forward_qos.validate();
}

BrokerCore::~BrokerCore() { shutdown(); }

void BrokerCore::start() {
  {
    std::lock_guard lock(mutex_);
    started_at_ = SteadyClock::now();
    running_ = true;
  }
  timers_ = std::make_unique<TimerQueue>();
  timers_->schedule_every(config_.heartbeat_interval, [this] { heartbeat_tick(); },
                          config_.heartbeat_interval);
  const Nanos scan = std::max<Nanos>(Millis(1), config_.forward_qos.ack_timeout / 4);
  timers_->schedule_every(scan, [this] { retry_tick(); }, scan);
}

void BrokerCore::shutdown() {
  if (timers_) timers_->stop();
  std::vector<std::shared_ptr<SessionSink>> sinks;
  {
    std::lock_guard lock(mutex_);
    if (!running_ && sessions_.empty()) return;
    running_ = false;
    for (auto& [id, s] : sessions_) sinks.push_back(s.sink);
    sessions_.clear();
    service_registry_.clear();
    pending_calls_.clear();
    goals_.clear();
    ack_waiters_.clear();
  }
  for (auto& sink : sinks) sink->close();
}

SessionId BrokerCore::open_session(std::shared_ptr<SessionSink> sink) {
  std::lock_guard lock(mutex_);
  if (!running_) {
    throw TransportError("broker is not running");
  }
  const SessionId id = next_session_++;
  Session s;
  s.sink = std::move(sink);
  s.last_rx = SteadyClock::now();
  s.retries = std::make_unique<RetryTable>(config_.forward_qos);
  sessions_.emplace(id, std::move(s));
  ++stats_.sessions_open;
  return id;
}

void BrokerCore::close_session(SessionId id) {
  Outgoing out;
  std::shared_ptr<SessionSink> sink;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;
    sink = it->second.sink;
    remove_session_locked(id, out);
  }
  flush(out);
  sink->close();
}

void BrokerCore::remove_session_locked(SessionId id, Outgoing& out) {
  sessions_.erase(id);
  if (stats_.sessions_open > 0) --stats_.sessions_open;
  for (auto it = ack_waiters_.begin(); it != ack_waiters_.end();) {
    it->second.pending.erase(id);
    if (it->second.publisher == id || it->second.pending.empty()) {
      it = ack_waiters_.erase(it);
    } else {
      ++it;
    }
  }
  std::erase_if(service_registry_, [id](const auto& kv) { return kv.second.first == id; });
  // Calls and goals whose server vanished fail back to their clients.
  auto fail_routes = [&](std::map<CorrelationId, Route>& routes, FrameKind reply_kind,
                         const char* what) {
    for (auto it = routes.begin(); it != routes.end();) {
      if (it->second.client == id) {
        it = routes.erase(it);
      } else if (it->second.server == id) {
        auto client = sessions_.find(it->second.client);
        if (client != sessions_.end()) {
          Frame req;
          req.topic = it->second.name;
          req.correlation = it->first;
          out.emplace_back(client->second.sink, error_reply(reply_kind, req, what));
        }
        it = routes.erase(it);
      } else {
        ++it;
      }
    }
  };
  fail_routes(pending_calls_, FrameKind::kSvcResp, "service server disconnected");
  fail_routes(goals_, FrameKind::kActionResult, "action server disconnected");
}

bool BrokerCore::on_frame(SessionId id, Frame frame) {
  Outgoing out;
  {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return false;
    ++stats_.frames_in;
    it->second.last_rx = SteadyClock::now();
    handle_locked(id, it->second, frame, out);
  }
  flush(out);
  return true;
}

void BrokerCore::flush(Outgoing& out) {
  for (auto& [sink, frame] : out) sink->deliver(std::move(frame));
  out.clear();
}

void BrokerCore::handle_locked(SessionId id, Session& s, Frame& frame, Outgoing& out) {
  switch (frame.kind) {
    case FrameKind::kHeartbeat: {
      if (!frame.requires_ack()) return;  // plain liveness beat
      // Hello: register the node name carried in the topic field.
      bool taken = false;
      for (const auto& [other_id, other] : sessions_) {
        if (other_id != id && !frame.topic.empty() && other.node_name == frame.topic) taken = true;
      }
      if (taken) {
        out.emplace_back(s.sink, error_reply(FrameKind::kHeartbeat, frame,
                                             "node name '" + frame.topic + "' already in use"));
        return;
      }
      s.node_name = frame.topic;
      Frame reply = control(FrameKind::kHeartbeat, frame.topic);
      reply.sequence = frame.sequence;
      out.emplace_back(s.sink, std::move(reply));
      return;
    }
    case FrameKind::kSub: {
      if (!is_valid_topic_pattern(frame.topic)) {
        out.emplace_back(s.sink, error_reply(FrameKind::kSub, frame,
                                             "invalid topic pattern '" + frame.topic + "'"));
        return;
      }
      s.subscriptions.push_back(
          Subscription{frame.sequence, frame.topic, frame.payload_type, frame.requires_ack()});
      return;
    }
    case FrameKind::kUnsub: {
      std::erase_if(s.subscriptions, [&](const auto& sub) { return sub.handle == frame.sequence; });
      std::erase_if(s.advertisements,
                    [&](const auto& adv) { return adv.handle == frame.sequence; });
      std::erase_if(service_registry_, [&](const auto& kv) {
        return kv.second.first == id && kv.second.second == frame.sequence;
      });
      return;
    }
    case FrameKind::kAdvertise: {
      const auto role = frame.payload.empty() ? AdvertiseRole::kTopic
                                              : static_cast<AdvertiseRole>(frame.payload[0]);
      if (role == AdvertiseRole::kTopic) {
        for (const auto& [other_id, other] : sessions_) {
          for (const auto& adv : other.advertisements) {
            if (adv.role == AdvertiseRole::kTopic && adv.name == frame.topic &&
                adv.type != frame.payload_type) {
              out.emplace_back(
                  s.sink, error_reply(FrameKind::kAdvertise, frame,
                                      "topic '" + frame.topic + "' already advertised as " +
                                          to_string(adv.type)));
              return;
            }
          }
        }
      } else {
        auto existing = service_registry_.find(frame.topic);
        if (existing != service_registry_.end()) {
          out.emplace_back(s.sink, error_reply(FrameKind::kAdvertise, frame,
                                               "'" + frame.topic + "' is already registered"));
          return;
        }
        service_registry_[frame.topic] = {id, frame.sequence};
      }
      s.advertisements.push_back(
          Advertisement{frame.sequence, frame.topic, frame.payload_type, role});
      return;
    }
    case FrameKind::kData:
      route_data_locked(id, s, frame, out);
      return;
    case FrameKind::kAck: {
      if (!s.retries->handle_ack(frame)) return;
      auto w = ack_waiters_.find({stream_of(frame.correlation), frame.sequence});
      if (w == ack_waiters_.end() || w->second.ack.topic != frame.topic) return;
      w->second.pending.erase(id);
      if (w->second.pending.empty()) {
        auto pub = sessions_.find(w->second.publisher);
        if (pub != sessions_.end()) out.emplace_back(pub->second.sink, w->second.ack);
        ack_waiters_.erase(w);
      }
      return;
    }
    case FrameKind::kSvcReq: {
      auto server = service_registry_.find(frame.topic);
      if (server == service_registry_.end() || !sessions_.count(server->second.first)) {
        out.emplace_back(s.sink, error_reply(FrameKind::kSvcResp, frame,
                                             "no such service '" + frame.topic + "'"));
        return;
      }
      pending_calls_[frame.correlation] = Route{id, server->second.first, frame.topic};
      out.emplace_back(sessions_.at(server->second.first).sink, std::move(frame));
      return;
    }
    case FrameKind::kSvcResp: {
      auto call = pending_calls_.find(frame.correlation);
      if (call == pending_calls_.end()) return;
      auto client = sessions_.find(call->second.client);
      pending_calls_.erase(call);
      if (client != sessions_.end()) out.emplace_back(client->second.sink, std::move(frame));
      return;
    }
    case FrameKind::kActionGoal: {
      auto server = service_registry_.find(frame.topic);
      if (server == service_registry_.end() || !sessions_.count(server->second.first)) {
        out.emplace_back(s.sink, error_reply(FrameKind::kActionResult, frame,
                                             "no such action '" + frame.topic + "'"));
        return;
      }
      goals_[frame.correlation] = Route{id, server->second.first, frame.topic};
      out.emplace_back(sessions_.at(server->second.first).sink, std::move(frame));
      return;
    }
    case FrameKind::kActionCancel: {
      auto goal = goals_.find(frame.correlation);
      if (goal == goals_.end()) return;
      auto server = sessions_.find(goal->second.server);
      if (server != sessions_.end()) out.emplace_back(server->second.sink, std::move(frame));
      return;
    }
    case FrameKind::kActionFeedback:
    case FrameKind::kActionResult: {
      auto goal = goals_.find(frame.correlation);
      if (goal == goals_.end()) return;
      auto client = sessions_.find(goal->second.client);
      if (frame.kind == FrameKind::kActionResult) goals_.erase(goal);
      if (client != sessions_.end()) out.emplace_back(client->second.sink, std::move(frame));
      return;
    }
    case FrameKind::kInfoReq: {
      const std::string json = graph_locked().to_json();
      Frame reply = control(FrameKind::kInfoResp, frame.topic);
      reply.payload_type = PayloadType::kStringUtf8;
      reply.sequence = frame.sequence;
      reply.correlation = frame.correlation;
      reply.payload.assign(json.begin(), json.end());
      out.emplace_back(s.sink, std::move(reply));
      return;
    }
    case FrameKind::kInfoResp:
      return;
  }
}

void BrokerCore::route_data_locked(SessionId id, Session& s, Frame& frame, Outgoing& out) {
  const TimePoint now = SteadyClock::now();
  std::size_t matched = 0;
  std::set<SessionId> reliable_targets;
  for (auto& [other_id, other] : sessions_) {
    bool any = false;
    bool reliable = false;
    for (const auto& sub : other.subscriptions) {
      if (topic_matches(sub.pattern, frame.topic)) {
        any = true;
        reliable = reliable || sub.reliable;
      }
    }
    if (!any) continue;
    ++matched;
    if (reliable && frame.requires_ack()) {
      other.retries->track(frame, now);
      reliable_targets.insert(other_id);
    }
    out.emplace_back(other.sink, frame);
  }
  stats_.data_delivered += matched;
  if (matched == 0) ++stats_.data_unmatched;
  if (!frame.requires_ack()) return;
  if (matched == 0 && now - started_at_ < config_.recovery_window) {
    ++stats_.acks_deferred;
    return;
  }
  if (reliable_targets.empty()) {
    out.emplace_back(s.sink, make_ack(frame));
    return;
  }
  // The publisher is acknowledged once every reliable subscriber has acknowledged.
  AckWaiter& w = ack_waiters_[{stream_of(frame.correlation), frame.sequence}];
  w.publisher = id;
  w.ack = make_ack(frame);
  w.pending = std::move(reliable_targets);
}

void BrokerCore::drop_waiter_target_locked(SessionId target, std::uint64_t stream,
                                           std::uint64_t sequence) {
  auto w = ack_waiters_.find({stream, sequence});
  if (w == ack_waiters_.end()) return;
  w->second.pending.erase(target);
  // No ack: the publisher retransmits and the frame is routed afresh.
  if (w->second.pending.empty()) ack_waiters_.erase(w);
}

void BrokerCore::heartbeat_tick() {
  Outgoing out;
  std::vector<std::shared_ptr<SessionSink>> expired;
  {
    std::lock_guard lock(mutex_);
    const TimePoint now = SteadyClock::now();
    const Nanos limit = config_.heartbeat_interval * config_.missed_heartbeats;
    std::vector<SessionId> dead;
    for (auto& [id, s] : sessions_) {
      if (now - s.last_rx > limit) {
        dead.push_back(id);
        continue;
      }
      out.emplace_back(s.sink, control(FrameKind::kHeartbeat));
    }
    for (SessionId id : dead) {
      expired.push_back(sessions_.at(id).sink);
      remove_session_locked(id, out);
      ++stats_.sessions_expired;
    }
  }
  flush(out);
  for (auto& sink : expired) sink->close();
}

void BrokerCore::retry_tick() {
  Outgoing out;
  {
    std::lock_guard lock(mutex_);
    const TimePoint now = SteadyClock::now();
    for (auto& [id, s] : sessions_) {
      auto due = s.retries->collect_due(now);
      stats_.retransmissions += due.retransmit.size();
      stats_.forward_failures += due.failed.size();
      for (auto& f : due.retransmit) out.emplace_back(s.sink, std::move(f));
      for (const auto& f : due.failed) {
        drop_waiter_target_locked(id, stream_of(f.correlation), f.sequence);
      }
    }
  }
  flush(out);
}

GraphInfo BrokerCore::graph() const {
  std::lock_guard lock(mutex_);
  return graph_locked();
}

GraphInfo BrokerCore::graph_locked() const {
  GraphInfo g;
  struct Counts {
    std::string type;
    int pubs = 0;
    int subs = 0;
  };
  std::map<std::string, Counts> topics;
  for (const auto& [id, s] : sessions_) {
    if (!s.node_name.empty()) g.nodes.push_back(s.node_name);
    for (const auto& adv : s.advertisements) {
      if (adv.role != AdvertiseRole::kTopic) continue;
      auto& c = topics[adv.name];
      c.type = to_string(adv.type);
      ++c.pubs;
    }
  }
  for (const auto& [id, s] : sessions_) {
    for (const auto& sub : s.subscriptions) {
      auto& c = topics[sub.pattern];
      if (c.type.empty()) c.type = to_string(sub.type);
      ++c.subs;
    }
  }
  for (auto& [name, c] : topics) g.topics.push_back({name, c.type, c.pubs, c.subs});
  for (const auto& [name, owner] : service_registry_) g.services.push_back(name);
  std::sort(g.nodes.begin(), g.nodes.end());
  return g;
}

BrokerStats BrokerCore::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

// --- inproc registry ----------------------------------------------------------

namespace {
std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}
std::map<std::string, std::weak_ptr<BrokerCore>>& registry() {
  static std::map<std::string, std::weak_ptr<BrokerCore>> r;
  return r;
}
}  // namespace

void register_inproc(const std::string& name, const std::shared_ptr<BrokerCore>& core) {
  std::lock_guard lock(registry_mutex());
  auto& slot = registry()[name];
  if (!slot.expired()) throw TransportError("inproc address '" + name + "' is already bound");
  slot = core;
}

void unregister_inproc(const std::string& name, const BrokerCore* core) {
  std::lock_guard lock(registry_mutex());
  auto it = registry().find(name);
  if (it == registry().end()) return;
  auto live = it->second.lock();
  if (!live || live.get() == core) registry().erase(it);
}

std::shared_ptr<BrokerCore> lookup_inproc(const std::string& name) {
  std::lock_guard lock(registry_mutex());
  auto it = registry().find(name);
  return it == registry().end() ? nullptr : it->second.lock();
}

}  // namespace detail

// --- Broker -------------------------------------------------------------------

Broker::Broker(EndpointAddress address, std::shared_ptr<detail::BrokerCore> core)
    : address_(std::move(address)), core_(std::move(core)) {}

std::unique_ptr<Broker> Broker::serve(const EndpointAddress& address, BrokerConfig config) {
  auto core = std::make_shared<detail::BrokerCore>(std::move(config));
  std::unique_ptr<Broker> broker(new Broker(address, core));
  if (address.scheme == EndpointAddress::Scheme::kInproc) {
    if (address.target.empty()) throw TransportError("inproc address needs a name");
    detail::register_inproc(address.target, core);
    core->start();
  } else {
    broker->listener_ = std::make_unique<detail::TcpListener>(address, core);
    broker->address_ = EndpointAddress::tcp(address.host(), broker->listener_->port());
    core->start();
  }
  spdlog::debug("broker serving on {}", broker->address_.to_string());
  return broker;
}

Broker::~Broker() { stop(); }

void Broker::stop() {
  if (stopped_) return;
  stopped_ = true;
  if (listener_) listener_->stop();
  if (address_.scheme == EndpointAddress::Scheme::kInproc) {
    detail::unregister_inproc(address_.target, core_.get());
  }
  core_->shutdown();
}

GraphInfo Broker::graph() const { return core_->graph(); }
BrokerStats Broker::stats() const { return core_->stats(); }

// --- GraphInfo JSON -------------------------------------------------------------

std::string GraphInfo::to_json() const {
  nlohmann::json j;
  j["nodes"] = nodes;
  j["topics"] = nlohmann::json::array();
  for (const auto& t : topics) {
    j["topics"].push_back(
        {{"name", t.name}, {"type", t.type}, {"publishers", t.publishers},
         {"subscribers", t.subscribers}});
  }
  j["services"] = services;
  return j.dump();
}

GraphInfo GraphInfo::from_json(std::string_view json) {
  const auto j = nlohmann::json::parse(json);
  GraphInfo g;
  g.nodes = j.at("nodes").get<std::vector<std::string>>();
  for (const auto& t : j.at("topics")) {
    g.topics.push_back({t.at("name").get<std::string>(), t.at("type").get<std::string>(),
                        t.at("publishers").get<int>(), t.at("subscribers").get<int>()});
  }
  g.services = j.at("services").get<std::vector<std::string>>();
  return g;
}

}  // namespace mros
