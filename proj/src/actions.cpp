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

#include "mros/actions.hpp"

#include <spdlog/spdlog.h>

#include <map>

#include "node_core.hpp"
#include "services_impl.hpp"

namespace mros {

const char* to_string(GoalState state) {
  switch (state) {
    case GoalState::kPending: return "PENDING";
    case GoalState::kActive: return "ACTIVE";
    case GoalState::kCanceling: return "CANCELING";
    case GoalState::kSucceeded: return "SUCCEEDED";
    case GoalState::kAborted: return "ABORTED";
    case GoalState::kCanceled: return "CANCELED";
  }
  return "?";
}

const char* to_string(GoalEvent event) {
  switch (event) {
    case GoalEvent::kExecute: return "execute";
    case GoalEvent::kCancelRequest: return "cancel_request";
    case GoalEvent::kSucceed: return "succeed";
    case GoalEvent::kAbort: return "abort";
    case GoalEvent::kCancelConfirm: return "cancel_confirm";
  }
  return "?";
}

bool is_terminal(GoalState state) {
  return state == GoalState::kSucceeded || state == GoalState::kAborted ||
         state == GoalState::kCanceled;
}

std::optional<GoalState> transition(GoalState from, GoalEvent event) {
  using S = GoalState;
  using E = GoalEvent;
  switch (from) {
    case S::kPending:
      if (event == E::kExecute) return S::kActive;
      if (event == E::kCancelRequest) return S::kCanceled;
      return std::nullopt;
    case S::kActive:
      if (event == E::kSucceed) return S::kSucceeded;
      if (event == E::kAbort) return S::kAborted;
      if (event == E::kCancelRequest) return S::kCanceling;
      return std::nullopt;
    case S::kCanceling:
      if (event == E::kCancelConfirm) return S::kCanceled;
      if (event == E::kSucceed) return S::kSucceeded;
      if (event == E::kAbort) return S::kAborted;
      return std::nullopt;
    case S::kSucceeded:
    case S::kAborted:
    case S::kCanceled:
      return std::nullopt;
  }
  return std::nullopt;
}

// Server

struct GoalRecord {
  std::shared_ptr<detail::NodeCore> core;
  std::string action;
  PayloadType feedback_type;
  PayloadType result_type;
  CorrelationId id;
  Value goal;

  mutable std::mutex mutex;
  GoalState state = GoalState::kPending;
  bool cancel_requested = false;
  std::uint64_t feedback_seq = 0;

  Frame result_frame(GoalState terminal, const Value& result) const {
    const TypedPayload p = encode_typed_payload(result);
    Frame f;
    f.kind = FrameKind::kActionResult;
    f.payload_type = p.type;
    f.sequence = static_cast<std::uint64_t>(terminal);
    f.timestamp_send = wall_clock_ns();
    f.topic = action;
    f.correlation = id;
    f.payload = p.bytes;
    return f;
  }

  /// Applies a terminal event and sends the result. Throws ActionError if illegal.
  void finish(GoalEvent event, const Value& result) {
    const PayloadType got = type_of(result);
    const bool null_ok = event != GoalEvent::kSucceed;
    if (got != result_type && !(null_ok && got == PayloadType::kNull)) {
      throw TypeMismatchError("action '" + action + "' result is " + to_string(result_type) +
                              ", not " + to_string(got));
    }
    std::lock_guard lock(mutex);
    const auto next = transition(state, event);
    if (!next) {
      throw ActionError(std::string("illegal goal transition ") + to_string(state) + " --" +
                        to_string(event) + "-->");
    }
    state = *next;
    core->send(result_frame(state, result));
  }
};

const CorrelationId& ServerGoalHandle::goal_id() const { return record_->id; }
const Value& ServerGoalHandle::goal() const { return record_->goal; }
GoalState ServerGoalHandle::state() const {
  std::lock_guard lock(record_->mutex);
  return record_->state;
}
bool ServerGoalHandle::cancel_requested() const {
  std::lock_guard lock(record_->mutex);
  return record_->cancel_requested;
}

void ServerGoalHandle::publish_feedback(const Value& feedback) {
  auto& r = *record_;
  if (type_of(feedback) != r.feedback_type) {
    throw TypeMismatchError("action '" + r.action + "' feedback is " + to_string(r.feedback_type) +
                            ", not " + to_string(type_of(feedback)));
  }
  TypedPayload p = encode_typed_payload(feedback);
  std::lock_guard lock(r.mutex);
  if (is_terminal(r.state)) {
    throw ActionError(std::string("feedback after terminal state ") + to_string(r.state));
  }
  Frame f;
  f.kind = FrameKind::kActionFeedback;
  f.payload_type = p.type;
  f.sequence = ++r.feedback_seq;
  f.timestamp_send = wall_clock_ns();
  f.topic = r.action;
  f.correlation = r.id;
  f.payload = std::move(p.bytes);
  r.core->send(f);
}

void ServerGoalHandle::succeed(const Value& result) { record_->finish(GoalEvent::kSucceed, result); }
void ServerGoalHandle::abort(const Value& result) { record_->finish(GoalEvent::kAbort, result); }
void ServerGoalHandle::canceled(const Value& result) {
  record_->finish(GoalEvent::kCancelConfirm, result);
}

struct ActionServerState : std::enable_shared_from_this<ActionServerState> {
  std::shared_ptr<detail::NodeCore> core;
  std::string name;
  PayloadType goal_type;
  PayloadType feedback_type;
  PayloadType result_type;
  ActionServer::Handler handler;
  std::uint64_t handle = 0;
  EntityId entity = 0;
  std::atomic<bool> active{true};
  std::atomic<std::uint64_t> received{0};
  std::atomic<std::uint64_t> runs{0};

  std::mutex mutex;
  std::map<CorrelationId, std::shared_ptr<GoalRecord>> goals;

  void forget(const CorrelationId& id) {
    std::lock_guard lock(mutex);
    goals.erase(id);
  }

  // Receive thread.
  void on_goal(const Frame& f) {
    if (!active) return;
    if (f.payload_type != goal_type) {
      Frame err = detail::make_error_response(f, std::string("goal type ") +
                                                     to_string(f.payload_type) +
                                                     " does not match " + to_string(goal_type));
      err.kind = FrameKind::kActionResult;
      core->send(err);
      return;
    }
    auto record = std::make_shared<GoalRecord>();
    record->core = core;
    record->action = name;
    record->feedback_type = feedback_type;
    record->result_type = result_type;
    record->id = f.correlation;
    try {
      record->goal = decode_typed_payload(f.payload_type, f.payload);
    } catch (const CodecError& e) {
      Frame err = detail::make_error_response(f, e.what());
      err.kind = FrameKind::kActionResult;
      core->send(err);
      return;
    }
    {
      std::lock_guard lock(mutex);
      if (!goals.emplace(record->id, record).second) return;  // duplicate goal id
    }
    ++received;
    std::weak_ptr<ActionServerState> weak = weak_from_this();
    core->executor().post(entity, [weak, record] {
      if (auto self = weak.lock()) self->run(record);
    });
  }

  // Receive thread.
  void on_cancel(const Frame& f) {
    std::shared_ptr<GoalRecord> record;
    {
      std::lock_guard lock(mutex);
      auto it = goals.find(f.correlation);
      if (it == goals.end()) return;
      record = it->second;
    }
    bool finished = false;
    {
      std::lock_guard lock(record->mutex);
      const auto next = transition(record->state, GoalEvent::kCancelRequest);
      if (!next) return;  // already canceling or terminal
      record->state = *next;
      record->cancel_requested = true;
      if (*next == GoalState::kCanceled) {
        // Never started: answer here, the handler will not run.
        core->send(record->result_frame(GoalState::kCanceled, Value{}));
        finished = true;
      }
    }
    if (finished) forget(record->id);
  }

  void run(const std::shared_ptr<GoalRecord>& record) {
    {
      std::lock_guard lock(record->mutex);
      const auto next = transition(record->state, GoalEvent::kExecute);
      if (!next) return;
      record->state = *next;
    }
    ++runs;
    ServerGoalHandle goal(record);
    try {
      handler(goal);
    } catch (const std::exception& e) {
      spdlog::warn("action '{}': handler threw: {}", name, e.what());
    }
    const GoalState after = goal.state();
    if (!is_terminal(after)) {
      // Both events are legal from CANCELING, so a cancel racing in here is harmless.
      record->finish(after == GoalState::kCanceling ? GoalEvent::kCancelConfirm : GoalEvent::kAbort,
                     Value{});
    }
    forget(record->id);
  }
};

ActionServer::ActionServer(Node& node, const std::string& name, PayloadType goal_type,
                           PayloadType feedback_type, PayloadType result_type, Handler handler) {
  detail::check_service_name(name);
  if (!handler) throw std::invalid_argument("action handler is empty");
  auto core = node.core();
  core->ensure_usable();
  auto s = std::make_shared<ActionServerState>();
  s->core = core;
  s->name = name;
  s->goal_type = goal_type;
  s->feedback_type = feedback_type;
  s->result_type = result_type;
  s->handler = std::move(handler);
  s->handle = core->next_handle();
  s->entity = core->add_entity("action:" + name, 0);
  std::weak_ptr<ActionServerState> weak = s;
  core->set_name_handler(FrameKind::kActionGoal, name, [weak](Frame& f) {
    if (auto self = weak.lock()) self->on_goal(f);
  });
  core->set_name_handler(FrameKind::kActionCancel, name, [weak](Frame& f) {
    if (auto self = weak.lock()) self->on_cancel(f);
  });
  Frame adv;
  adv.kind = FrameKind::kAdvertise;
  adv.payload_type = goal_type;
  adv.sequence = s->handle;
  adv.timestamp_send = wall_clock_ns();
  adv.topic = name;
  adv.payload = {static_cast<std::uint8_t>(AdvertiseRole::kAction)};
  try {
    core->confirm_registration(s->handle, adv);
  } catch (...) {
    core->clear_name_handler(FrameKind::kActionGoal, name);
    core->clear_name_handler(FrameKind::kActionCancel, name);
    core->remove_entity(s->entity);
    throw;
  }
  state_ = std::move(s);
}

ActionServer::ActionServer(ActionServer&&) noexcept = default;
ActionServer& ActionServer::operator=(ActionServer&& other) noexcept {
  if (this != &other) {
    shutdown();
    state_ = std::move(other.state_);
  }
  return *this;
}
ActionServer::~ActionServer() { shutdown(); }

void ActionServer::shutdown() {
  if (!state_) return;
  auto s = std::move(state_);
  if (!s->active.exchange(false)) return;
  s->core->clear_name_handler(FrameKind::kActionGoal, s->name);
  s->core->clear_name_handler(FrameKind::kActionCancel, s->name);
  s->core->drop_registration(s->handle);
  s->core->remove_entity(s->entity);
}

const std::string& ActionServer::name() const { return state_->name; }
std::uint64_t ActionServer::goals_received() const { return state_ ? state_->received.load() : 0; }
std::uint64_t ActionServer::handler_runs() const { return state_ ? state_->runs.load() : 0; }

// Client

struct ActionClientState {
  std::shared_ptr<detail::NodeCore> core;
  std::string name;
  PayloadType goal_type;
  PayloadType feedback_type;
  PayloadType result_type;
  EntityId entity = 0;
};

struct GoalClientState {
  std::shared_ptr<ActionClientState> client;
  std::shared_ptr<detail::TokenCore> token;
  ActionClient::FeedbackCallback on_feedback;
  ActionClient::ResultCallback on_result;

  std::mutex mutex;
  std::uint64_t last_feedback = 0;
  std::optional<GoalState> final_state;
  std::uint64_t feedback_received = 0;
  std::uint64_t feedback_discarded = 0;

  void send_cancel() {
    Frame f;
    f.kind = FrameKind::kActionCancel;
    f.timestamp_send = wall_clock_ns();
    f.topic = client->name;
    f.correlation = token->correlation();
    client->core->send(f);
  }

  // Receive thread.
  void on_frame(const std::shared_ptr<GoalClientState>& self, Frame& f) {
    auto& core = client->core;
    if (f.is_error()) {
      if (token->complete(TokenState::kFailed, {}, detail::error_text(f))) {
        core->clear_correlation_handler(token->correlation());
      }
      return;
    }
    if (f.kind == FrameKind::kActionFeedback) {
      {
        std::lock_guard lock(mutex);
        if (final_state || f.sequence <= last_feedback || f.payload_type != client->feedback_type) {
          ++feedback_discarded;
          return;
        }
        last_feedback = f.sequence;
        ++feedback_received;
      }
      if (!on_feedback) return;
      Value v;
      try {
        v = decode_typed_payload(f.payload_type, f.payload);
      } catch (const CodecError&) {
        return;
      }
      core->executor().post(client->entity, [self, v = std::move(v), seq = f.sequence] {
        self->on_feedback(v, seq);
      });
      return;
    }
    if (f.kind != FrameKind::kActionResult) return;
    const auto code = f.sequence;
    if (code > static_cast<std::uint64_t>(GoalState::kCanceled) ||
        !is_terminal(static_cast<GoalState>(code))) {
      token->complete(TokenState::kFailed, {}, "result carries non-terminal state");
      core->clear_correlation_handler(token->correlation());
      return;
    }
    const auto state = static_cast<GoalState>(code);
    Value result;
    try {
      result = decode_typed_payload(f.payload_type, f.payload);
    } catch (const CodecError& e) {
      token->complete(TokenState::kFailed, {}, e.what());
      core->clear_correlation_handler(token->correlation());
      return;
    }
    {
      std::lock_guard lock(mutex);
      if (final_state) return;
      final_state = state;
    }
    core->clear_correlation_handler(token->correlation());
    if (!token->complete(TokenState::kReady, result, {})) return;
    if (on_result) {
      core->executor().post(client->entity, [self, state, result = std::move(result)] {
        self->on_result(state, result);
      });
    }
  }
};

const CorrelationId& GoalHandle::goal_id() const { return state_->token->correlation(); }
CompletionToken GoalHandle::token() const { return CompletionToken(state_->token); }
std::optional<GoalState> GoalHandle::final_state() const {
  std::lock_guard lock(state_->mutex);
  return state_->final_state;
}
std::uint64_t GoalHandle::feedback_received() const {
  std::lock_guard lock(state_->mutex);
  return state_->feedback_received;
}
std::uint64_t GoalHandle::feedback_discarded() const {
  std::lock_guard lock(state_->mutex);
  return state_->feedback_discarded;
}

void GoalHandle::cancel() {
  if (!state_ || state_->token->state() != TokenState::kPending) return;
  state_->send_cancel();
}

ActionClient::ActionClient(Node& node, std::string name, PayloadType goal_type,
                           PayloadType feedback_type, PayloadType result_type)
    : state_(std::make_shared<ActionClientState>()) {
  if (!is_valid_topic_name(name)) throw std::invalid_argument("invalid action name '" + name + "'");
  state_->core = node.core();
  state_->name = std::move(name);
  state_->goal_type = goal_type;
  state_->feedback_type = feedback_type;
  state_->result_type = result_type;
  state_->entity = state_->core->add_entity("goals:" + state_->name, 0);
}

ActionClient::ActionClient(ActionClient&&) noexcept = default;
ActionClient& ActionClient::operator=(ActionClient&& other) noexcept {
  if (this != &other) {
    if (state_) state_->core->remove_entity(state_->entity);
    state_ = std::move(other.state_);
  }
  return *this;
}
ActionClient::~ActionClient() {
  if (state_) state_->core->remove_entity(state_->entity);
}

GoalHandle ActionClient::send_goal(const Value& goal, FeedbackCallback on_feedback,
                                   std::optional<Nanos> timeout, ResultCallback on_result) {
  if (type_of(goal) != state_->goal_type) {
    throw TypeMismatchError("action '" + state_->name + "' takes " + to_string(state_->goal_type) +
                            ", not " + to_string(type_of(goal)));
  }
  auto& core = state_->core;
  core->ensure_usable();
  auto g = std::make_shared<GoalClientState>();
  g->client = state_;
  g->token = std::make_shared<detail::TokenCore>(core->new_correlation());
  g->on_feedback = std::move(on_feedback);
  g->on_result = std::move(on_result);
  // The handler owns the goal state until a result, timeout or node shutdown clears it.
  core->set_correlation_handler(g->token->correlation(), [g](Frame& f) { g->on_frame(g, f); });
  std::weak_ptr<GoalClientState> weak = g;
  if (timeout) {
    detail::arm_timeout(core, g->token, *timeout, [weak] {
      if (auto self = weak.lock()) self->send_cancel();
    });
  }
  const TypedPayload p = encode_typed_payload(goal);
  Frame f;
  f.kind = FrameKind::kActionGoal;
  f.payload_type = p.type;
  f.timestamp_send = wall_clock_ns();
  f.topic = state_->name;
  f.correlation = g->token->correlation();
  f.payload = p.bytes;
  if (!core->send(f)) {
    core->clear_correlation_handler(f.correlation);
    g->token->complete(TokenState::kFailed, {}, "not connected to the broker");
  }
  return GoalHandle(std::move(g));
}

const std::string& ActionClient::name() const { return state_->name; }

}  // namespace mros
