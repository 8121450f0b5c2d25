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

#include "mros/services.hpp"

#include <spdlog/spdlog.h>

#include "node_core.hpp"
#include "services_impl.hpp"

namespace mros {

const char* to_string(TokenState state) {
  switch (state) {
    case TokenState::kPending: return "PENDING";
    case TokenState::kReady: return "READY";
    case TokenState::kFailed: return "FAILED";
    case TokenState::kTimedOut: return "TIMED_OUT";
  }
  return "?";
}

namespace detail {

bool TokenCore::complete(TokenState state, Value result, std::string error) {
  std::vector<std::function<void()>> continuations;
  {
    std::lock_guard lock(mutex_);
    if (state_ != TokenState::kPending) return false;
    state_ = state;
    result_ = std::move(result);
    error_ = std::move(error);
    continuations.swap(continuations_);
  }
  cv_.notify_all();
  for (auto& fn : continuations) fn();
  return true;
}

TokenState TokenCore::wait(Nanos max_wait) const {
  std::unique_lock lock(mutex_);
  cv_.wait_for(lock, max_wait, [&] { return state_ != TokenState::kPending; });
  return state_;
}

TokenState TokenCore::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

Value TokenCore::result() const {
  std::lock_guard lock(mutex_);
  return result_;
}

std::string TokenCore::error() const {
  std::lock_guard lock(mutex_);
  return error_;
}

void TokenCore::on_complete(std::function<void()> fn) {
  {
    std::lock_guard lock(mutex_);
    if (state_ == TokenState::kPending) {
      continuations_.push_back(std::move(fn));
      return;
    }
  }
  fn();
}

void arm_timeout(const std::shared_ptr<NodeCore>& core, const std::shared_ptr<TokenCore>& token,
                 Nanos timeout, std::function<void()> on_timeout) {
  std::weak_ptr<NodeCore> weak = core;
  const auto ms = std::chrono::duration_cast<Millis>(timeout).count();
  const auto task = core->timers().schedule_after(
      timeout, [weak, token, ms, on_timeout = std::move(on_timeout)] {
        if (!token->complete(TokenState::kTimedOut, {},
                             "timed out after " + std::to_string(ms) + " ms")) {
          return;
        }
        if (auto c = weak.lock()) c->clear_correlation_handler(token->correlation());
        if (on_timeout) on_timeout();
      });
  token->on_complete([weak, task] {
    if (auto c = weak.lock()) c->timers().cancel(task);
  });
}

CompletionToken issue_call(const std::shared_ptr<NodeCore>& core, const std::string& service,
                           TypedPayload request, std::optional<PayloadType> response_type,
                           std::optional<Nanos> timeout) {
  core->ensure_usable();
  auto token = std::make_shared<TokenCore>(core->new_correlation());
  const CorrelationId correlation = token->correlation();
  std::weak_ptr<NodeCore> weak = core;
  core->set_correlation_handler(correlation, [weak, token, response_type](Frame& f) {
    if (f.kind != FrameKind::kSvcResp) return;
    bool won = false;
    if (f.is_error()) {
      won = token->complete(TokenState::kFailed, {}, error_text(f));
    } else if (response_type && f.payload_type != *response_type) {
      won = token->complete(TokenState::kFailed, {},
                            std::string("response type ") + to_string(f.payload_type) +
                                " does not match " + to_string(*response_type));
    } else {
      try {
        won = token->complete(TokenState::kReady, decode_typed_payload(f.payload_type, f.payload),
                              {});
      } catch (const CodecError& e) {
        won = token->complete(TokenState::kFailed, {}, e.what());
      }
    }
    auto c = weak.lock();
    if (!c) return;
    c->clear_correlation_handler(token->correlation());
    if (!won) c->count_stale_response();
  });
  arm_timeout(core, token, timeout.value_or(core->options().default_call_timeout), {});

  Frame req;
  req.kind = FrameKind::kSvcReq;
  req.payload_type = request.type;
  req.timestamp_send = wall_clock_ns();
  req.topic = service;
  req.correlation = correlation;
  req.payload = std::move(request.bytes);
  if (!core->send(req)) {
    core->clear_correlation_handler(correlation);
    token->complete(TokenState::kFailed, {}, "not connected to the broker");
  }
  return CompletionToken(token);
}

void check_service_name(const std::string& name) {
  if (!is_valid_topic_name(name)) throw std::invalid_argument("invalid service name '" + name + "'");
  if (name.rfind("__", 0) == 0) {
    throw std::invalid_argument("service name '" + name + "' uses the reserved '__' prefix");
  }
}

}  // namespace detail

// ServiceServer

struct ServiceServerState {
  std::shared_ptr<detail::NodeCore> core;
  std::string name;
  PayloadType request_type;
  PayloadType response_type;
  ServiceServer::Handler handler;
  std::uint64_t handle = 0;
  EntityId entity = 0;
  std::atomic<bool> active{true};
  std::atomic<std::uint64_t> handled{0};
  std::atomic<std::uint64_t> errors{0};

  void serve(const Frame& req) {
    if (!active) return;
    ++handled;
    try {
      if (req.payload_type != request_type) {
        throw TypeMismatchError(std::string("request type ") + to_string(req.payload_type) +
                                " does not match " + to_string(request_type));
      }
      const Value response = handler(decode_typed_payload(req.payload_type, req.payload));
      if (type_of(response) != response_type) {
        throw TypeMismatchError(std::string("handler returned ") + to_string(type_of(response)) +
                                ", declared " + to_string(response_type));
      }
      core->send(detail::make_response(req, encode_typed_payload(response)));
    } catch (const std::exception& e) {
      ++errors;
      spdlog::debug("service '{}': {}", name, e.what());
      core->send(detail::make_error_response(req, e.what()));
    }
  }
};

ServiceServer::ServiceServer(Node& node, const std::string& name, PayloadType request_type,
                             PayloadType response_type, Handler handler) {
  detail::check_service_name(name);
  if (!handler) throw std::invalid_argument("service handler is empty");
  auto core = node.core();
  core->ensure_usable();
  auto s = std::make_shared<ServiceServerState>();
  s->core = core;
  s->name = name;
  s->request_type = request_type;
  s->response_type = response_type;
  s->handler = std::move(handler);
  s->handle = core->next_handle();
  s->entity = core->add_entity("srv:" + name, 0);
  std::weak_ptr<ServiceServerState> weak = s;
  core->set_name_handler(FrameKind::kSvcReq, name, [weak](Frame& req) {
    auto self = weak.lock();
    if (!self) return;
    self->core->executor().post(self->entity, [weak, req] {
      if (auto self = weak.lock()) self->serve(req);
    });
  });
  Frame adv;
  adv.kind = FrameKind::kAdvertise;
  adv.payload_type = request_type;
  adv.sequence = s->handle;
  adv.timestamp_send = wall_clock_ns();
  adv.topic = name;
  adv.payload = {static_cast<std::uint8_t>(AdvertiseRole::kService)};
  try {
    core->confirm_registration(s->handle, adv);
  } catch (...) {
    core->clear_name_handler(FrameKind::kSvcReq, name);
    core->remove_entity(s->entity);
    throw;
  }
  state_ = std::move(s);
}

ServiceServer::ServiceServer(ServiceServer&&) noexcept = default;
ServiceServer& ServiceServer::operator=(ServiceServer&& other) noexcept {
  if (this != &other) {
    shutdown();
    state_ = std::move(other.state_);
  }
  return *this;
}
ServiceServer::~ServiceServer() { shutdown(); }

void ServiceServer::shutdown() {
  if (!state_) return;
  auto s = std::move(state_);
  if (!s->active.exchange(false)) return;
  s->core->clear_name_handler(FrameKind::kSvcReq, s->name);
  s->core->drop_registration(s->handle);
  s->core->remove_entity(s->entity);
}

const std::string& ServiceServer::name() const { return state_->name; }
std::uint64_t ServiceServer::handled() const { return state_ ? state_->handled.load() : 0; }
std::uint64_t ServiceServer::errors() const { return state_ ? state_->errors.load() : 0; }

// ServiceClient

struct ServiceClientState {
  std::shared_ptr<detail::NodeCore> core;
  std::string name;
  PayloadType request_type;
  PayloadType response_type;
};

ServiceClient::ServiceClient(Node& node, std::string name, PayloadType request_type,
                             PayloadType response_type)
    : state_(std::make_shared<ServiceClientState>(
          ServiceClientState{node.core(), std::move(name), request_type, response_type})) {
  if (!is_valid_topic_name(state_->name)) {
    throw std::invalid_argument("invalid service name '" + state_->name + "'");
  }
}

CompletionToken ServiceClient::call_async(const Value& request, std::optional<Nanos> timeout) {
  if (type_of(request) != state_->request_type) {
    throw TypeMismatchError("service '" + state_->name + "' takes " +
                            to_string(state_->request_type) + ", not " +
                            to_string(type_of(request)));
  }
  return detail::issue_call(state_->core, state_->name, encode_typed_payload(request),
                            state_->response_type, timeout);
}

const std::string& ServiceClient::name() const { return state_->name; }

CompletionToken get_remote_parameter(Node& node, const std::string& target,
                                     const std::string& parameter, std::optional<Nanos> timeout) {
  return detail::issue_call(node.core(), parameter_service(target, "get"),
                            encode_typed_payload(Value{parameter}), std::nullopt, timeout);
}

CompletionToken set_remote_parameter(Node& node, const std::string& target,
                                     const std::string& parameter, const Value& value,
                                     std::optional<Nanos> timeout) {
  return detail::issue_call(node.core(), parameter_service(target, "set"),
                            {PayloadType::kBytes, encode_parameter_set(parameter, value)},
                            PayloadType::kBool, timeout);
}

CompletionToken list_remote_parameters(Node& node, const std::string& target,
                                       std::optional<Nanos> timeout) {
  return detail::issue_call(node.core(), parameter_service(target, "list"), {}, PayloadType::kStringUtf8,
                            timeout);
}

}  // namespace mros
