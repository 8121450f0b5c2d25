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

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "mros/node.hpp"

namespace mros {

enum class TokenState { kPending, kReady, kFailed, kTimedOut };

const char* to_string(TokenState state);

namespace detail {

/// Shared completion state. The first terminal transition wins.
class TokenCore {
 public:
  explicit TokenCore(CorrelationId correlation) : correlation_(correlation) {}

  bool complete(TokenState state, Value result, std::string error);
  TokenState wait(Nanos max_wait) const;
  TokenState state() const;
  Value result() const;
  std::string error() const;
  const CorrelationId& correlation() const { return correlation_; }
  /// Runs `fn` once the token is terminal; immediately if it already is.
  void on_complete(std::function<void()> fn);

 private:
  const CorrelationId correlation_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  TokenState state_ = TokenState::kPending;
  Value result_;
  std::string error_;
  std::vector<std::function<void()>> continuations_;
};

}  // namespace detail

/// Handle on one asynchronous request. Copies share state.
class CompletionToken {
 public:
  CompletionToken() = default;
  explicit CompletionToken(std::shared_ptr<detail::TokenCore> core) : core_(std::move(core)) {}

  TokenState state() const { return core_->state(); }
  bool done() const { return state() != TokenState::kPending; }
  /// Blocks until terminal or `max_wait` passes, returning the state observed.
  TokenState wait(Nanos max_wait) const { return core_->wait(max_wait); }
  /// The response value once READY.
  Value result() const { return core_->result(); }
  /// Error text once FAILED or TIMED_OUT.
  std::string error() const { return core_->error(); }
  const CorrelationId& correlation() const { return core_->correlation(); }
  explicit operator bool() const { return core_ != nullptr; }

 private:
  std::shared_ptr<detail::TokenCore> core_;
};

struct ServiceServerState;
struct ServiceClientState;

/// Hosts one named service. The handler runs on the node's executor.
class ServiceServer {
 public:
  using Handler = std::function<Value(const Value&)>;

  /// Throws NodeError when the name is already registered on the broker.
  ServiceServer(Node& node, const std::string& name, PayloadType request_type,
                PayloadType response_type, Handler handler);
  ServiceServer(ServiceServer&&) noexcept;
  ServiceServer& operator=(ServiceServer&&) noexcept;
  ~ServiceServer();

  const std::string& name() const;
  std::uint64_t handled() const;
  std::uint64_t errors() const;
  void shutdown();

 private:
  std::shared_ptr<ServiceServerState> state_;
};

/// Non-blocking caller of one named service.
class ServiceClient {
 public:
  ServiceClient(Node& node, std::string name, PayloadType request_type,
                PayloadType response_type);

  /// Returns immediately. Throws TypeMismatchError when `request` has the wrong type.
  CompletionToken call_async(const Value& request, std::optional<Nanos> timeout = std::nullopt);
  const std::string& name() const;

 private:
  std::shared_ptr<ServiceClientState> state_;
};

/// Remote parameter access through the target node's parameter services.
CompletionToken get_remote_parameter(Node& node, const std::string& target,
                                     const std::string& parameter,
                                     std::optional<Nanos> timeout = std::nullopt);
CompletionToken set_remote_parameter(Node& node, const std::string& target,
                                     const std::string& parameter, const Value& value,
                                     std::optional<Nanos> timeout = std::nullopt);
/// READY with a STRING_UTF8 JSON array of names.
CompletionToken list_remote_parameters(Node& node, const std::string& target,
                                       std::optional<Nanos> timeout = std::nullopt);

}  // namespace mros
