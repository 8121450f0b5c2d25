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

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "mros/node.hpp"
#include "mros/services.hpp"

namespace mros {

// Wire codes carried in the sequence field of ACTION_RESULT frames.
enum class GoalState : std::uint8_t {
  kPending = 0,
  kActive = 1,
  kCanceling = 2,
  kSucceeded = 3,
  kAborted = 4,
  kCanceled = 5,
};

enum class GoalEvent : std::uint8_t {
  kExecute,        // handler starts
  kCancelRequest,  // ACTION_CANCEL received
  kSucceed,
  kAbort,
  kCancelConfirm,  // handler honours a cancel request
};

inline constexpr std::array<GoalState, 6> kAllGoalStates{
    GoalState::kPending,   GoalState::kActive,  GoalState::kCanceling,
    GoalState::kSucceeded, GoalState::kAborted, GoalState::kCanceled};
inline constexpr std::array<GoalEvent, 5> kAllGoalEvents{
    GoalEvent::kExecute, GoalEvent::kCancelRequest, GoalEvent::kSucceed, GoalEvent::kAbort,
    GoalEvent::kCancelConfirm};

const char* to_string(GoalState state);
const char* to_string(GoalEvent event);
bool is_terminal(GoalState state);

/// The state `event` leads to from `from`, or nullopt when the transition is illegal.
std::optional<GoalState> transition(GoalState from, GoalEvent event);

class ActionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct GoalRecord;
struct ActionServerState;
struct GoalClientState;
struct ActionClientState;

/// The server's view of one goal, passed to the handler.
class ServerGoalHandle {
 public:
  explicit ServerGoalHandle(std::shared_ptr<GoalRecord> record) : record_(std::move(record)) {}

  const CorrelationId& goal_id() const;
  const Value& goal() const;
  GoalState state() const;
  /// Set once a cancel arrives; the handler is expected to poll it.
  bool cancel_requested() const;

  /// Throws ActionError once the goal is terminal and TypeMismatchError on a wrong type.
  void publish_feedback(const Value& feedback);
  void succeed(const Value& result);
  /// A NULL result is allowed for aborted and canceled goals.
  void abort(const Value& result = {});
  void canceled(const Value& result = {});

 private:
  std::shared_ptr<GoalRecord> record_;
};

class ActionServer {
 public:
  using Handler = std::function<void(ServerGoalHandle&)>;

  /// Throws NodeError when the name is already registered on the broker. A
  /// handler that returns without a result ends the goal CANCELED if a cancel
  /// was requested and ABORTED otherwise.
  ActionServer(Node& node, const std::string& name, PayloadType goal_type,
               PayloadType feedback_type, PayloadType result_type, Handler handler);
  ActionServer(ActionServer&&) noexcept;
  ActionServer& operator=(ActionServer&&) noexcept;
  ~ActionServer();

  const std::string& name() const;
  std::uint64_t goals_received() const;
  std::uint64_t handler_runs() const;
  void shutdown();

 private:
  std::shared_ptr<ActionServerState> state_;
};

/// Client side of one goal. Copies share state.
class GoalHandle {
 public:
  GoalHandle() = default;
  explicit GoalHandle(std::shared_ptr<GoalClientState> state) : state_(std::move(state)) {}

  const CorrelationId& goal_id() const;
  /// READY once a result arrives, whatever its goal state.
  CompletionToken token() const;
  TokenState wait(Nanos max_wait) const { return token().wait(max_wait); }
  /// Terminal goal state reported by the server, once known.
  std::optional<GoalState> final_state() const;
  std::uint64_t feedback_received() const;
  std::uint64_t feedback_discarded() const;
  /// Sends ACTION_CANCEL unless the goal already finished. Idempotent.
  void cancel();

 private:
  std::shared_ptr<GoalClientState> state_;
};

class ActionClient {
 public:
  using FeedbackCallback = std::function<void(const Value& feedback, std::uint64_t sequence)>;
  using ResultCallback = std::function<void(GoalState state, const Value& result)>;

  ActionClient(Node& node, std::string name, PayloadType goal_type, PayloadType feedback_type,
               PayloadType result_type);
  ActionClient(ActionClient&&) noexcept;
  ActionClient& operator=(ActionClient&&) noexcept;
  ~ActionClient();

  /// Returns immediately. Callbacks run on the node's executor, feedback in
  /// sequence order and always before the result callback. Without a timeout
  /// the goal waits for its result indefinitely; on timeout a cancel is sent.
  GoalHandle send_goal(const Value& goal, FeedbackCallback on_feedback = {},
                       std::optional<Nanos> timeout = std::nullopt,
                       ResultCallback on_result = {});
  const std::string& name() const;

 private:
  std::shared_ptr<ActionClientState> state_;
};

}  // namespace mros
