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
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "mros/clock.hpp"

namespace mros {

/// One background thread running callbacks at steady-clock deadlines.
/// Callbacks run without the queue lock held and may schedule or cancel tasks.
class TimerQueue {
 public:
  using TaskId = std::uint64_t;

  TimerQueue();
  ~TimerQueue();

  TimerQueue(const TimerQueue&) = delete;
  TimerQueue& operator=(const TimerQueue&) = delete;

  TaskId schedule_at(TimePoint when, std::function<void()> fn);
  TaskId schedule_after(Nanos delay, std::function<void()> fn) {
    return schedule_at(SteadyClock::now() + delay, std::move(fn));
  }
  /// Fires at first + k*period. Deadlines missed by a stalled callback are skipped.
  TaskId schedule_every(Nanos period, std::function<void()> fn, Nanos first_delay);

  /// Returns false if the task already ran (one-shot) or was unknown.
  bool cancel(TaskId id);

  void stop();

 private:
  struct Task {
    TaskId id;
    Nanos period{0};
    std::function<void()> fn;
  };

  void run(std::stop_token st);

  std::mutex mutex_;
  std::condition_variable_any cv_;
  std::multimap<TimePoint, Task> tasks_;
  std::unordered_map<TaskId, std::multimap<TimePoint, Task>::iterator> index_;
  TaskId next_id_ = 1;
  TaskId running_ = 0;
  bool running_canceled_ = false;
  std::jthread worker_;
};

}  // namespace mros
