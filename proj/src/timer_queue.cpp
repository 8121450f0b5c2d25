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

#include "mros/timer_queue.hpp"

#include <spdlog/spdlog.h>

namespace mros {

TimerQueue::TimerQueue() {
  worker_ = std::jthread([this](std::stop_token st) { run(st); });
}

TimerQueue::~TimerQueue() { stop(); }

void TimerQueue::stop() {
  if (worker_.joinable()) {
    worker_.request_stop();
    cv_.notify_all();
    if (worker_.get_id() != std::this_thread::get_id()) {
      worker_.join();
    } else {
      worker_.detach();
    }
  }
}

TimerQueue::TaskId TimerQueue::schedule_at(TimePoint when, std::function<void()> fn) {
  std::lock_guard lock(mutex_);
  const TaskId id = next_id_++;
  auto it = tasks_.emplace(when, Task{id, Nanos{0}, std::move(fn)});
  index_.emplace(id, it);
  cv_.notify_all();
  return id;
}

TimerQueue::TaskId TimerQueue::schedule_every(Nanos period, std::function<void()> fn,
                                              Nanos first_delay) {
  std::lock_guard lock(mutex_);
  const TaskId id = next_id_++;
  auto it = tasks_.emplace(SteadyClock::now() + first_delay, Task{id, period, std::move(fn)});
  index_.emplace(id, it);
  cv_.notify_all();
  return id;
}

bool TimerQueue::cancel(TaskId id) {
  std::lock_guard lock(mutex_);
  if (running_ == id) {
    running_canceled_ = true;
    return true;
  }
  auto found = index_.find(id);
  if (found == index_.end()) return false;
  tasks_.erase(found->second);
  index_.erase(found);
  return true;
}

void TimerQueue::run(std::stop_token st) {
  std::unique_lock lock(mutex_);
  while (!st.stop_requested()) {
    if (tasks_.empty()) {
      cv_.wait(lock, st, [&] { return !tasks_.empty(); });
      continue;
    }
    auto first = tasks_.begin();
    const TimePoint due = first->first;
    if (SteadyClock::now() < due) {
      cv_.wait_until(lock, st, due, [&] { return tasks_.empty() || tasks_.begin()->first < due; });
      continue;
    }
    Task task = std::move(first->second);
    tasks_.erase(first);
    index_.erase(task.id);
    running_ = task.id;
    running_canceled_ = false;
    lock.unlock();
    try {
      task.fn();
    } catch (const std::exception& e) {
      spdlog::error("timer task {} threw: {}", task.id, e.what());
    }
    lock.lock();
    running_ = 0;
    if (task.period.count() > 0 && !running_canceled_) {
      TimePoint next = due + task.period;
      const TimePoint now = SteadyClock::now();
      if (next <= now) {
        const auto missed = (now - due) / task.period;
        next = due + task.period * (missed + 1);
      }
      const TaskId id = task.id;
      auto it = tasks_.emplace(next, std::move(task));
      index_.emplace(id, it);
    }
  }
}

}  // namespace mros
