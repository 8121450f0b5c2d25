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
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "mros/clock.hpp"
#include "mros/envelope.hpp"

namespace mros {

/// Multi-producer, single-consumer frame queue with a soft capacity.
///
/// DATA producers wait (bounded) for room; control frames always go through
/// so that acks and heartbeats can never deadlock two full queues.
class FrameQueue {
 public:
  explicit FrameQueue(std::size_t capacity = 65536) : capacity_(capacity) {}

  enum class PushResult { kOk, kClosed, kFull };

  PushResult push(Frame frame, Nanos max_block = Millis(200)) {
    std::unique_lock lock(mutex_);
    if (closed_) return PushResult::kClosed;
    if (frame.kind == FrameKind::kData && items_.size() >= capacity_) {
      const bool room = not_full_.wait_for(
          lock, max_block, [&] { return closed_ || items_.size() < capacity_; });
      if (closed_) return PushResult::kClosed;
      if (!room) {
        ++overflow_drops_;
        return PushResult::kFull;
      }
    }
    items_.push_back(std::move(frame));
    if (items_.size() == 1) not_empty_.notify_one();
    return PushResult::kOk;
  }

  /// Waits up to `timeout` for at least one frame, then moves everything queued into `out`.
  /// Returns false once the queue is closed and drained.
  bool pop_all(std::vector<Frame>& out, Nanos timeout) {
    std::unique_lock lock(mutex_);
    if (items_.empty() && !closed_) {
      not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    }
    if (items_.empty()) return !closed_;
    const bool was_full = items_.size() >= capacity_;
    for (auto& f : items_) out.push_back(std::move(f));
    items_.clear();
    if (was_full) not_full_.notify_all();
    return true;
  }

  std::optional<Frame> pop(Nanos timeout) {
    std::unique_lock lock(mutex_);
    if (items_.empty() && !closed_) {
      not_empty_.wait_for(lock, timeout, [&] { return closed_ || !items_.empty(); });
    }
    if (items_.empty()) return std::nullopt;
    Frame f = std::move(items_.front());
    items_.pop_front();
    if (items_.size() + 1 == capacity_) not_full_.notify_all();
    return f;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

  std::size_t overflow_drops() const {
    std::lock_guard lock(mutex_);
    return overflow_drops_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<Frame> items_;
  std::size_t capacity_;
  std::size_t overflow_drops_ = 0;
  bool closed_ = false;
};

}  // namespace mros
