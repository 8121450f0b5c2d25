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

#include "mros/reliability.hpp"

#include <stdexcept>

#include "byte_io.hpp"

namespace mros {

void QosProfile::validate() const {
  if (history_depth == 0) throw std::invalid_argument("history_depth must be positive");
  if (backoff_base > backoff_max) throw std::invalid_argument("backoff_base exceeds backoff_max");
  if (backoff_base.count() < 0 || ack_timeout.count() < 0) {
    throw std::invalid_argument("durations must be nonnegative");
  }
  if (is_reliable() && max_retries < 1) {
    throw std::invalid_argument("RELIABLE requires max_retries >= 1");
  }
}

Nanos backoff_delay(const QosProfile& qos, std::uint32_t attempt) {
  if (attempt == 0) return Nanos{0};
  // Doubling saturates well before 63 shifts for any sane base.
  Nanos delay = qos.backoff_base;
  for (std::uint32_t k = 1; k < attempt; ++k) {
    if (delay >= qos.backoff_max) break;
    delay *= 2;
  }
  return std::min(delay, qos.backoff_max);
}

std::uint64_t stream_of(const CorrelationId& correlation) {
  return detail::load_be<std::uint64_t>(correlation.data());
}

std::uint64_t low_water_of(const CorrelationId& correlation) {
  return detail::load_be<std::uint64_t>(correlation.data() + 8);
}

CorrelationId make_stream_correlation(std::uint64_t stream, std::uint64_t low_water) {
  Bytes tmp;
  detail::put_be<std::uint64_t>(tmp, stream);
  detail::put_be<std::uint64_t>(tmp, low_water);
  CorrelationId id{};
  std::copy(tmp.begin(), tmp.end(), id.begin());
  return id;
}

Frame make_ack(const Frame& frame) {
  Frame ack;
  ack.kind = FrameKind::kAck;
  ack.sequence = frame.sequence;
  ack.timestamp_send = wall_clock_ns();
  ack.topic = frame.topic;
  ack.correlation = frame.correlation;
  return ack;
}

// --- RetryTable -------------------------------------------------------------

TimePoint RetryTable::deadline_after_send(TimePoint sent, std::uint32_t attempt) const {
  // After the ack timeout of this attempt, wait the backoff for the next one.
  // Once the budget is spent the deadline marks failure instead.
  if (attempt >= qos_.max_retries) return sent + qos_.ack_timeout;
  return sent + qos_.ack_timeout + backoff_delay(qos_, attempt + 1);
}

void RetryTable::track(const Frame& frame, TimePoint sent_at) {
  std::lock_guard lock(mutex_);
  Key key{stream_of(frame.correlation), frame.sequence};
  Entry entry{frame, 0, deadline_after_send(sent_at, 0)};
  entries_.insert_or_assign(key, std::move(entry));
}

bool RetryTable::handle_ack(const Frame& ack) {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(Key{stream_of(ack.correlation), ack.sequence});
  if (it == entries_.end() || it->second.frame.topic != ack.topic) {
    ++unknown_acks_;
    return false;
  }
  entries_.erase(it);
  return true;
}

RetryTable::Due RetryTable::collect_due(TimePoint now) {
  Due due;
  std::lock_guard lock(mutex_);
  for (auto it = entries_.begin(); it != entries_.end();) {
    Entry& e = it->second;
    if (e.next_deadline > now) {
      ++it;
      continue;
    }
    if (e.attempt >= qos_.max_retries) {
      ++failures_;
      due.failed.push_back(std::move(e.frame));
      it = entries_.erase(it);
      continue;
    }
    ++e.attempt;
    ++retransmissions_;
    e.next_deadline = deadline_after_send(now, e.attempt);
    due.retransmit.push_back(e.frame);
    ++it;
  }
  return due;
}

std::optional<std::uint64_t> RetryTable::lowest_in_flight(std::uint64_t stream) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.lower_bound(Key{stream, 0});
  if (it == entries_.end() || it->first.stream != stream) return std::nullopt;
  return it->first.sequence;
}

void RetryTable::expedite(TimePoint now) {
  std::lock_guard lock(mutex_);
  for (auto& [key, e] : entries_) {
    if (e.attempt < qos_.max_retries) {
      // Resend right away; the attempt counter is charged when it is sent.
      e.next_deadline = now;
    }
  }
}

std::size_t RetryTable::in_flight() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

std::uint64_t RetryTable::retransmissions() const {
  std::lock_guard lock(mutex_);
  return retransmissions_;
}

std::uint64_t RetryTable::failures() const {
  std::lock_guard lock(mutex_);
  return failures_;
}

std::uint64_t RetryTable::unknown_acks() const {
  std::lock_guard lock(mutex_);
  return unknown_acks_;
}

// --- DedupWindow ------------------------------------------------------------

bool DedupWindow::insert(std::uint64_t sequence) {
  if (!seen_.insert(sequence).second) return false;
  order_.push_back(sequence);
  if (order_.size() > capacity_) {
    seen_.erase(order_.front());
    order_.pop_front();
  }
  return true;
}

// --- StreamReceiver ---------------------------------------------------------

StreamReceiver::Verdict StreamReceiver::on_frame(Frame frame, std::vector<Frame>& ready) {
  const std::uint64_t seq = frame.sequence;
  if (mode_ == ReliabilityMode::kBestEffort) {
    if (!window_.insert(seq)) {
      ++duplicates_;
      return Verdict::kDuplicate;
    }
    ready.push_back(std::move(frame));
    return Verdict::kAccepted;
  }

  if (!next_expected_) {
    const std::uint64_t low = low_water_of(frame.correlation);
    next_expected_ = (low != 0 && low < seq) ? low : seq;
  }
  if (seq < *next_expected_ || window_.contains(seq) || held_.count(seq) != 0) {
    ++duplicates_;
    return Verdict::kDuplicate;
  }
  if (seq == *next_expected_) {
    window_.insert(seq);
    ready.push_back(std::move(frame));
    ++*next_expected_;
    release_consecutive(ready);
    return Verdict::kAccepted;
  }
  held_.emplace(seq, std::move(frame));
  if (held_.size() > hold_depth_) {
    // Give up on the gap: skip ahead to the oldest held frame.
    const std::uint64_t first = held_.begin()->first;
    gaps_ += first - *next_expected_;
    next_expected_ = first;
    release_consecutive(ready);
  }
  return Verdict::kAccepted;
}

void StreamReceiver::release_consecutive(std::vector<Frame>& ready) {
  while (!held_.empty() && held_.begin()->first == *next_expected_) {
    window_.insert(held_.begin()->first);
    ready.push_back(std::move(held_.begin()->second));
    held_.erase(held_.begin());
    ++*next_expected_;
  }
}

}  // namespace mros
