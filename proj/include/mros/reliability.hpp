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

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "mros/clock.hpp"
#include "mros/envelope.hpp"

namespace mros {

enum class ReliabilityMode : std::uint8_t { kBestEffort, kReliable };

/// Delivery policy for one publisher or subscription.
struct QosProfile {
  ReliabilityMode mode = ReliabilityMode::kBestEffort;
  std::size_t history_depth = 16;
  std::uint32_t max_retries = 5;
  Nanos backoff_base = Millis(50);
  Nanos backoff_max = Millis(2000);
  Nanos ack_timeout = Millis(200);

  static QosProfile best_effort() { return {}; }
  static QosProfile reliable() {
    QosProfile q;
    q.mode = ReliabilityMode::kReliable;
    return q;
  }

  bool is_reliable() const { return mode == ReliabilityMode::kReliable; }

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

/// Delay before retransmission attempt k (k >= 1): min(base * 2^(k-1), max).
Nanos backoff_delay(const QosProfile& qos, std::uint32_t attempt);

// DATA frames carry their publisher stream in the correlation field:
// bytes 0..7 stream id, bytes 8..15 the lowest sequence the publisher still
// had unacknowledged when the frame was first sent.
std::uint64_t stream_of(const CorrelationId& correlation);
std::uint64_t low_water_of(const CorrelationId& correlation);
CorrelationId make_stream_correlation(std::uint64_t stream, std::uint64_t low_water);

/// The ACK answering `frame`: same topic, sequence and correlation.
Frame make_ack(const Frame& frame);

/// Publisher-side retransmission state for reliable frames, keyed by
/// (stream, sequence). All methods are thread-safe.
class RetryTable {
 public:
  explicit RetryTable(QosProfile qos) : qos_(qos) {}

  struct Due {
    std::vector<Frame> retransmit;  // byte-identical copies of the originals
    std::vector<Frame> failed;      // retry budget exhausted
  };

  void track(const Frame& frame, TimePoint sent_at);
  /// Clears the matching entry. Returns false for unknown or repeated acks.
  bool handle_ack(const Frame& ack);
  Due collect_due(TimePoint now);

  /// Lowest in-flight sequence of `stream`, if any.
  std::optional<std::uint64_t> lowest_in_flight(std::uint64_t stream) const;

  /// Makes every pending entry due now without consuming an attempt. Used after reconnect.
  void expedite(TimePoint now);

  std::size_t in_flight() const;
  std::uint64_t retransmissions() const;
  std::uint64_t failures() const;
  std::uint64_t unknown_acks() const;

  const QosProfile& qos() const { return qos_; }

 private:
  struct Key {
    std::uint64_t stream;
    std::uint64_t sequence;
    auto operator<=>(const Key&) const = default;
  };
  struct Entry {
    Frame frame;
    std::uint32_t attempt = 0;
    TimePoint next_deadline;
  };

  TimePoint deadline_after_send(TimePoint sent, std::uint32_t attempt) const;

  QosProfile qos_;
  mutable std::mutex mutex_;
  std::map<Key, Entry> entries_;
  std::uint64_t retransmissions_ = 0;
  std::uint64_t failures_ = 0;
  std::uint64_t unknown_acks_ = 0;
};

/// Remembers the last `capacity` sequence numbers seen.
class DedupWindow {
 public:
  static constexpr std::size_t kDefaultCapacity = 1024;

  explicit DedupWindow(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {}

  /// True if `sequence` was not in the window (and records it).
  bool insert(std::uint64_t sequence);
  bool contains(std::uint64_t sequence) const { return seen_.count(sequence) != 0; }
  std::size_t size() const { return order_.size(); }

 private:
  std::size_t capacity_;
  std::deque<std::uint64_t> order_;
  std::unordered_set<std::uint64_t> seen_;
};

/// Per-(publisher stream, subscription) receive state: duplicate suppression,
/// and for reliable streams in-order release with bounded hold-back.
class StreamReceiver {
 public:
  StreamReceiver(ReliabilityMode mode, std::size_t hold_depth)
      : mode_(mode), hold_depth_(hold_depth == 0 ? 1 : hold_depth) {}

  enum class Verdict { kAccepted, kDuplicate };

  /// Frames released for delivery are appended to `ready` in order.
  Verdict on_frame(Frame frame, std::vector<Frame>& ready);

  std::uint64_t duplicates() const { return duplicates_; }
  std::uint64_t gaps() const { return gaps_; }
  std::size_t held() const { return held_.size(); }

 private:
  void release_consecutive(std::vector<Frame>& ready);

  ReliabilityMode mode_;
  std::size_t hold_depth_;
  DedupWindow window_;
  std::optional<std::uint64_t> next_expected_;
  std::map<std::uint64_t, Frame> held_;
  std::uint64_t duplicates_ = 0;
  std::uint64_t gaps_ = 0;
};

}  // namespace mros
