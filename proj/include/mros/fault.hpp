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

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>

#include "mros/timer_queue.hpp"
#include "mros/transport.hpp"

namespace mros {

/// Seeded, replayable impairments applied to outgoing frames.
struct FaultProfile {
  double drop_probability = 0.0;
  double duplicate_probability = 0.0;
  Millis delay_min{0};
  Millis delay_max{0};
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when out of range.
  void validate() const;
};

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double unit_interval(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Wraps a connection and impairs its outgoing frames.
///
/// Per frame, in this order: one draw decides the drop; if kept, one draw
/// decides duplication; then each copy draws its delay when delay_max > delay_min.
class FaultyConnection final : public Connection {
 public:
  FaultyConnection(std::shared_ptr<Connection> inner, FaultProfile profile);
  ~FaultyConnection() override;

  bool send_frame(const Frame& frame) override;
  void close() override;
  bool is_open() const override { return inner_->is_open(); }

  /// Swaps the profile mid-scenario; the generator is reseeded from it.
  void set_profile(const FaultProfile& profile);

  struct Counters {
    std::uint64_t offered = 0;
    std::uint64_t dropped = 0;
    std::uint64_t duplicated = 0;
    std::uint64_t forwarded = 0;
  };
  Counters counters() const;

 protected:
  bool do_recv_frames(std::vector<Frame>& out, Nanos timeout) override {
    return inner_->recv_frames(out, timeout);
  }

 private:
  std::shared_ptr<Connection> inner_;
  mutable std::mutex mutex_;
  FaultProfile profile_;
  std::mt19937_64 engine_;
  Counters counters_;
  std::unique_ptr<TimerQueue> delayer_;
};

std::shared_ptr<FaultyConnection> wrap_with_faults(std::shared_ptr<Connection> connection,
                                                   const FaultProfile& profile);

}  // namespace mros
