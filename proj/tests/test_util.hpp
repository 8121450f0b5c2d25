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

#include <chrono>
#include <functional>
#include <random>
#include <string>
#include <thread>

#include "mros/envelope.hpp"
#include "mros/payload.hpp"

namespace mros::testing {

/// Field widths of the wire header, listed independently of the codec.
inline std::size_t oracle_frame_size(std::size_t topic_len, std::size_t payload_len) {
  const std::size_t magic = 4, version = 1, kind = 1, ptype = 1, flag = 1, seq = 8, ts = 8,
                    topic_len_field = 2, correlation = 16, payload_len_field = 4;
  return magic + version + kind + ptype + flag + seq + ts + topic_len_field + topic_len +
         correlation + payload_len_field + payload_len;
}

inline std::string random_topic(std::mt19937_64& rng, std::size_t max_len = 40) {
  static constexpr char kChars[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_/";
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, sizeof(kChars) - 2);
  std::string s(len(rng), 'a');
  for (auto& c : s) c = kChars[pick(rng)];
  // Sprinkle in a multi-byte character now and then.
  if (!s.empty() && rng() % 5 == 0) s += "\xC3\xA9";
  return s;
}

inline Frame random_frame(std::mt19937_64& rng) {
  Frame f;
  f.kind = static_cast<FrameKind>(rng() % 14);
  f.payload_type = static_cast<PayloadType>(rng() % 9);
  f.flags = static_cast<std::uint8_t>(rng() % 4);
  f.sequence = rng();
  f.timestamp_send = rng();
  f.topic = random_topic(rng);
  for (auto& b : f.correlation) b = static_cast<std::uint8_t>(rng());
  if (kind_requires_correlation(f.kind)) f.correlation[0] |= 1;
  std::uniform_int_distribution<std::size_t> plen(0, 300);
  f.payload.resize(plen(rng));
  for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
  return f;
}

/// Polls `pred` until it holds or `timeout` passes.
inline bool eventually(const std::function<bool()>& pred,
                       std::chrono::milliseconds timeout = std::chrono::milliseconds(5000)) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return pred();
}

}  // namespace mros::testing
