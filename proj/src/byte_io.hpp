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
#include <cstring>
#include <string_view>

#include "mros/envelope.hpp"

namespace mros::detail {

// Big-endian helpers shared by the frame codec, payload codec and log files.

inline void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

template <typename U>
inline void put_be(Bytes& out, U v) {
  for (int shift = static_cast<int>(sizeof(U) * 8) - 8; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}

inline void put_bytes(Bytes& out, ByteView data) { out.insert(out.end(), data.begin(), data.end()); }

inline void put_bytes(Bytes& out, std::string_view data) {
  out.insert(out.end(), data.begin(), data.end());
}

template <typename U>
inline U load_be(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>((v << 8) | p[i]);
  return v;
}

/// Bounds-checked cursor. Every read reports underflow through the `ok` flag so
/// callers can map it onto their own error.
class Reader {
 public:
  explicit Reader(ByteView data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

  bool has(std::size_t n) const { return remaining() >= n; }

  std::uint8_t u8() { return data_[pos_++]; }

  template <typename U>
  U be() {
    U v = load_be<U>(data_.data() + pos_);
    pos_ += sizeof(U);
    return v;
  }

  ByteView take(std::size_t n) {
    ByteView v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace mros::detail
