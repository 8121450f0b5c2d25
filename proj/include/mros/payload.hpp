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
#include <string>
#include <utility>
#include <variant>

#include "mros/envelope.hpp"

namespace mros {

/// Opaque binary blob, distinct from UTF-8 text.
struct Blob {
  Bytes data;
  friend bool operator==(const Blob&, const Blob&) = default;
};

enum class PixelFormat : std::uint8_t { kGray8 = 0, kRgb8 = 1, kBgr8 = 2, kRgba8 = 3 };

/// Channels implied by a pixel format.
std::uint8_t channels_for(PixelFormat format);

struct Image {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint8_t channels = 0;
  PixelFormat format = PixelFormat::kGray8;
  Bytes data;  // width * height * channels bytes, row-major
  friend bool operator==(const Image&, const Image&) = default;
};

enum class SampleFormat : std::uint8_t { kPcm16Le = 0, kF32Le = 1 };

std::size_t bytes_per_sample(SampleFormat format);

struct Audio {
  std::uint32_t sample_rate = 0;
  std::uint8_t channels = 0;
  SampleFormat format = SampleFormat::kPcm16Le;
  std::uint32_t frame_count = 0;
  Bytes data;  // frame_count * channels * bytes_per_sample(format)
  friend bool operator==(const Audio&, const Audio&) = default;
};

enum class VideoCodec : std::uint8_t { kRaw = 0, kOpaque = 1 };

struct VideoChunk {
  VideoCodec codec = VideoCodec::kRaw;
  std::uint32_t chunk_index = 0;
  bool keyframe = false;
  Bytes data;
  friend bool operator==(const VideoChunk&, const VideoChunk&) = default;
};

/// A typed message value. Alternative order follows PayloadType tags.
using Value = std::variant<std::monostate, bool, std::int64_t, double, std::string, Blob,
                           Image, Audio, VideoChunk>;

PayloadType type_of(const Value& value);

struct TypedPayload {
  PayloadType type = PayloadType::kNull;
  Bytes bytes;
};

/// Throws CodecError(kInvalidPayload) on inconsistent dimensions or unknown formats.
TypedPayload encode_typed_payload(const Value& value);
Value decode_typed_payload(PayloadType type, ByteView bytes);

/// Short human-readable rendering used by the CLI tools.
std::string describe(const Value& value);

}  // namespace mros
