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
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mros {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

//
// Frame layout (all multi-byte integers big-endian)
//
// +------+-----+------+-------+-------+----------+-----------+-----------+-------+-------------+-------------+---------+
// | MROS | ver | kind | ptype | flags | sequence | timestamp | topic_len | topic | correlation | payload_len | payload |
// |  4   |  1  |  1   |   1   |   1   |    8     |     8     |     2     |   n   |     16      |      4      |    m    |
// +------+-----+------+-------+-------+----------+-----------+-----------+-------+-------------+-------------+---------+
//
// The fixed part is 46 bytes, so an encoded frame is 46 + n + m bytes.
//
inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'M', 'R', 'O', 'S'};
inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kFrameFixedSize = 46;
inline constexpr std::size_t kMaxTopicLength = 0xFFFF;
inline constexpr std::uint64_t kMaxPayloadLength = 0xFFFFFFFFull;

enum class FrameKind : std::uint8_t {
  kData = 0,
  kSvcReq = 1,
  kSvcResp = 2,
  kActionGoal = 3,
  kActionFeedback = 4,
  kActionResult = 5,
  kActionCancel = 6,
  kAck = 7,
  kHeartbeat = 8,
  kSub = 9,
  kUnsub = 10,
  kAdvertise = 11,
  kInfoReq = 12,
  kInfoResp = 13,
};

enum class PayloadType : std::uint8_t {
  kNull = 0,
  kBool = 1,
  kInt64 = 2,
  kFloat64 = 3,
  kStringUtf8 = 4,
  kBytes = 5,
  kImage = 6,
  kAudio = 7,
  kVideoChunk = 8,
};

namespace flags {
inline constexpr std::uint8_t kRequiresAck = 0x01;
inline constexpr std::uint8_t kErrorResponse = 0x02;
inline constexpr std::uint8_t kReservedMask = 0xFC;
}  // namespace flags

using CorrelationId = std::array<std::uint8_t, 16>;

inline constexpr CorrelationId kNoCorrelation{};

struct Frame {
  FrameKind kind = FrameKind::kData;
  PayloadType payload_type = PayloadType::kNull;
  std::uint8_t flags = 0;
  std::uint64_t sequence = 0;
  std::uint64_t timestamp_send = 0;  // ns since Unix epoch
  std::string topic;
  CorrelationId correlation{};
  Bytes payload;

  bool requires_ack() const { return (flags & flags::kRequiresAck) != 0; }
  bool is_error() const { return (flags & flags::kErrorResponse) != 0; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

enum class CodecErrc {
  kBadMagic,
  kUnsupportedVersion,
  kUnknownKind,
  kUnknownPayloadType,
  kTruncated,
  kReservedFlags,
  kInvalidTopic,
  kTopicTooLong,
  kPayloadTooLong,
  kMissingCorrelation,
  kTrailingBytes,
  kInvalidPayload,
};

const char* to_string(CodecErrc errc);

class CodecError : public std::runtime_error {
 public:
  CodecError(CodecErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  CodecErrc code() const noexcept { return code_; }

 private:
  CodecErrc code_;
};

const char* to_string(FrameKind kind);
const char* to_string(PayloadType type);
std::optional<PayloadType> payload_type_from_string(std::string_view name);

/// Kinds whose correlation field must be nonzero.
bool kind_requires_correlation(FrameKind kind);

bool is_valid_utf8(std::string_view text);

/// Encoded size of `frame` without encoding it.
constexpr std::size_t encoded_size(std::size_t topic_len, std::size_t payload_len) {
  return kFrameFixedSize + topic_len + payload_len;
}
inline std::size_t encoded_size(const Frame& frame) {
  return encoded_size(frame.topic.size(), frame.payload.size());
}

/// Checks every Frame invariant; throws CodecError on the first violation.
void validate_frame(const Frame& frame);

Bytes encode_frame(const Frame& frame);
/// Appends the encoding of `frame` to `out`.
void encode_frame_into(const Frame& frame, Bytes& out);

/// Decodes exactly one frame spanning all of `bytes`.
Frame decode_frame(ByteView bytes);

struct DecodeStep {
  Frame frame;
  std::size_t consumed = 0;
};

/// Incremental decoding for streams. Returns nullopt when `bytes` holds only a
/// prefix of a frame; throws CodecError when the prefix is already invalid.
std::optional<DecodeStep> try_decode_frame(ByteView bytes);

}  // namespace mros
