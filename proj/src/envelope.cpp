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

#include "mros/envelope.hpp"

#include <algorithm>
#include <string>

#include "byte_io.hpp"

namespace mros {

namespace {

constexpr std::uint8_t kMaxKindTag = static_cast<std::uint8_t>(FrameKind::kInfoResp);
constexpr std::uint8_t kMaxPayloadTag = static_cast<std::uint8_t>(PayloadType::kVideoChunk);

// Offsets into the fixed header.
constexpr std::size_t kOffVersion = 4;
constexpr std::size_t kOffKind = 5;
constexpr std::size_t kOffPayloadType = 6;
constexpr std::size_t kOffFlags = 7;
constexpr std::size_t kOffSequence = 8;
constexpr std::size_t kOffTimestamp = 16;
constexpr std::size_t kOffTopicLen = 24;
constexpr std::size_t kOffTopic = 26;

[[noreturn]] void fail(CodecErrc code, const std::string& detail) {
  throw CodecError(code, std::string(to_string(code)) + ": " + detail);
}

bool is_zero(const CorrelationId& id) {
  return std::all_of(id.begin(), id.end(), [](std::uint8_t b) { return b == 0; });
}

void check_topic(std::string_view topic) {
  if (topic.size() > kMaxTopicLength) {
    fail(CodecErrc::kTopicTooLong, std::to_string(topic.size()) + " bytes");
  }
  if (topic.find('\0') != std::string_view::npos) fail(CodecErrc::kInvalidTopic, "embedded NUL");
  if (!is_valid_utf8(topic)) fail(CodecErrc::kInvalidTopic, "not valid UTF-8");
}

}  // namespace

const char* to_string(CodecErrc errc) {
  switch (errc) {
    case CodecErrc::kBadMagic: return "bad magic";
    case CodecErrc::kUnsupportedVersion: return "unsupported version";
    case CodecErrc::kUnknownKind: return "unknown frame kind";
    case CodecErrc::kUnknownPayloadType: return "unknown payload type";
    case CodecErrc::kTruncated: return "truncated frame";
    case CodecErrc::kReservedFlags: return "reserved flag bits set";
    case CodecErrc::kInvalidTopic: return "invalid topic";
    case CodecErrc::kTopicTooLong: return "topic too long";
    case CodecErrc::kPayloadTooLong: return "payload too long";
    case CodecErrc::kMissingCorrelation: return "missing correlation id";
    case CodecErrc::kTrailingBytes: return "trailing bytes after frame";
    case CodecErrc::kInvalidPayload: return "invalid payload";
  }
  return "unknown codec error";
}

const char* to_string(FrameKind kind) {
  switch (kind) {
    case FrameKind::kData: return "DATA";
    case FrameKind::kSvcReq: return "SVC_REQ";
    case FrameKind::kSvcResp: return "SVC_RESP";
    case FrameKind::kActionGoal: return "ACTION_GOAL";
    case FrameKind::kActionFeedback: return "ACTION_FEEDBACK";
    case FrameKind::kActionResult: return "ACTION_RESULT";
    case FrameKind::kActionCancel: return "ACTION_CANCEL";
    case FrameKind::kAck: return "ACK";
    case FrameKind::kHeartbeat: return "HEARTBEAT";
    case FrameKind::kSub: return "SUB";
    case FrameKind::kUnsub: return "UNSUB";
    case FrameKind::kAdvertise: return "ADVERTISE";
    case FrameKind::kInfoReq: return "INFO_REQ";
    case FrameKind::kInfoResp: return "INFO_RESP";
  }
  return "?";
}

const char* to_string(PayloadType type) {
  switch (type) {
    case PayloadType::kNull: return "NULL";
    case PayloadType::kBool: return "BOOL";
    case PayloadType::kInt64: return "INT64";
    case PayloadType::kFloat64: return "FLOAT64";
    case PayloadType::kStringUtf8: return "STRING_UTF8";
    case PayloadType::kBytes: return "BYTES";
    case PayloadType::kImage: return "IMAGE";
    case PayloadType::kAudio: return "AUDIO";
    case PayloadType::kVideoChunk: return "VIDEO_CHUNK";
  }
  return "?";
}

std::optional<PayloadType> payload_type_from_string(std::string_view name) {
  for (std::uint8_t tag = 0; tag <= kMaxPayloadTag; ++tag) {
    auto type = static_cast<PayloadType>(tag);
    if (name == to_string(type)) return type;
  }
  // Friendly aliases for the command line.
  if (name == "STRING" || name == "string") return PayloadType::kStringUtf8;
  if (name == "int64" || name == "int") return PayloadType::kInt64;
  if (name == "float64" || name == "double") return PayloadType::kFloat64;
  if (name == "bool") return PayloadType::kBool;
  if (name == "bytes") return PayloadType::kBytes;
  return std::nullopt;
}

bool kind_requires_correlation(FrameKind kind) {
  switch (kind) {
    case FrameKind::kSvcReq:
    case FrameKind::kSvcResp:
    case FrameKind::kActionGoal:
    case FrameKind::kActionFeedback:
    case FrameKind::kActionResult:
    case FrameKind::kActionCancel:
      return true;
    default:
      return false;
  }
}

bool is_valid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    // Overlong forms, surrogates and out-of-range code points.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
      return false;
    }
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

void validate_frame(const Frame& frame) {
  if (static_cast<std::uint8_t>(frame.kind) > kMaxKindTag) {
    fail(CodecErrc::kUnknownKind, std::to_string(static_cast<int>(frame.kind)));
  }
  if (static_cast<std::uint8_t>(frame.payload_type) > kMaxPayloadTag) {
    fail(CodecErrc::kUnknownPayloadType, std::to_string(static_cast<int>(frame.payload_type)));
  }
  if ((frame.flags & flags::kReservedMask) != 0) {
    fail(CodecErrc::kReservedFlags, std::to_string(frame.flags));
  }
  check_topic(frame.topic);
  if (kind_requires_correlation(frame.kind) && is_zero(frame.correlation)) {
    fail(CodecErrc::kMissingCorrelation, to_string(frame.kind));
  }
  if (frame.payload.size() > kMaxPayloadLength) {
    fail(CodecErrc::kPayloadTooLong, std::to_string(frame.payload.size()) + " bytes");
  }
}

void encode_frame_into(const Frame& frame, Bytes& out) {
  validate_frame(frame);
  const std::size_t need = out.size() + encoded_size(frame);
  // Keep geometric growth when many frames are appended to one buffer.
  if (need > out.capacity()) out.reserve(std::max(need, out.capacity() * 2));
  detail::put_bytes(out, ByteView(kFrameMagic));
  detail::put_u8(out, kWireVersion);
  detail::put_u8(out, static_cast<std::uint8_t>(frame.kind));
  detail::put_u8(out, static_cast<std::uint8_t>(frame.payload_type));
  detail::put_u8(out, frame.flags);
  detail::put_be<std::uint64_t>(out, frame.sequence);
  detail::put_be<std::uint64_t>(out, frame.timestamp_send);
  detail::put_be<std::uint16_t>(out, static_cast<std::uint16_t>(frame.topic.size()));
  detail::put_bytes(out, std::string_view(frame.topic));
  detail::put_bytes(out, ByteView(frame.correlation));
  detail::put_be<std::uint32_t>(out, static_cast<std::uint32_t>(frame.payload.size()));
  detail::put_bytes(out, ByteView(frame.payload));
}

Bytes encode_frame(const Frame& frame) {
  Bytes out;
  encode_frame_into(frame, out);
  return out;
}

std::optional<DecodeStep> try_decode_frame(ByteView bytes) {
  const std::size_t n = bytes.size();

  const std::size_t magic_avail = std::min(n, kFrameMagic.size());
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(magic_avail),
                  kFrameMagic.begin())) {
    fail(CodecErrc::kBadMagic, "frame does not start with MROS");
  }
  if (n > kOffVersion && bytes[kOffVersion] != kWireVersion) {
    fail(CodecErrc::kUnsupportedVersion, std::to_string(bytes[kOffVersion]));
  }
  if (n > kOffKind && bytes[kOffKind] > kMaxKindTag) {
    fail(CodecErrc::kUnknownKind, std::to_string(bytes[kOffKind]));
  }
  if (n > kOffPayloadType && bytes[kOffPayloadType] > kMaxPayloadTag) {
    fail(CodecErrc::kUnknownPayloadType, std::to_string(bytes[kOffPayloadType]));
  }
  if (n > kOffFlags && (bytes[kOffFlags] & flags::kReservedMask) != 0) {
    fail(CodecErrc::kReservedFlags, std::to_string(bytes[kOffFlags]));
  }
  if (n < kOffTopic) return std::nullopt;

  const std::size_t topic_len = detail::load_be<std::uint16_t>(bytes.data() + kOffTopicLen);
  const std::size_t off_corr = kOffTopic + topic_len;
  const std::size_t off_payload_len = off_corr + 16;
  const std::size_t off_payload = off_payload_len + 4;
  if (n < off_payload) return std::nullopt;

  const std::size_t payload_len = detail::load_be<std::uint32_t>(bytes.data() + off_payload_len);
  const std::size_t total = off_payload + payload_len;
  if (n < total) return std::nullopt;

  DecodeStep step;
  Frame& f = step.frame;
  f.kind = static_cast<FrameKind>(bytes[kOffKind]);
  f.payload_type = static_cast<PayloadType>(bytes[kOffPayloadType]);
  f.flags = bytes[kOffFlags];
  f.sequence = detail::load_be<std::uint64_t>(bytes.data() + kOffSequence);
  f.timestamp_send = detail::load_be<std::uint64_t>(bytes.data() + kOffTimestamp);
  f.topic.assign(reinterpret_cast<const char*>(bytes.data() + kOffTopic), topic_len);
  check_topic(f.topic);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(off_corr), 16, f.correlation.begin());
  if (kind_requires_correlation(f.kind) && is_zero(f.correlation)) {
    fail(CodecErrc::kMissingCorrelation, to_string(f.kind));
  }
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off_payload),
                   bytes.begin() + static_cast<std::ptrdiff_t>(total));
  step.consumed = total;
  return step;
}

Frame decode_frame(ByteView bytes) {
  auto step = try_decode_frame(bytes);
  if (!step) {
    fail(CodecErrc::kTruncated, "declared lengths exceed the " + std::to_string(bytes.size()) +
                                    " available bytes");
  }
  if (step->consumed != bytes.size()) {
    fail(CodecErrc::kTrailingBytes, std::to_string(bytes.size() - step->consumed) + " extra");
  }
  return std::move(step->frame);
}

}  // namespace mros
