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

#include "mros/payload.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "byte_io.hpp"

namespace mros {

namespace {

constexpr std::size_t kImageHeader = 10;  // width u32, height u32, channels u8, format u8
constexpr std::size_t kAudioHeader = 10;  // rate u32, channels u8, format u8, frames u32
constexpr std::size_t kVideoHeader = 6;   // codec u8, index u32, keyframe u8

[[noreturn]] void bad(const std::string& what) {
  throw CodecError(CodecErrc::kInvalidPayload, "invalid payload: " + what);
}

void expect_size(ByteView bytes, std::size_t want, const char* type) {
  if (bytes.size() != want) {
    bad(std::string(type) + " body is " + std::to_string(bytes.size()) + " bytes, expected " +
        std::to_string(want));
  }
}

PixelFormat checked_pixel_format(std::uint8_t tag) {
  if (tag > static_cast<std::uint8_t>(PixelFormat::kRgba8)) {
    bad("unknown pixel format " + std::to_string(tag));
  }
  return static_cast<PixelFormat>(tag);
}

SampleFormat checked_sample_format(std::uint8_t tag) {
  if (tag > static_cast<std::uint8_t>(SampleFormat::kF32Le)) {
    bad("unknown sample format " + std::to_string(tag));
  }
  return static_cast<SampleFormat>(tag);
}

std::size_t image_bytes(const Image& img) {
  if (img.width == 0 || img.height == 0 || img.channels == 0) bad("image has a zero dimension");
  if (img.channels != channels_for(img.format)) {
    bad("image channel count " + std::to_string(img.channels) + " does not match pixel format");
  }
  return static_cast<std::size_t>(img.width) * img.height * img.channels;
}

std::size_t audio_bytes(const Audio& a) {
  if (a.channels == 0) bad("audio has zero channels");
  return static_cast<std::size_t>(a.frame_count) * a.channels * bytes_per_sample(a.format);
}

struct Encoder {
  Bytes& out;

  void operator()(std::monostate) const {}
  void operator()(bool v) const { out.push_back(v ? 1 : 0); }
  void operator()(std::int64_t v) const {
    detail::put_be<std::uint64_t>(out, static_cast<std::uint64_t>(v));
  }
  void operator()(double v) const { detail::put_be<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }
  void operator()(const std::string& v) const {
    if (!is_valid_utf8(v)) bad("string is not valid UTF-8");
    detail::put_bytes(out, std::string_view(v));
  }
  void operator()(const Blob& v) const { detail::put_bytes(out, ByteView(v.data)); }
  void operator()(const Image& img) const {
    const std::size_t want = image_bytes(img);
    if (img.data.size() != want) bad("image data length does not match dimensions");
    detail::put_be<std::uint32_t>(out, img.width);
    detail::put_be<std::uint32_t>(out, img.height);
    detail::put_u8(out, img.channels);
    detail::put_u8(out, static_cast<std::uint8_t>(img.format));
    detail::put_bytes(out, ByteView(img.data));
  }
  void operator()(const Audio& a) const {
    checked_sample_format(static_cast<std::uint8_t>(a.format));
    if (a.data.size() != audio_bytes(a)) bad("audio data length does not match frame count");
    detail::put_be<std::uint32_t>(out, a.sample_rate);
    detail::put_u8(out, a.channels);
    detail::put_u8(out, static_cast<std::uint8_t>(a.format));
    detail::put_be<std::uint32_t>(out, a.frame_count);
    detail::put_bytes(out, ByteView(a.data));
  }
  void operator()(const VideoChunk& v) const {
    if (static_cast<std::uint8_t>(v.codec) > static_cast<std::uint8_t>(VideoCodec::kOpaque)) {
      bad("unknown video codec");
    }
    detail::put_u8(out, static_cast<std::uint8_t>(v.codec));
    detail::put_be<std::uint32_t>(out, v.chunk_index);
    detail::put_u8(out, v.keyframe ? 1 : 0);
    detail::put_bytes(out, ByteView(v.data));
  }
};

}  // namespace

std::uint8_t channels_for(PixelFormat format) {
  switch (format) {
    case PixelFormat::kGray8: return 1;
    case PixelFormat::kRgb8:
    case PixelFormat::kBgr8: return 3;
    case PixelFormat::kRgba8: return 4;
  }
  return 0;
}

std::size_t bytes_per_sample(SampleFormat format) {
  return format == SampleFormat::kPcm16Le ? 2 : 4;
}

PayloadType type_of(const Value& value) { return static_cast<PayloadType>(value.index()); }

TypedPayload encode_typed_payload(const Value& value) {
  TypedPayload p;
  p.type = type_of(value);
  std::visit(Encoder{p.bytes}, value);
  return p;
}

Value decode_typed_payload(PayloadType type, ByteView bytes) {
  detail::Reader in(bytes);
  switch (type) {
    case PayloadType::kNull:
      expect_size(bytes, 0, "NULL");
      return std::monostate{};
    case PayloadType::kBool:
      expect_size(bytes, 1, "BOOL");
      if (bytes[0] > 1) bad("BOOL byte must be 0 or 1");
      return bytes[0] == 1;
    case PayloadType::kInt64:
      expect_size(bytes, 8, "INT64");
      return static_cast<std::int64_t>(in.be<std::uint64_t>());
    case PayloadType::kFloat64:
      expect_size(bytes, 8, "FLOAT64");
      return std::bit_cast<double>(in.be<std::uint64_t>());
    case PayloadType::kStringUtf8: {
      std::string s(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      if (!is_valid_utf8(s)) bad("string is not valid UTF-8");
      return s;
    }
    case PayloadType::kBytes:
      return Blob{Bytes(bytes.begin(), bytes.end())};
    case PayloadType::kImage: {
      if (!in.has(kImageHeader)) bad("IMAGE header truncated");
      Image img;
      img.width = in.be<std::uint32_t>();
      img.height = in.be<std::uint32_t>();
      img.channels = in.u8();
      img.format = checked_pixel_format(in.u8());
      expect_size(bytes, kImageHeader + image_bytes(img), "IMAGE");
      auto data = in.take(in.remaining());
      img.data.assign(data.begin(), data.end());
      return img;
    }
    case PayloadType::kAudio: {
      if (!in.has(kAudioHeader)) bad("AUDIO header truncated");
      Audio a;
      a.sample_rate = in.be<std::uint32_t>();
      a.channels = in.u8();
      a.format = checked_sample_format(in.u8());
      a.frame_count = in.be<std::uint32_t>();
      expect_size(bytes, kAudioHeader + audio_bytes(a), "AUDIO");
      auto data = in.take(in.remaining());
      a.data.assign(data.begin(), data.end());
      return a;
    }
    case PayloadType::kVideoChunk: {
      if (!in.has(kVideoHeader)) bad("VIDEO_CHUNK header truncated");
      VideoChunk v;
      const std::uint8_t codec = in.u8();
      if (codec > static_cast<std::uint8_t>(VideoCodec::kOpaque)) bad("unknown video codec");
      v.codec = static_cast<VideoCodec>(codec);
      v.chunk_index = in.be<std::uint32_t>();
      const std::uint8_t key = in.u8();
      if (key > 1) bad("keyframe byte must be 0 or 1");
      v.keyframe = key == 1;
      auto data = in.take(in.remaining());
      v.data.assign(data.begin(), data.end());
      return v;
    }
  }
  throw CodecError(CodecErrc::kUnknownPayloadType,
                   "unknown payload type " + std::to_string(static_cast<int>(type)));
}

std::string describe(const Value& value) {
  std::ostringstream os;
  std::visit(
      [&os](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          os << "null";
        } else if constexpr (std::is_same_v<T, bool>) {
          os << (v ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, double>) {
          os << v;
        } else if constexpr (std::is_same_v<T, std::string>) {
          os << '"' << v << '"';
        } else if constexpr (std::is_same_v<T, Blob>) {
          os << "<" << v.data.size() << " bytes>";
        } else if constexpr (std::is_same_v<T, Image>) {
          os << "<image " << v.width << "x" << v.height << "x" << int(v.channels) << ">";
        } else if constexpr (std::is_same_v<T, Audio>) {
          os << "<audio " << v.sample_rate << "Hz " << int(v.channels) << "ch " << v.frame_count
             << " frames>";
        } else {
          os << "<video chunk " << v.chunk_index << (v.keyframe ? " key" : "") << " "
             << v.data.size() << " bytes>";
        }
      },
      value);
  return os.str();
}

}  // namespace mros
