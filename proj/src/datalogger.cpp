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

#include "mros/datalogger.hpp"

#include <spdlog/spdlog.h>

#include <cerrno>
#include <cstring>
#include <map>
#include <mutex>
#include <thread>

#include "byte_io.hpp"

namespace mros {

namespace {

std::string errno_text() { return std::strerror(errno); }

}  // namespace

// LogWriter

LogWriter::LogWriter(const std::filesystem::path& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) throw LogError("cannot open '" + path.string() + "': " + errno_text());
  if (std::fwrite(kLogMagic.data(), 1, kLogMagic.size(), file_) != kLogMagic.size()) {
    std::fclose(file_);
    file_ = nullptr;
    throw LogError("cannot write log header to '" + path.string() + "'");
  }
  committed_ = kLogMagic.size();
  last_flush_ = SteadyClock::now();
}

LogWriter::~LogWriter() {
  try {
    close();
  } catch (const LogError& e) {
    spdlog::warn("log '{}': {}", path_.string(), e.what());
  }
}

void LogWriter::append(const Frame& frame) {
  if (!file_ || broken_) throw LogError("log '" + path_.string() + "' is closed");
  const std::size_t frame_len = encoded_size(frame);
  if (frame_len > 0xFFFFFFFFull) throw LogError("frame too large for a log record");
  Bytes record;
  detail::put_be<std::uint32_t>(record, static_cast<std::uint32_t>(frame_len));
  encode_frame_into(frame, record);
  if (std::fwrite(record.data(), 1, record.size(), file_) != record.size()) {
    broken_ = true;
    throw LogError("write to '" + path_.string() + "' failed: " + errno_text());
  }
  committed_ += record.size();
  ++records_;
  ++pending_;
  maybe_flush();
}

void LogWriter::maybe_flush() {
  if (pending_ >= kLogFlushFrames ||
      (pending_ > 0 && SteadyClock::now() - last_flush_ >= kLogFlushInterval)) {
    flush();
  }
}

void LogWriter::flush() {
  if (!file_ || broken_) return;
  if (std::fflush(file_) != 0) {
    broken_ = true;
    throw LogError("flush of '" + path_.string() + "' failed: " + errno_text());
  }
  pending_ = 0;
  last_flush_ = SteadyClock::now();
}

void LogWriter::close() {
  if (!file_) return;
  std::FILE* f = std::exchange(file_, nullptr);
  const bool flushed = std::fflush(f) == 0;
  std::fclose(f);
  if (broken_ || !flushed) {
    // Cut back to the last complete record.
    std::error_code ec;
    std::filesystem::resize_file(path_, committed_, ec);
    if (!flushed && !broken_) throw LogError("flush of '" + path_.string() + "' failed");
  }
}

// LogReader

LogReader::LogReader(const std::filesystem::path& path) {
  file_ = std::fopen(path.c_str(), "rb");
  if (!file_) throw LogError("cannot open '" + path.string() + "': " + errno_text());
  std::array<char, 8> magic{};
  const std::size_t got = std::fread(magic.data(), 1, magic.size(), file_);
  const bool prefix_ok = std::memcmp(magic.data(), kLogMagic.data(), std::min<std::size_t>(got, 7)) == 0;
  if (got < magic.size()) {
    std::fclose(file_);
    file_ = nullptr;
    if (!prefix_ok) throw LogError("'" + path.string() + "' is not a log file");
    truncated_ = true;  // cut inside the header: an empty log
    return;
  }
  if (!prefix_ok) {
    std::fclose(file_);
    file_ = nullptr;
    throw LogError("'" + path.string() + "' is not a log file");
  }
  if (magic[7] != kLogMagic[7]) {
    std::fclose(file_);
    file_ = nullptr;
    throw LogError("'" + path.string() + "' has unknown log version '" + magic[7] + "'");
  }
  position_ = magic.size();
}

LogReader::~LogReader() {
  if (file_) std::fclose(file_);
}

std::optional<Frame> LogReader::next() {
  if (!file_) return std::nullopt;
  std::array<std::uint8_t, 4> len_bytes{};
  const std::size_t got = std::fread(len_bytes.data(), 1, len_bytes.size(), file_);
  if (got == 0) return std::nullopt;
  if (got < len_bytes.size()) {
    truncated_ = true;
    return std::nullopt;
  }
  const std::uint32_t len = detail::load_be<std::uint32_t>(len_bytes.data());
  if (len < kFrameFixedSize) {
    throw LogError("corrupt record at offset " + std::to_string(position_) + ": length " +
                   std::to_string(len) + " is shorter than a frame header");
  }
  // Check the remaining size before allocating for a possibly garbage length.
  const long here = std::ftell(file_);
  std::fseek(file_, 0, SEEK_END);
  const long end = std::ftell(file_);
  std::fseek(file_, here, SEEK_SET);
  if (end - here < static_cast<long>(len)) {
    truncated_ = true;
    return std::nullopt;
  }
  Bytes bytes(len);
  if (std::fread(bytes.data(), 1, len, file_) != len) {
    truncated_ = true;
    return std::nullopt;
  }
  try {
    Frame f = decode_frame(bytes);
    position_ += 4 + len;
    return f;
  } catch (const CodecError& e) {
    throw LogError("corrupt record at offset " + std::to_string(position_) + ": " + e.what());
  }
}

std::vector<Frame> read_log(const std::filesystem::path& path) {
  LogReader reader(path);
  std::vector<Frame> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

// Recorder

struct Recorder::State {
  std::mutex mutex;
  std::unique_ptr<LogWriter> writer;
  std::vector<Subscription> subscriptions;
  Timer flush_timer;
  std::optional<std::string> error;
  std::uint64_t frames = 0;
  bool stopped = false;

  void on_frame(const Frame& f) {
    std::lock_guard lock(mutex);
    if (!writer || error) return;
    try {
      writer->append(f);
      ++frames;
    } catch (const LogError& e) {
      error = e.what();
      spdlog::error("recorder stopped: {}", e.what());
    }
  }

  void on_tick() {
    std::lock_guard lock(mutex);
    if (!writer || error) return;
    try {
      writer->maybe_flush();
    } catch (const LogError& e) {
      error = e.what();
    }
  }
};

QosProfile Recorder::deep_queue() {
  QosProfile q;
  q.history_depth = 1u << 16;
  return q;
}

Recorder::Recorder(Node& node, const std::vector<std::string>& patterns,
                   const std::filesystem::path& path, const QosProfile& qos)
    : state_(std::make_shared<State>()) {
  if (patterns.empty()) throw std::invalid_argument("recorder needs at least one topic pattern");
  state_->writer = std::make_unique<LogWriter>(path);
  std::weak_ptr<State> weak = state_;
  for (const auto& p : patterns) {
    state_->subscriptions.push_back(node.subscribe_raw(p, qos, [weak](const Frame& f, const MessageInfo&) {
      if (auto s = weak.lock()) s->on_frame(f);
    }));
  }
  state_->flush_timer = node.create_timer(kLogFlushInterval, [weak] {
    if (auto s = weak.lock()) s->on_tick();
  });
}

Recorder::~Recorder() { stop(); }

void Recorder::stop() {
  if (!state_) return;
  for (auto& s : state_->subscriptions) s.unsubscribe();
  state_->flush_timer.cancel();
  std::lock_guard lock(state_->mutex);
  if (state_->stopped) return;
  state_->stopped = true;
  try {
    state_->writer->close();
  } catch (const LogError& e) {
    if (!state_->error) state_->error = e.what();
  }
}

std::uint64_t Recorder::frames() const {
  std::lock_guard lock(state_->mutex);
  return state_->frames;
}

std::optional<std::string> Recorder::error() const {
  std::lock_guard lock(state_->mutex);
  return state_->error;
}

// Replay

ReplayStats replay(const std::filesystem::path& path, Node& node, ReplayMode mode,
                   const QosProfile& qos) {
  LogReader reader(path);
  ReplayStats stats;
  std::map<std::pair<std::string, PayloadType>, Publisher> publishers;
  std::optional<std::uint64_t> first_ts;
  const auto start = SteadyClock::now();
  while (true) {
    std::optional<Frame> f;
    try {
      f = reader.next();
    } catch (const LogError& e) {
      stats.error = e.what();
      break;
    }
    if (!f) break;
    if (f->kind != FrameKind::kData) continue;
    if (mode == ReplayMode::kTimed) {
      if (!first_ts) first_ts = f->timestamp_send;
      if (f->timestamp_send > *first_ts) {
        std::this_thread::sleep_until(start + Nanos(static_cast<std::int64_t>(f->timestamp_send - *first_ts)));
      }
    }
    const auto key = std::make_pair(f->topic, f->payload_type);
    auto it = publishers.find(key);
    if (it == publishers.end()) {
      it = publishers.emplace(key, node.advertise({f->topic, f->payload_type, qos})).first;
    }
    it->second.publish_encoded(f->payload_type, std::move(f->payload));
    ++stats.published;
  }
  stats.truncated = reader.truncated();
  return stats;
}

}  // namespace mros
