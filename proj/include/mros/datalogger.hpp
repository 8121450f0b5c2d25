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
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mros/node.hpp"

namespace mros {

// File layout: "MROSLOG1", then records of [u32 BE length][encoded frame].
inline constexpr std::array<char, 8> kLogMagic{'M', 'R', 'O', 'S', 'L', 'O', 'G', '1'};
inline constexpr std::size_t kLogFlushFrames = 100;
inline constexpr Nanos kLogFlushInterval = Millis(1000);

class LogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Appends encoded frames to a log file. One writer per file.
class LogWriter {
 public:
  /// Creates or truncates `path` and writes the header. Throws LogError.
  explicit LogWriter(const std::filesystem::path& path);
  ~LogWriter();
  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  /// Throws LogError on a write failure; the writer is unusable afterwards.
  void append(const Frame& frame);
  /// Flushes when kLogFlushFrames records are pending or kLogFlushInterval has passed.
  void maybe_flush();
  void flush();
  /// Flushes and closes, cutting off a partially written trailing record.
  void close();

  std::uint64_t records() const { return records_; }
  /// Bytes of complete records plus the header.
  std::uint64_t committed_bytes() const { return committed_; }

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  std::uint64_t records_ = 0;
  std::uint64_t committed_ = 0;
  std::size_t pending_ = 0;
  TimePoint last_flush_;
  bool broken_ = false;
};

/// Reads a log front to back. A truncated trailing record ends the log quietly.
class LogReader {
 public:
  /// Throws LogError for a missing file, a bad magic or an unknown version.
  explicit LogReader(const std::filesystem::path& path);
  ~LogReader();
  LogReader(const LogReader&) = delete;
  LogReader& operator=(const LogReader&) = delete;

  /// The next frame, or nullopt at the end. Throws LogError naming the byte
  /// offset of a record that does not decode.
  std::optional<Frame> next();
  /// Offset of the record next() will read.
  std::uint64_t position() const { return position_; }
  /// True once next() hit an incomplete trailing record.
  bool truncated() const { return truncated_; }

 private:
  std::FILE* file_ = nullptr;
  std::uint64_t position_ = 0;
  bool truncated_ = false;
};

/// Every complete frame in `path`.
std::vector<Frame> read_log(const std::filesystem::path& path);

/// Records DATA frames matching the patterns. Frames are written on the node's executor.
class Recorder {
 public:
  /// `qos.history_depth` bounds frames waiting for the executor.
  Recorder(Node& node, const std::vector<std::string>& patterns, const std::filesystem::path& path,
           const QosProfile& qos = deep_queue());
  ~Recorder();
  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;

  /// Unsubscribes, flushes and closes the file. Idempotent.
  void stop();
  std::uint64_t frames() const;
  /// The write error that stopped recording, if any.
  std::optional<std::string> error() const;

  static QosProfile deep_queue();

 private:
  struct State;
  std::shared_ptr<State> state_;
};

enum class ReplayMode { kFast, kTimed };

struct ReplayStats {
  std::uint64_t published = 0;
  bool truncated = false;
  /// Set when replay stopped on a corrupt record.
  std::optional<std::string> error;
};

/// Republishes every frame in file order with fresh sequence numbers and
/// timestamps. Timed mode reproduces the recorded gaps between timestamp_send values.
ReplayStats replay(const std::filesystem::path& path, Node& node, ReplayMode mode,
                   const QosProfile& qos = {});

}  // namespace mros
