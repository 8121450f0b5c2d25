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

#include "tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <list>
#include <mutex>
#include <thread>

#include "broker_core.hpp"
#include "mros/frame_queue.hpp"

namespace mros::detail {

namespace {

constexpr std::size_t kReadChunk = 256 * 1024;
constexpr std::size_t kWriteChunk = 1024 * 1024;

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

std::string errno_text() { return std::strerror(errno); }

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

bool write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    const ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += n;
    size -= static_cast<std::size_t>(n);
  }
  return true;
}

/// Accumulates stream bytes and cuts them into frames.
class StreamDecoder {
 public:
  /// Returns false on EOF or socket error.
  bool read_from(int fd) {
    const std::size_t old = buffer_.size();
    buffer_.resize(old + kReadChunk);
    ssize_t n;
    do {
      n = ::recv(fd, buffer_.data() + old, kReadChunk, 0);
    } while (n < 0 && errno == EINTR);
    buffer_.resize(old + static_cast<std::size_t>(std::max<ssize_t>(n, 0)));
    return n > 0;
  }

  /// Throws CodecError on a malformed stream.
  void drain(std::vector<Frame>& out) {
    while (start_ < buffer_.size()) {
      auto step = try_decode_frame(ByteView(buffer_).subspan(start_));
      if (!step) break;
      out.push_back(std::move(step->frame));
      start_ += step->consumed;
    }
    if (start_ == buffer_.size()) {
      buffer_.clear();
      start_ = 0;
    } else if (start_ > (1u << 20)) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(start_));
      start_ = 0;
    }
  }

 private:
  Bytes buffer_;
  std::size_t start_ = 0;
};

Fd open_client_socket(const EndpointAddress& address) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const std::string host = address.host();
  const std::string port = std::to_string(address.port());
  if (address.port() == 0) throw TransportError("tcp port must be in [1, 65535]");
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &result); rc != 0) {
    throw TransportError("cannot resolve " + address.to_string() + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  Fd fd;
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    Fd candidate(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!candidate.valid()) continue;
    if (::connect(candidate.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
      fd = std::move(candidate);
      break;
    }
    last_error = errno_text();
  }
  ::freeaddrinfo(result);
  if (!fd.valid()) {
    throw TransportError("connection refused: " + address.to_string() + ": " + last_error);
  }
  set_nodelay(fd.get());
  return fd;
}

class TcpConnection final : public Connection {
 public:
  explicit TcpConnection(Fd fd) : fd_(std::move(fd)) {}
  ~TcpConnection() override { close(); }

  bool send_frame(const Frame& frame) override {
    if (closed_.load(std::memory_order_acquire)) return false;
    thread_local Bytes buffer;
    buffer.clear();
    encode_frame_into(frame, buffer);
    std::lock_guard lock(send_mutex_);
    if (!write_all(fd_.get(), buffer.data(), buffer.size())) {
      mark_closed();
      return false;
    }
    return true;
  }

  void close() override {
    if (closed_.exchange(true)) return;
    ::shutdown(fd_.get(), SHUT_RDWR);
  }

  bool is_open() const override { return !closed_.load(); }

 protected:
  bool do_recv_frames(std::vector<Frame>& out, Nanos timeout) override {
    if (eof_) return false;
    pollfd pfd{fd_.get(), POLLIN, 0};
    const int ms = static_cast<int>(std::chrono::ceil<Millis>(timeout).count());
    const int rc = ::poll(&pfd, 1, ms);
    if (rc == 0) return !closed_.load();
    if (rc < 0) return errno == EINTR;
    const bool alive = decoder_.read_from(fd_.get());
    try {
      decoder_.drain(out);
    } catch (const CodecError& e) {
      spdlog::warn("closing connection after decode error: {}", e.what());
      mark_closed();
      eof_ = true;
      return false;
    }
    if (!alive) {
      mark_closed();
      eof_ = true;
      return !out.empty();
    }
    return true;
  }

 private:
  void mark_closed() {
    if (!closed_.exchange(true)) ::shutdown(fd_.get(), SHUT_RDWR);
  }

  Fd fd_;
  std::mutex send_mutex_;
  std::atomic<bool> closed_{false};
  StreamDecoder decoder_;
  bool eof_ = false;
};

}  // namespace

std::shared_ptr<Connection> connect_tcp(const EndpointAddress& address) {
  return std::make_shared<TcpConnection>(open_client_socket(address));
}

// --- server side -----------------------------------------------------------------

namespace {

class TcpSession final : public SessionSink, public std::enable_shared_from_this<TcpSession> {
 public:
  TcpSession(Fd fd, std::shared_ptr<BrokerCore> core, std::size_t capacity)
      : fd_(std::move(fd)), core_(std::move(core)), outbox_(capacity) {}

  ~TcpSession() override { join(); }

  void start() {
    id_ = core_->open_session(shared_from_this());
    reader_ = std::thread([this] { read_loop(); });
    writer_ = std::thread([this] { write_loop(); });
  }

  bool deliver(Frame frame) override {
    return outbox_.push(std::move(frame)) == FrameQueue::PushResult::kOk;
  }

  void close() override {
    outbox_.close();
    ::shutdown(fd_.get(), SHUT_RDWR);
  }

  bool finished() const { return reader_done_.load() && writer_done_.load(); }

  void join() {
    if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
    if (writer_.joinable() && writer_.get_id() != std::this_thread::get_id()) writer_.join();
  }

 private:
  void read_loop() {
    StreamDecoder decoder;
    std::vector<Frame> frames;
    while (true) {
      if (!decoder.read_from(fd_.get())) break;
      frames.clear();
      try {
        decoder.drain(frames);
      } catch (const CodecError& e) {
        spdlog::warn("session {}: decode error, closing: {}", id_, e.what());
        break;
      }
      bool alive = true;
      for (auto& f : frames) {
        if (!core_->on_frame(id_, std::move(f))) {
          alive = false;
          break;
        }
      }
      if (!alive) break;
    }
    core_->close_session(id_);
    close();
    reader_done_ = true;
  }

  void write_loop() {
    std::vector<Frame> batch;
    Bytes buffer;
    bool ok = true;
    while (ok) {
      batch.clear();
      const bool open = outbox_.pop_all(batch, Millis(100));
      buffer.clear();
      for (const auto& f : batch) {
        encode_frame_into(f, buffer);
        if (buffer.size() >= kWriteChunk) {
          if (!write_all(fd_.get(), buffer.data(), buffer.size())) {
            ok = false;
            break;
          }
          buffer.clear();
        }
      }
      if (ok && !buffer.empty() && !write_all(fd_.get(), buffer.data(), buffer.size())) ok = false;
      if (!open) break;
    }
    ::shutdown(fd_.get(), SHUT_RDWR);
    writer_done_ = true;
  }

  Fd fd_;
  std::shared_ptr<BrokerCore> core_;
  FrameQueue outbox_;
  SessionId id_ = 0;
  std::thread reader_;
  std::thread writer_;
  std::atomic<bool> reader_done_{false};
  std::atomic<bool> writer_done_{false};
};

}  // namespace

struct TcpListener::Impl {
  Fd listen_fd;
  std::shared_ptr<BrokerCore> core;
  std::atomic<bool> stopping{false};
  std::thread acceptor;
  std::mutex sessions_mutex;
  std::list<std::shared_ptr<TcpSession>> sessions;

  void accept_loop() {
    while (!stopping.load()) {
      pollfd pfd{listen_fd.get(), POLLIN, 0};
      const int rc = ::poll(&pfd, 1, 100);
      reap();
      if (rc <= 0) continue;
      Fd client(::accept(listen_fd.get(), nullptr, nullptr));
      if (!client.valid()) continue;
      set_nodelay(client.get());
      auto session = std::make_shared<TcpSession>(std::move(client), core, 65536);
      try {
        session->start();
      } catch (const TransportError&) {
        continue;  // broker shutting down
      }
      std::lock_guard lock(sessions_mutex);
      sessions.push_back(std::move(session));
    }
  }

  void reap() {
    std::lock_guard lock(sessions_mutex);
    for (auto it = sessions.begin(); it != sessions.end();) {
      if ((*it)->finished()) {
        (*it)->join();
        it = sessions.erase(it);
      } else {
        ++it;
      }
    }
  }
};

TcpListener::TcpListener(const EndpointAddress& address, std::shared_ptr<BrokerCore> core)
    : impl_(std::make_unique<Impl>()) {
  impl_->core = std::move(core);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  std::string host = address.host();
  if (host == "*" || host.empty()) host = "0.0.0.0";
  const std::string port = std::to_string(address.port());
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &result); rc != 0) {
    throw TransportError("cannot resolve " + address.to_string() + ": " + ::gai_strerror(rc));
  }
  Fd fd(::socket(result->ai_family, result->ai_socktype, result->ai_protocol));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (!fd.valid() || ::bind(fd.get(), result->ai_addr, result->ai_addrlen) != 0 ||
      ::listen(fd.get(), 128) != 0) {
    const std::string err = errno_text();
    ::freeaddrinfo(result);
    throw TransportError("cannot bind " + address.to_string() + ": " + err);
  }
  ::freeaddrinfo(result);
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  impl_->listen_fd = std::move(fd);
  impl_->acceptor = std::thread([impl = impl_.get()] { impl->accept_loop(); });
}

TcpListener::~TcpListener() { stop(); }

void TcpListener::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  impl_->listen_fd.reset();
  std::list<std::shared_ptr<TcpSession>> sessions;
  {
    std::lock_guard lock(impl_->sessions_mutex);
    sessions.swap(impl_->sessions);
  }
  for (auto& s : sessions) s->close();
  for (auto& s : sessions) s->join();
}

}  // namespace mros::detail
