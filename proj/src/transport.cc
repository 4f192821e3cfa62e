/*
 * Copyright 2026 The isonet Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "isonet/transport.h"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "binary_io.h"

namespace isonet {
namespace {

using Clock = std::chrono::steady_clock;

std::uint32_t Crc32(std::span<const std::uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      crc32(crc, data.data(), static_cast<uInt>(data.size())));
}

std::vector<std::uint8_t> EncodePayload(const RoundMessage::Body& body) {
  internal::ByteWriter w;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, InitModel>) {
          w.Put(static_cast<std::uint32_t>(m.params.size()));
          w.PutFloats(m.params);
        } else if constexpr (std::is_same_v<T, PredictedClass>) {
          w.Put(m.class_index);
        } else if constexpr (std::is_same_v<T, LocalParams>) {
          w.Put(m.round);
          w.Put(static_cast<std::uint32_t>(m.params.size()));
          w.PutFloats(m.params);
        } else if constexpr (std::is_same_v<T, GlobalParams>) {
          w.Put(m.round);
          w.Put(static_cast<std::uint8_t>(m.source_converged ? 1 : 0));
          w.Put(static_cast<std::uint32_t>(m.params.size()));
          w.PutFloats(m.params);
        } else {
          w.Put(m.final_round);
        }
      },
      body);
  return std::move(w.bytes());
}

std::vector<float> ReadParams(internal::ByteReader& r) {
  const std::uint32_t count = r.Get<std::uint32_t>();
  return r.GetFloats(count);
}

RoundMessage::Body DecodePayload(MessageType type, internal::ByteReader& r) {
  switch (type) {
    case MessageType::kInitModel:
      return InitModel{ReadParams(r)};
    case MessageType::kPredictedClass:
      return PredictedClass{r.Get<std::uint32_t>()};
    case MessageType::kLocalParams: {
      LocalParams m;
      m.round = r.Get<std::uint32_t>();
      m.params = ReadParams(r);
      return m;
    }
    case MessageType::kGlobalParams: {
      GlobalParams m;
      m.round = r.Get<std::uint32_t>();
      const auto flag = r.Get<std::uint8_t>();
      if (flag > 1) {
        throw DecodeError(DecodeErrorKind::kMalformedPayload,
                          "source_converged flag must be 0 or 1");
      }
      m.source_converged = flag == 1;
      m.params = ReadParams(r);
      return m;
    }
    case MessageType::kTerminate:
      return Terminate{r.Get<std::uint32_t>()};
  }
  throw DecodeError(DecodeErrorKind::kUnknownType, "unknown message type");
}

}  // namespace

std::string_view MessageTypeName(MessageType type) {
  switch (type) {
    case MessageType::kInitModel:
      return "InitModel";
    case MessageType::kPredictedClass:
      return "PredictedClass";
    case MessageType::kLocalParams:
      return "LocalParams";
    case MessageType::kGlobalParams:
      return "GlobalParams";
    case MessageType::kTerminate:
      return "Terminate";
  }
  return "Unknown";
}

MessageType RoundMessage::type() const {
  return static_cast<MessageType>(body.index() + 1);
}

std::string_view DecodeErrorKindName(DecodeErrorKind kind) {
  switch (kind) {
    case DecodeErrorKind::kTruncated:
      return "truncated";
    case DecodeErrorKind::kBadMagic:
      return "bad_magic";
    case DecodeErrorKind::kVersionMismatch:
      return "version_mismatch";
    case DecodeErrorKind::kChecksumMismatch:
      return "checksum_mismatch";
    case DecodeErrorKind::kUnknownType:
      return "unknown_type";
    case DecodeErrorKind::kMalformedPayload:
      return "malformed_payload";
  }
  return "unknown";
}

std::vector<std::uint8_t> Encode(const RoundMessage& message) {
  const std::vector<std::uint8_t> payload = EncodePayload(message.body);
  internal::ByteWriter w;
  w.PutBytes(kFrameMagic);
  w.Put(message.protocol_version);
  w.Put(static_cast<std::uint8_t>(message.type()));
  w.Put(static_cast<std::uint32_t>(payload.size()));
  w.PutBytes(payload);
  w.Put(Crc32(payload));
  return std::move(w.bytes());
}

std::uint32_t PeekPayloadLength(std::span<const std::uint8_t> header) {
  if (header.size() < kFrameHeaderSize) {
    throw DecodeError(DecodeErrorKind::kTruncated, "frame header truncated");
  }
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), header.begin())) {
    throw DecodeError(DecodeErrorKind::kBadMagic, "bad frame magic");
  }
  std::uint32_t len;
  std::memcpy(&len, header.data() + 7, sizeof(len));
  if (len > kMaxPayloadSize) {
    throw DecodeError(DecodeErrorKind::kMalformedPayload,
                      "payload length exceeds limit");
  }
  return len;
}

RoundMessage Decode(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameMagic.size()) {
    throw DecodeError(DecodeErrorKind::kTruncated, "frame truncated");
  }
  const std::uint32_t len = PeekPayloadLength(frame);
  internal::ByteReader header(frame.subspan(4, kFrameHeaderSize - 4));
  const auto version = header.Get<std::uint16_t>();
  const auto raw_type = header.Get<std::uint8_t>();
  if (version != kProtocolVersion) {
    throw DecodeError(DecodeErrorKind::kVersionMismatch,
                      "protocol version " + std::to_string(version) +
                          ", expected " + std::to_string(kProtocolVersion));
  }
  const std::size_t expected = kFrameHeaderSize + len + kFrameTrailerSize;
  if (frame.size() < expected) {
    throw DecodeError(DecodeErrorKind::kTruncated, "frame truncated");
  }
  if (frame.size() > expected) {
    throw DecodeError(DecodeErrorKind::kMalformedPayload,
                      "trailing bytes after frame");
  }
  const auto payload = frame.subspan(kFrameHeaderSize, len);
  std::uint32_t crc;
  std::memcpy(&crc, frame.data() + kFrameHeaderSize + len, sizeof(crc));
  if (crc != Crc32(payload)) {
    throw DecodeError(DecodeErrorKind::kChecksumMismatch, "payload checksum mismatch");
  }
  if (raw_type < 1 || raw_type >= kNumMessageTypes) {
    throw DecodeError(DecodeErrorKind::kUnknownType,
                      "unknown message type " + std::to_string(raw_type));
  }
  internal::ByteReader r(payload);
  RoundMessage m;
  m.protocol_version = version;
  try {
    m.body = DecodePayload(static_cast<MessageType>(raw_type), r);
  } catch (const std::out_of_range&) {
    throw DecodeError(DecodeErrorKind::kMalformedPayload, "payload too short");
  }
  if (r.remaining() != 0) {
    throw DecodeError(DecodeErrorKind::kMalformedPayload, "payload too long");
  }
  return m;
}

std::uint64_t MessageStats::total() const {
  std::uint64_t n = 0;
  for (std::uint64_t c : count) n += c;
  return n;
}

void MessageStats::Add(MessageType t, std::size_t payload) {
  ++count[static_cast<std::size_t>(t)];
  payload_bytes[static_cast<std::size_t>(t)] += payload;
}

MessageStats& MessageStats::operator+=(const MessageStats& other) {
  for (std::size_t i = 0; i < kNumMessageTypes; ++i) {
    count[i] += other.count[i];
    payload_bytes[i] += other.payload_bytes[i];
  }
  return *this;
}

void Endpoint::Send(const RoundMessage& message) {
  std::vector<std::uint8_t> frame = Encode(message);
  const std::size_t payload = frame.size() - kFrameHeaderSize - kFrameTrailerSize;
  SendFrame(std::move(frame));
  sent_.Add(message.type(), payload);
}

RoundMessage Endpoint::Receive() {
  const std::vector<std::uint8_t> frame = ReceiveFrame();
  RoundMessage m = Decode(frame);
  received_.Add(m.type(), frame.size() - kFrameHeaderSize - kFrameTrailerSize);
  return m;
}

// ---------------------------------------------------------------------------
// In-process channel.

namespace {

struct Mailbox {
  std::deque<std::vector<std::uint8_t>> frames;
  bool closed = false;
};

struct ChannelState {
  std::mutex mu;
  std::condition_variable cv;
  Mailbox boxes[2];
};

class ChannelEndpoint final : public Endpoint {
 public:
  ChannelEndpoint(std::shared_ptr<ChannelState> state, int side,
                  TransportOptions options)
      : state_(std::move(state)), side_(side), options_(options) {}
  ~ChannelEndpoint() override { Close(); }

  void Close() override {
    std::lock_guard<std::mutex> lock(state_->mu);
    // Closing marks the peer's inbox: no more frames will arrive there.
    state_->boxes[1 - side_].closed = true;
    state_->boxes[side_].closed = true;
    state_->cv.notify_all();
  }

 protected:
  void SendFrame(std::vector<std::uint8_t> frame) override {
    std::lock_guard<std::mutex> lock(state_->mu);
    Mailbox& peer = state_->boxes[1 - side_];
    if (peer.closed) {
      throw TransportError(TransportErrorKind::kClosed, "channel closed");
    }
    peer.frames.push_back(std::move(frame));
    state_->cv.notify_all();
  }

  std::vector<std::uint8_t> ReceiveFrame() override {
    std::unique_lock<std::mutex> lock(state_->mu);
    Mailbox& inbox = state_->boxes[side_];
    const bool ready = state_->cv.wait_for(lock, options_.receive_timeout, [&] {
      return !inbox.frames.empty() || inbox.closed;
    });
    if (!inbox.frames.empty()) {
      std::vector<std::uint8_t> frame = std::move(inbox.frames.front());
      inbox.frames.pop_front();
      return frame;
    }
    if (!ready) throw TransportError(TransportErrorKind::kTimeout, "receive timed out");
    throw TransportError(TransportErrorKind::kClosed, "channel closed by peer");
  }

 private:
  std::shared_ptr<ChannelState> state_;
  int side_;
  TransportOptions options_;
};

}  // namespace

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> ChannelPair(
    TransportOptions options) {
  auto state = std::make_shared<ChannelState>();
  return {std::make_unique<ChannelEndpoint>(state, 0, options),
          std::make_unique<ChannelEndpoint>(state, 1, options)};
}

// ---------------------------------------------------------------------------
// TCP.

namespace {

std::pair<std::string, std::string> SplitAddress(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size()) {
    throw std::invalid_argument("address must be host:port, got '" + address + "'");
  }
  std::string host = address.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  return {host, address.substr(colon + 1)};
}

struct AddrInfo {
  addrinfo* info = nullptr;
  ~AddrInfo() {
    if (info) freeaddrinfo(info);
  }
};

void Resolve(const std::string& address, bool passive, AddrInfo& out) {
  auto [host, port] = SplitAddress(address);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  const int rc = getaddrinfo(host.c_str(), port.c_str(), &hints, &out.info);
  if (rc != 0) {
    throw TransportError(TransportErrorKind::kConnectFailed,
                         "cannot resolve " + address + ": " + gai_strerror(rc));
  }
}

std::string ErrnoText(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

void SetTimeouts(int fd, const TransportOptions& options) {
  const auto ms = options.receive_timeout.count();
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(ms / 1000);
  tv.tv_usec = static_cast<suseconds_t>((ms % 1000) * 1000);
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

class TcpEndpoint final : public Endpoint {
 public:
  TcpEndpoint(int fd, TransportOptions options) : fd_(fd), options_(options) {
    SetTimeouts(fd_, options_);
  }
  ~TcpEndpoint() override { Close(); }

  void Close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 protected:
  void SendFrame(std::vector<std::uint8_t> frame) override {
    std::size_t sent = 0;
    int failures = 0;
    while (sent < frame.size()) {
      RequireOpen();
      const ssize_t n =
          ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n > 0) {
        sent += static_cast<std::size_t>(n);
        failures = 0;
        continue;
      }
      if (n < 0 && (errno == EINTR || errno == EAGAIN || errno == EWOULDBLOCK)) {
        if (++failures > options_.send_retries) {
          throw TransportError(TransportErrorKind::kRetriesExhausted,
                               "send failed after " +
                                   std::to_string(options_.send_retries) +
                                   " retries");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10 * failures));
        continue;
      }
      throw TransportError(TransportErrorKind::kIo, ErrnoText("send"));
    }
  }

  std::vector<std::uint8_t> ReceiveFrame() override {
    std::vector<std::uint8_t> frame(kFrameHeaderSize);
    ReadExactly(frame.data(), kFrameHeaderSize);
    const std::uint32_t len = PeekPayloadLength(frame);
    frame.resize(kFrameHeaderSize + len + kFrameTrailerSize);
    ReadExactly(frame.data() + kFrameHeaderSize, len + kFrameTrailerSize);
    return frame;
  }

 private:
  void RequireOpen() const {
    if (fd_ < 0) throw TransportError(TransportErrorKind::kClosed, "socket closed");
  }

  void ReadExactly(std::uint8_t* out, std::size_t size) {
    std::size_t got = 0;
    while (got < size) {
      RequireOpen();
      const ssize_t n = ::recv(fd_, out + got, size - got, 0);
      if (n > 0) {
        got += static_cast<std::size_t>(n);
      } else if (n == 0) {
        throw TransportError(TransportErrorKind::kClosed, "connection closed by peer");
      } else if (errno == EINTR) {
        continue;
      } else if (errno == EAGAIN || errno == EWOULDBLOCK) {
        throw TransportError(TransportErrorKind::kTimeout, "receive timed out");
      } else {
        throw TransportError(TransportErrorKind::kIo, ErrnoText("recv"));
      }
    }
  }

  int fd_;
  TransportOptions options_;
};

}  // namespace

TcpListener TcpListener::Bind(const std::string& address) {
  AddrInfo ai;
  Resolve(address, /*passive=*/true, ai);
  const int fd = ::socket(ai.info->ai_family, ai.info->ai_socktype, 0);
  if (fd < 0) throw TransportError(TransportErrorKind::kIo, ErrnoText("socket"));
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, ai.info->ai_addr, ai.info->ai_addrlen) != 0 ||
      ::listen(fd, 4) != 0) {
    const std::string msg = ErrnoText("bind/listen");
    ::close(fd);
    throw TransportError(TransportErrorKind::kIo, msg + " (" + address + ")");
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  return TcpListener(fd, ntohs(bound.sin_port));
}

TcpListener::TcpListener(TcpListener&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}

TcpListener& TcpListener::operator=(TcpListener&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
    port_ = other.port_;
  }
  return *this;
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Endpoint> TcpListener::Accept(TransportOptions options) {
  pollfd pfd{fd_, POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(options.connect_timeout.count()));
  if (rc == 0) throw TransportError(TransportErrorKind::kTimeout, "accept timed out");
  if (rc < 0) throw TransportError(TransportErrorKind::kIo, ErrnoText("poll"));
  const int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) throw TransportError(TransportErrorKind::kIo, ErrnoText("accept"));
  return std::make_unique<TcpEndpoint>(client, options);
}

std::unique_ptr<Endpoint> TcpListen(const std::string& address,
                                    TransportOptions options) {
  return TcpListener::Bind(address).Accept(options);
}

std::unique_ptr<Endpoint> TcpDial(const std::string& address,
                                  TransportOptions options) {
  AddrInfo ai;
  Resolve(address, /*passive=*/false, ai);
  const auto deadline = Clock::now() + options.connect_timeout;
  std::string last_error = "timed out";
  while (true) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - Clock::now());
    if (remaining.count() <= 0) break;
    const int fd = ::socket(ai.info->ai_family, ai.info->ai_socktype, 0);
    if (fd < 0) throw TransportError(TransportErrorKind::kIo, ErrnoText("socket"));
    const int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai.info->ai_addr, ai.info->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      int err = 0;
      socklen_t len = sizeof(err);
      if (rc > 0) {
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        rc = -1;
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      fcntl(fd, F_SETFL, flags);
      return std::make_unique<TcpEndpoint>(fd, options);
    }
    last_error = std::strerror(errno);
    ::close(fd);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  throw TransportError(TransportErrorKind::kConnectFailed,
                       "cannot connect to " + address + ": " + last_error);
}

}  // namespace isonet
