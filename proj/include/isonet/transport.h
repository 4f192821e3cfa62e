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

// Messages exchanged between the source node and the target node, their
// binary framing, and two endpoint implementations (in-process and TCP).
//
// Frame layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "ISON"
//   4       2     protocol version
//   6       1     message type
//   7       4     payload length L
//   11      L     payload
//   11+L    4     CRC-32 of the payload
//
// See docs/protocol.md for the payload of each message type.

#ifndef ISONET_TRANSPORT_H_
#define ISONET_TRANSPORT_H_

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace isonet {

inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::array<std::uint8_t, 4> kFrameMagic = {'I', 'S', 'O', 'N'};
inline constexpr std::size_t kFrameHeaderSize = 11;
inline constexpr std::size_t kFrameTrailerSize = 4;
inline constexpr std::uint32_t kMaxPayloadSize = 1u << 30;

enum class MessageType : std::uint8_t {
  kInitModel = 1,
  kPredictedClass = 2,
  kLocalParams = 3,
  kGlobalParams = 4,
  kTerminate = 5,
};
inline constexpr std::size_t kNumMessageTypes = 6;  // index 0 unused

std::string_view MessageTypeName(MessageType type);

struct InitModel {
  std::vector<float> params;
  friend bool operator==(const InitModel&, const InitModel&) = default;
};
struct PredictedClass {
  std::uint32_t class_index = 0;
  friend bool operator==(const PredictedClass&, const PredictedClass&) = default;
};
struct LocalParams {
  std::uint32_t round = 0;
  std::vector<float> params;
  friend bool operator==(const LocalParams&, const LocalParams&) = default;
};
struct GlobalParams {
  std::uint32_t round = 0;
  bool source_converged = false;
  std::vector<float> params;
  friend bool operator==(const GlobalParams&, const GlobalParams&) = default;
};
struct Terminate {
  std::uint32_t final_round = 0;
  friend bool operator==(const Terminate&, const Terminate&) = default;
};

struct RoundMessage {
  using Body =
      std::variant<InitModel, PredictedClass, LocalParams, GlobalParams, Terminate>;
  Body body;
  std::uint16_t protocol_version = kProtocolVersion;

  MessageType type() const;
  friend bool operator==(const RoundMessage&, const RoundMessage&) = default;
};

enum class DecodeErrorKind {
  kTruncated,
  kBadMagic,
  kVersionMismatch,
  kChecksumMismatch,
  kUnknownType,
  kMalformedPayload,
};

std::string_view DecodeErrorKindName(DecodeErrorKind kind);

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  DecodeErrorKind kind() const { return kind_; }

 private:
  DecodeErrorKind kind_;
};

enum class TransportErrorKind {
  kClosed,
  kTimeout,
  kConnectFailed,
  kRetriesExhausted,
  kIo,
};

class TransportError : public std::runtime_error {
 public:
  TransportError(TransportErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  TransportErrorKind kind() const { return kind_; }

 private:
  TransportErrorKind kind_;
};

// A well-formed message arrived that the protocol state does not allow.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> Encode(const RoundMessage& message);
// `frame` must hold exactly one frame.
RoundMessage Decode(std::span<const std::uint8_t> frame);

// Payload length announced by a frame header; validates magic and size.
std::uint32_t PeekPayloadLength(std::span<const std::uint8_t> header);

struct MessageStats {
  std::array<std::uint64_t, kNumMessageTypes> count{};
  std::array<std::uint64_t, kNumMessageTypes> payload_bytes{};

  std::uint64_t of(MessageType t) const {
    return count[static_cast<std::size_t>(t)];
  }
  std::uint64_t bytes_of(MessageType t) const {
    return payload_bytes[static_cast<std::size_t>(t)];
  }
  std::uint64_t total() const;
  void Add(MessageType t, std::size_t payload);
  MessageStats& operator+=(const MessageStats& other);
};

struct TransportOptions {
  std::chrono::milliseconds receive_timeout{30000};
  std::chrono::milliseconds connect_timeout{30000};
  int send_retries = 3;
};

// One side of a half-duplex message session. Owned by one protocol instance
// at a time; movable between threads but never shared concurrently.
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  void Send(const RoundMessage& message);
  RoundMessage Receive();

  // Receives and unwraps the expected message type; anything else is a
  // ProtocolError.
  template <typename T>
  T Expect() {
    RoundMessage m = Receive();
    if (auto* body = std::get_if<T>(&m.body)) return std::move(*body);
    throw ProtocolError("unexpected " + std::string(MessageTypeName(m.type())) +
                        " message");
  }

  virtual void Close() = 0;

  const MessageStats& sent() const { return sent_; }
  const MessageStats& received() const { return received_; }

 protected:
  virtual void SendFrame(std::vector<std::uint8_t> frame) = 0;
  virtual std::vector<std::uint8_t> ReceiveFrame() = 0;

 private:
  MessageStats sent_;
  MessageStats received_;
};

// Ordered, lossless, blocking in-process pair. Closing (or destroying) one
// end makes receives on the other end fail once its queue drains.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> ChannelPair(
    TransportOptions options = {});

class TcpListener {
 public:
  // `address` is "host:port"; port 0 picks an ephemeral port.
  static TcpListener Bind(const std::string& address);

  TcpListener(TcpListener&& other) noexcept;
  TcpListener& operator=(TcpListener&& other) noexcept;
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Endpoint> Accept(TransportOptions options = {});

 private:
  TcpListener(int fd, std::uint16_t port) : fd_(fd), port_(port) {}
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Binds, then waits for exactly one peer.
std::unique_ptr<Endpoint> TcpListen(const std::string& address,
                                    TransportOptions options = {});

// Retries refused connections until options.connect_timeout elapses.
std::unique_ptr<Endpoint> TcpDial(const std::string& address,
                                  TransportOptions options = {});

}  // namespace isonet

#endif  // ISONET_TRANSPORT_H_
