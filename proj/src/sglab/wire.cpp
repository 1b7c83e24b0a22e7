/*
 * Copyright 2026 The SplitGuard Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "sglab/wire.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

#include "sglab/error.hpp"

namespace sglab {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_f64_le(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(std::string("frame truncated while reading ") + what, pos_);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    const std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) |
                            (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                            (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
    pos_ += 4;
    return v;
  }
  double f64_le(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

bool valid_kind(std::uint8_t k) { return k >= 1 && k <= 5; }

}  // namespace

std::size_t label_block_bytes(const SplitMessage& message) {
  return message.labels ? 4 + 4 * message.labels->size() : 0;
}

std::vector<std::uint8_t> encode_frame(const SplitMessage& message) {
  const auto& shape = message.payload.shape();
  if (shape.size() > 255) throw InvalidInput("payload rank exceeds 255");
  std::vector<std::uint8_t> out;
  out.reserve(kFrameLengthBytes + 1 + 4 + 1 + 4 * shape.size() + 8 * message.payload.size() +
              label_block_bytes(message));
  put_u32(out, 0);  // patched below
  out.push_back(static_cast<std::uint8_t>(message.kind));
  put_u32(out, message.batch_id);
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) {
    if (d > 0xffffffffu) throw InvalidInput("payload dimension exceeds 32 bits");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : message.payload.values()) put_f64_le(out, v);
  if (message.labels) {
    put_u32(out, static_cast<std::uint32_t>(message.labels->size()));
    for (Label y : *message.labels) put_u32(out, static_cast<std::uint32_t>(y));
  }
  const auto body = static_cast<std::uint32_t>(out.size() - kFrameLengthBytes);
  out[0] = static_cast<std::uint8_t>(body >> 24);
  out[1] = static_cast<std::uint8_t>(body >> 16);
  out[2] = static_cast<std::uint8_t>(body >> 8);
  out[3] = static_cast<std::uint8_t>(body);
  return out;
}

SplitMessage decode_frame(std::span<const std::uint8_t> frame) {
  Reader r(frame);
  const std::uint32_t length = r.u32("length");
  if (length != r.remaining()) {
    throw FormatError("frame length field " + std::to_string(length) + " does not match " +
                          std::to_string(r.remaining()) + " body bytes",
                      0);
  }
  SplitMessage m;
  const std::size_t kind_at = r.pos();
  const std::uint8_t kind = r.u8("kind");
  if (!valid_kind(kind)) throw FormatError("unknown message kind " + std::to_string(kind), kind_at);
  m.kind = static_cast<MessageKind>(kind);
  m.batch_id = r.u32("batch id");
  const std::uint8_t rank = r.u8("rank");
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = r.u32("dimension");
    count *= d;
    // Bounded by the bytes left, so the product cannot overflow.
    if (count > r.remaining() / 8) {
      throw FormatError("payload dimensions exceed the frame", r.pos() - 4);
    }
  }
  r.need(count * 8, "payload");
  std::vector<double> values(count);
  for (double& v : values) v = r.f64_le("payload");
  m.payload = Tensor(std::move(shape), std::move(values));
  if (r.remaining() > 0) {
    const std::uint32_t n = r.u32("label count");
    r.need(std::size_t{n} * 4, "labels");
    std::vector<Label> labels(n);
    for (auto& y : labels) y = static_cast<Label>(r.u32("label"));
    m.labels = std::move(labels);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after label block", r.pos());
  return m;
}

void FrameAssembler::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<SplitMessage> FrameAssembler::next() {
  if (buffer_.size() < kFrameLengthBytes) return std::nullopt;
  const std::size_t length = (std::size_t{buffer_[0]} << 24) | (std::size_t{buffer_[1]} << 16) |
                             (std::size_t{buffer_[2]} << 8) | std::size_t{buffer_[3]};
  if (length > kMaxFrameBytes) throw FormatError("frame length exceeds limit", 0);
  const std::size_t total = kFrameLengthBytes + length;
  if (buffer_.size() < total) return std::nullopt;
  SplitMessage m = decode_frame(std::span<const std::uint8_t>(buffer_.data(), total));
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  return m;
}

void write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<SplitMessage> read_frame(int fd, FrameAssembler& assembler) {
  std::array<std::uint8_t, 4096> chunk{};
  for (;;) {
    if (auto m = assembler.next()) return m;
    const ssize_t n = ::recv(fd, chunk.data(), chunk.size(), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("recv failed: ") + std::strerror(errno));
    }
    if (n == 0) {
      if (assembler.buffered() == 0) return std::nullopt;
      throw IoError("connection closed in the middle of a frame");
    }
    assembler.feed(std::span<const std::uint8_t>(chunk.data(), static_cast<std::size_t>(n)));
  }
}

SplitMessage StreamLink::exchange(const SplitMessage& message) {
  write_all(fd_, encode_frame(message));
  auto reply = read_frame(fd_, assembler_);
  if (!reply) throw ProtocolError("server closed the connection without replying");
  return *std::move(reply);
}

std::size_t serve_stream(int fd, ServerBehavior& server) {
  FrameAssembler assembler;
  std::size_t served = 0;
  while (auto request = read_frame(fd, assembler)) {
    write_all(fd, encode_frame(dispatch(server, *request)));
    ++served;
  }
  return served;
}

LocalStreamSession::LocalStreamSession(ServerBehavior& server) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    throw IoError(std::string("socketpair failed: ") + std::strerror(errno));
  }
  client_fd_ = fds[0];
  server_fd_ = fds[1];
  link_.emplace(client_fd_);
  thread_ = std::thread([this, &server] {
    try {
      served_ = serve_stream(server_fd_, server);
    } catch (...) {
      server_error_ = std::current_exception();
    }
    ::shutdown(server_fd_, SHUT_RDWR);
  });
}

std::size_t LocalStreamSession::finish() {
  if (!finished_) {
    finished_ = true;
    ::shutdown(client_fd_, SHUT_WR);
    if (thread_.joinable()) thread_.join();
    ::close(client_fd_);
    ::close(server_fd_);
    if (server_error_) std::rethrow_exception(server_error_);
  }
  return served_;
}

LocalStreamSession::~LocalStreamSession() {
  try {
    finish();
  } catch (...) {
  }
}

}  // namespace sglab
