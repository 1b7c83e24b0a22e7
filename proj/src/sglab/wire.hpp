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
#pragma once

// Byte framing for SplitMessage (see docs/wire_format.md):
//
//   u32 BE  length of everything after this field
//   u8      message kind
//   u32 BE  batch id
//   u8      rank, then rank x u32 BE dims
//   f64 LE  payload values, row-major
//   [u32 BE label count, count x u32 BE labels]   only when labels are present
//
// plus a socket transport that runs the same state machines over a byte
// stream.

#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "sglab/message.hpp"
#include "sglab/protocol.hpp"

namespace sglab {

inline constexpr std::size_t kFrameLengthBytes = 4;
inline constexpr std::size_t kMaxFrameBytes = std::size_t{1} << 30;

std::vector<std::uint8_t> encode_frame(const SplitMessage& message);

// `frame` includes the length prefix and must be exactly one frame.
SplitMessage decode_frame(std::span<const std::uint8_t> frame);

// Size of the label block a message would occupy on the wire (0 if none).
std::size_t label_block_bytes(const SplitMessage& message);

// Reassembles frames from arbitrarily split chunks of a byte stream.
class FrameAssembler {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<SplitMessage> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::vector<std::uint8_t> buffer_;
};

// Blocking helpers over a stream file descriptor. read_frame returns nullopt
// on a clean EOF at a frame boundary and throws IoError on a mid-frame EOF.
void write_all(int fd, std::span<const std::uint8_t> bytes);
std::optional<SplitMessage> read_frame(int fd, FrameAssembler& assembler);

// Client end of a stream connection.
class StreamLink : public ServerLink {
 public:
  explicit StreamLink(int fd) : fd_(fd) {}
  SplitMessage exchange(const SplitMessage& message) override;

 private:
  int fd_;
  FrameAssembler assembler_;
};

// Serves requests from `fd` until the peer closes. Returns the number of
// requests handled. Errors raised by the server are propagated.
std::size_t serve_stream(int fd, ServerBehavior& server);

// A connected socket pair with `server` running on a background thread.
class LocalStreamSession {
 public:
  explicit LocalStreamSession(ServerBehavior& server);
  ~LocalStreamSession();
  LocalStreamSession(const LocalStreamSession&) = delete;
  LocalStreamSession& operator=(const LocalStreamSession&) = delete;

  ServerLink& link() { return *link_; }
  // Closes the client end and waits for the server thread.
  std::size_t finish();

 private:
  int client_fd_ = -1;
  int server_fd_ = -1;
  std::optional<StreamLink> link_;
  std::thread thread_;
  std::size_t served_ = 0;
  std::exception_ptr server_error_;
  bool finished_ = false;
};

}  // namespace sglab
