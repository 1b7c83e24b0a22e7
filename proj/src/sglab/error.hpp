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

#include <stdexcept>
#include <string>

namespace sglab {

// Error categories. These map one-to-one onto the status codes of the C API.
enum class ErrorCode {
  kInvalidInput = 1,
  kFormat = 2,
  kProtocol = 3,
  kContract = 4,
  kState = 5,
  kUndefined = 6,
  kIo = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Rejected caller input: shape mismatch, out-of-range label, bad parameter.
struct InvalidInput : Error {
  explicit InvalidInput(const std::string& w) : Error(ErrorCode::kInvalidInput, w) {}
};

// Malformed file or frame. `offset` is the byte position of the problem.
struct FormatError : Error {
  FormatError(const std::string& w, std::size_t offset)
      : Error(ErrorCode::kFormat, w + " (at byte offset " + std::to_string(offset) + ")"),
        offset(offset) {}
  std::size_t offset;
};

struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error(ErrorCode::kProtocol, w) {}
};

// Caller broke an API contract (e.g. a stale forward tape).
struct ContractViolation : Error {
  explicit ContractViolation(const std::string& w) : Error(ErrorCode::kContract, w) {}
};

struct StateError : Error {
  explicit StateError(const std::string& w) : Error(ErrorCode::kState, w) {}
};

// A statistic that is mathematically undefined for the current inputs
// (empty set, zero-length sum vector).
struct UndefinedStatistic : Error {
  explicit UndefinedStatistic(const std::string& w) : Error(ErrorCode::kUndefined, w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCode::kIo, w) {}
};

}  // namespace sglab
