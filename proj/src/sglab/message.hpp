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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sglab/nn.hpp"
#include "sglab/tensor.hpp"

namespace sglab {

enum class MessageKind : std::uint8_t {
  kForwardActivations = 1,
  kForwardWithLabels = 2,
  kBackwardGradients = 3,
  kClientLossGradients = 4,
  kServerOutput = 5,
};

std::string to_string(MessageKind k);

enum class Topology { kLabelSharing, kPrivateLabels };

std::string to_string(Topology t);
Topology topology_from_string(const std::string& s);

struct SplitMessage {
  MessageKind kind = MessageKind::kForwardActivations;
  std::uint32_t batch_id = 0;
  Tensor payload;
  std::optional<std::vector<Label>> labels;

  friend bool operator==(const SplitMessage&, const SplitMessage&) = default;
};

// ForwardWithLabels must carry labels (one per payload row); every other kind
// must not. Throws ProtocolError.
void check_message(const SplitMessage& m);

}  // namespace sglab
