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

// Small client/server setups shared by the protocol, wire and acceptance tests.

#include "sglab/data.hpp"
#include "sglab/protocol.hpp"

namespace sglab::testing {

struct SmallSetup {
  std::size_t inputs = 8;
  std::size_t boundary = 6;
  int classes = 4;
  std::size_t batch_size = 16;
  double fake_probability = 0.1;
  double fake_label_share = 1.0;
  std::size_t start_index = 20;
};

inline ClientSession make_session(Topology topology, std::uint64_t seed,
                                  const SmallSetup& s = {}) {
  Rng rng(seed);
  ClientState state;
  state.model = make_mlp({s.inputs, s.boundary}, Activation::kReLU, Activation::kReLU, rng);
  state.optimizer = Optimizer({OptimizerKind::kAdam, 1e-3}, state.model);
  if (topology == Topology::kPrivateLabels) {
    state.head = make_mlp({s.boundary, static_cast<std::size_t>(s.classes)}, Activation::kIdentity,
                          Activation::kIdentity, rng);
    state.head_optimizer = Optimizer({OptimizerKind::kAdam, 1e-3}, *state.head);
  }
  BatchPlan plan;
  plan.batch_size = s.batch_size;
  plan.fake_probability = s.fake_probability;
  plan.fake_label_share = s.fake_label_share;
  plan.start_index = s.start_index;
  plan.seed = seed;
  DetectorConfig dc;
  dc.start_index = s.start_index;
  dc.fake_share = s.fake_label_share;
  dc.num_classes = s.classes;
  return ClientSession{std::move(state),
                       topology,
                       plan,
                       s.classes,
                       SplitGuardDetector(dc, seed + 1),
                       Rng(seed + 2),
                       std::nullopt,
                       RollingMean(20),
                       0,
                       0};
}

// Server half: label sharing ends in logits, private labels in a hidden
// layer that feeds the client head.
inline HonestServer make_server(Topology topology, std::uint64_t seed, const SmallSetup& s = {}) {
  Rng rng(seed + 100);
  const std::size_t out =
      topology == Topology::kLabelSharing ? static_cast<std::size_t>(s.classes) : s.boundary;
  const Activation last =
      topology == Topology::kLabelSharing ? Activation::kIdentity : Activation::kReLU;
  return HonestServer(make_mlp({s.boundary, 10, out}, Activation::kReLU, last, rng),
                      {OptimizerKind::kAdam, 1e-3}, topology);
}

inline Dataset small_data(std::size_t per_class, std::uint64_t seed, const SmallSetup& s = {}) {
  return synthesize({s.classes, s.inputs, per_class, 0.2, seed});
}

}  // namespace sglab::testing
