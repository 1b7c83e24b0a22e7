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

// Feature-space hijacking server.
//
// Setup: train an autoencoder (encoder, decoder) on public data X_pub.
// Attack, once per client batch:
//   distinguisher D minimizes  L_D = log(1 - D(enc(X_pub))) + log(D(f(X_priv)))
//   client f is sent the gradient of  L_f = log(1 - D(f(X_priv)))
// so that f's output space drifts onto the encoder's and the decoder can
// invert it. Labels never enter either loss.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sglab/data.hpp"
#include "sglab/nn.hpp"
#include "sglab/protocol.hpp"

namespace sglab {

inline constexpr double kProbabilityClamp = 1e-7;

// kPrinted:        L_D = log(1 - D(enc)) + log(D(f)),   L_f = log(1 - D(f))
// kLogLikelihood:  L_D = -log D(enc) - log(1 - D(f)),    L_f = -log D(f)
// Both have the same fixed points. The printed pair saturates: each player's
// gradient vanishes while it is losing, and D collapses to "1 everywhere".
enum class HijackLoss { kPrinted, kLogLikelihood };
std::string to_string(HijackLoss l);
HijackLoss hijack_loss_from_string(const std::string& s);

struct FshaConfig {
  // Encoder widths mirror the client model: {input, ..., boundary}.
  std::vector<std::size_t> encoder_widths = {64, 64};
  Activation encoder_activation = Activation::kReLU;
  std::size_t distinguisher_hidden = 32;
  Activation distinguisher_activation = Activation::kReLU;
  HijackLoss loss = HijackLoss::kLogLikelihood;
  // Starting weights for the encoder. When the server also hands these to the
  // client as its initialization, the hijack starts near the encoder.
  std::optional<Model> initial_encoder;
  // Width of the dummy server output sent to a private-labels client head.
  std::size_t facade_output = 64;
  OptimizerConfig autoencoder_optimizer{OptimizerKind::kAdam, 1e-3};
  OptimizerConfig distinguisher_optimizer{OptimizerKind::kAdam, 3e-3};
  std::size_t setup_batch_size = 64;
  std::size_t attack_batch_size = 64;
  std::uint64_t seed = 0;
};

struct AttackStepResult {
  Tensor client_gradient;  // d(L_f)/d(received activations)
  double hijack_loss = 0.0;         // L_f before the distinguisher update
  double distinguisher_loss = 0.0;  // L_D before the distinguisher update
};

// Binary log-loss terms evaluated at probabilities clamped to
// [kProbabilityClamp, 1 - kProbabilityClamp].
double clamped_log(double p);
double clamped_log1m(double p);

class FshaServer : public ServerBehavior {
 public:
  FshaServer(FshaConfig config, Dataset public_data, Topology topology);

  // Trains the autoencoder for `epochs` passes over X_pub and returns the
  // final mean squared reconstruction error over X_pub.
  double setup_phase(std::size_t epochs);
  bool setup_done() const { return setup_done_; }

  // One hijacking iteration against `activations`. Throws StateError before setup.
  AttackStepResult attack_step(const Tensor& activations, const Tensor& public_batch);

  SplitMessage on_forward(const SplitMessage& message) override;
  SplitMessage on_client_loss_gradients(const SplitMessage& message) override;

  // decoder(activations): the attacker's estimate of the private inputs.
  Tensor reconstruct(const Tensor& activations) const;
  double reconstruction_error(const Tensor& inputs) const;

  const Model& encoder() const { return encoder_; }
  const Model& decoder() const { return decoder_; }
  const Model& distinguisher() const { return distinguisher_; }
  void set_distinguisher(Model d);

  // Evasion hook: when `use_surrogate` returns true for a forward message, that
  // exchange is delegated to `surrogate` instead of the attack. No switching
  // strategy ships with the library.
  void set_surrogate(ServerBehavior* surrogate,
                     std::function<bool(const SplitMessage&)> use_surrogate);

 private:
  Tensor sample_public_batch();

  FshaConfig config_;
  Dataset public_;
  Topology topology_;
  Rng rng_;
  Model encoder_;
  Model decoder_;
  Model distinguisher_;
  Model facade_;
  Optimizer encoder_optimizer_;
  Optimizer decoder_optimizer_;
  Optimizer distinguisher_optimizer_;
  bool setup_done_ = false;
  std::optional<std::uint32_t> pending_batch_;
  Tensor pending_gradient_;
  bool pending_from_surrogate_ = false;
  ServerBehavior* surrogate_ = nullptr;
  std::function<bool(const SplitMessage&)> use_surrogate_;
};

}  // namespace sglab
