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

// Split-learning client and server state machines.
//
// Label sharing (one round trip per batch):
//   client -> server  ForwardWithLabels   f(x), y
//   server -> client  BackwardGradients   dL/df(x)
//
// Private labels (two round trips; the client keeps a dense head):
//   client -> server  ForwardActivations  f(x)
//   server -> client  ServerOutput        h(f(x))
//   client -> server  ClientLossGradients dL/dh
//   server -> client  BackwardGradients   dL/df(x)

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sglab/data.hpp"
#include "sglab/detector.hpp"
#include "sglab/message.hpp"
#include "sglab/nn.hpp"
#include "sglab/tensor.hpp"

namespace sglab {

// Server role. Implementations own all server-side state.
class ServerBehavior {
 public:
  virtual ~ServerBehavior() = default;

  // Handles ForwardWithLabels or ForwardActivations. Returns BackwardGradients
  // shaped like the received payload (label sharing) or ServerOutput (private
  // labels).
  virtual SplitMessage on_forward(const SplitMessage& message) = 0;

  // Private labels only: continues the backward pass from the client head's
  // gradient and returns BackwardGradients for the split boundary.
  virtual SplitMessage on_client_loss_gradients(const SplitMessage& message) = 0;
};

// Routes a client message to the matching ServerBehavior entry point.
SplitMessage dispatch(ServerBehavior& server, const SplitMessage& message);

// Client-side view of the server: one request, one reply.
class ServerLink {
 public:
  virtual ~ServerLink() = default;
  virtual SplitMessage exchange(const SplitMessage& message) = 0;
};

class InProcessLink : public ServerLink {
 public:
  explicit InProcessLink(ServerBehavior& server) : server_(server) {}
  SplitMessage exchange(const SplitMessage& message) override {
    return dispatch(server_, message);
  }

 private:
  ServerBehavior& server_;
};

enum class Direction { kClientToServer, kServerToClient };

struct TraceEvent {
  Direction direction;
  MessageKind kind;
  std::uint32_t batch_id;
  Shape payload_shape;
  bool has_labels;
  std::size_t wire_bytes;   // encoded frame size
  std::size_t label_bytes;  // bytes of the label block inside the frame
};

// Decorator that records every message crossing the link.
class TracingLink : public ServerLink {
 public:
  explicit TracingLink(ServerLink& inner) : inner_(inner) {}
  SplitMessage exchange(const SplitMessage& message) override;

  const std::vector<TraceEvent>& events() const { return events_; }
  void clear() { events_.clear(); }

 private:
  ServerLink& inner_;
  std::vector<TraceEvent> events_;
};

// Checks that events form whole per-batch exchanges in the order required by
// the topology, with matching batch ids, and that no label bytes appear in
// private-labels mode. Returns a description of the first violation.
std::optional<std::string> verify_trace(std::span<const TraceEvent> events, Topology topology);

// Honest server: trains its part of the network on the received task.
class HonestServer : public ServerBehavior {
 public:
  HonestServer(Model model, OptimizerConfig optimizer, Topology topology);

  SplitMessage on_forward(const SplitMessage& message) override;
  SplitMessage on_client_loss_gradients(const SplitMessage& message) override;

  const Model& model() const { return model_; }
  Topology topology() const { return topology_; }
  double last_loss() const { return last_loss_; }

 private:
  Model model_;
  Optimizer optimizer_;
  Topology topology_;
  double last_loss_ = 0.0;
  std::optional<std::uint32_t> pending_batch_;
  Tape pending_tape_;
};

// Client-side trainable state. `head` exists only in private-labels mode.
struct ClientState {
  Model model;
  Optimizer optimizer;
  std::optional<Model> head;
  std::optional<Optimizer> head_optimizer;

  friend bool operator==(const ClientState&, const ClientState&) = default;
};

using GradientHook =
    std::function<void(std::span<const double> first_layer_gradient, std::uint32_t batch_id,
                       bool fake)>;

struct StepOutcome {
  std::vector<double> first_layer_gradient;
  bool updated = false;
  Tensor activations;  // client output for this batch
  // Private labels: head loss and accuracy against the labels the client used.
  std::optional<double> loss;
  std::optional<double> accuracy;
};

// One client training step. `labels` are the labels actually used for the
// batch (already randomized for a fake batch). Client-side parameter updates
// are discarded when `fake` is true. Throws ProtocolError if the server's
// reply is malformed.
StepOutcome client_train_step(ClientState& client, const Tensor& inputs,
                              std::span<const Label> labels, Topology topology,
                              ServerLink& server, std::uint32_t batch_id, bool fake,
                              const GradientHook& hook = {});

// Softmax-regression probe trained on client activations; its accuracy is a
// lower-bound estimate of the full model's accuracy in label-sharing mode.
class LinearProbe {
 public:
  LinearProbe(std::size_t width, int num_classes, double learning_rate, Rng& rng);
  // Returns the probe's accuracy on the batch, then takes one training step.
  double observe(const Tensor& activations, std::span<const Label> labels);

 private:
  Model model_;
  Optimizer optimizer_;
};

// Mean of the most recent `capacity` values.
class RollingMean {
 public:
  explicit RollingMean(std::size_t capacity = 20) : capacity_(capacity) {}
  void add(double v);
  std::optional<double> value() const;

 private:
  std::size_t capacity_;
  std::vector<double> values_;
  std::size_t next_ = 0;
};

struct ClientSession {
  ClientState state;
  Topology topology = Topology::kLabelSharing;
  BatchPlan plan;
  int num_classes = 10;
  SplitGuardDetector detector;
  Rng label_rng;
  std::optional<LinearProbe> probe;
  RollingMean accuracy;
  std::uint64_t next_batch = 0;  // global batch index across epochs
  std::uint64_t epochs_done = 0;
};

struct BatchContext {
  std::uint64_t batch_index;
  bool fake;
  const Tensor& inputs;
  const StepOutcome& outcome;
};

using BatchCallback = std::function<void(const BatchContext&)>;

struct EpochStats {
  std::size_t batches = 0;
  std::size_t fake_batches = 0;
};

// Runs one pass over `data` following the client training procedure:
// after the start index a batch is fake with probability P_F, its labels are
// randomized, its first-layer gradient goes to the detector as fake, and its
// client-side update is discarded. Regular gradients are also fed to the
// detector once the start index is reached.
EpochStats train_epoch(ClientSession& session, const Dataset& data, ServerLink& server,
                       const BatchCallback& on_batch = {});

// Multi-client training. Each epoch, clients take turns training on their own
// shard; before a turn the client's trainable state is overwritten with that
// of the client that trained last. Every client runs its own detector.
std::vector<DetectionReport> run_round_robin(std::vector<ClientSession>& clients,
                                             const std::vector<Dataset>& shards,
                                             ServerLink& server, std::size_t epochs,
                                             const BatchCallback& on_batch = {});

}  // namespace sglab
