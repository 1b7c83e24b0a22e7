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
#include "sglab/protocol.hpp"

#include <algorithm>
#include <numeric>

#include "sglab/error.hpp"
#include "sglab/wire.hpp"

namespace sglab {

std::string to_string(MessageKind k) {
  switch (k) {
    case MessageKind::kForwardActivations:
      return "ForwardActivations";
    case MessageKind::kForwardWithLabels:
      return "ForwardWithLabels";
    case MessageKind::kBackwardGradients:
      return "BackwardGradients";
    case MessageKind::kClientLossGradients:
      return "ClientLossGradients";
    case MessageKind::kServerOutput:
      return "ServerOutput";
  }
  return "Unknown";
}

std::string to_string(Topology t) {
  return t == Topology::kLabelSharing ? "label-sharing" : "private-labels";
}

Topology topology_from_string(const std::string& s) {
  if (s == "label-sharing") return Topology::kLabelSharing;
  if (s == "private-labels") return Topology::kPrivateLabels;
  throw InvalidInput("unknown topology '" + s + "' (expected label-sharing or private-labels)");
}

void check_message(const SplitMessage& m) {
  if (m.payload.rank() != 2) throw ProtocolError(to_string(m.kind) + " payload must be rank 2");
  if (m.kind == MessageKind::kForwardWithLabels) {
    if (!m.labels) throw ProtocolError("ForwardWithLabels message carries no labels");
    if (m.labels->size() != m.payload.rows()) {
      throw ProtocolError("ForwardWithLabels label count does not match the batch");
    }
  } else if (m.labels) {
    throw ProtocolError(to_string(m.kind) + " message must not carry labels");
  }
}

SplitMessage dispatch(ServerBehavior& server, const SplitMessage& message) {
  check_message(message);
  switch (message.kind) {
    case MessageKind::kForwardActivations:
    case MessageKind::kForwardWithLabels:
      return server.on_forward(message);
    case MessageKind::kClientLossGradients:
      return server.on_client_loss_gradients(message);
    default:
      throw ProtocolError("server cannot accept a " + to_string(message.kind) + " message");
  }
}

namespace {

TraceEvent trace_event(Direction dir, const SplitMessage& m) {
  return TraceEvent{dir,
                    m.kind,
                    m.batch_id,
                    m.payload.shape(),
                    m.labels.has_value(),
                    encode_frame(m).size(),
                    label_block_bytes(m)};
}

}  // namespace

SplitMessage TracingLink::exchange(const SplitMessage& message) {
  events_.push_back(trace_event(Direction::kClientToServer, message));
  SplitMessage reply = inner_.exchange(message);
  events_.push_back(trace_event(Direction::kServerToClient, reply));
  return reply;
}

std::optional<std::string> verify_trace(std::span<const TraceEvent> events, Topology topology) {
  struct Expected {
    Direction dir;
    MessageKind kind;
  };
  const std::vector<Expected> pattern =
      topology == Topology::kLabelSharing
          ? std::vector<Expected>{{Direction::kClientToServer, MessageKind::kForwardWithLabels},
                                  {Direction::kServerToClient, MessageKind::kBackwardGradients}}
          : std::vector<Expected>{
                {Direction::kClientToServer, MessageKind::kForwardActivations},
                {Direction::kServerToClient, MessageKind::kServerOutput},
                {Direction::kClientToServer, MessageKind::kClientLossGradients},
                {Direction::kServerToClient, MessageKind::kBackwardGradients}};
  if (events.size() % pattern.size() != 0) {
    return "trace has " + std::to_string(events.size()) + " events, not a whole number of " +
           std::to_string(pattern.size()) + "-message exchanges";
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    const auto& want = pattern[i % pattern.size()];
    const std::string where = "event " + std::to_string(i) + " (batch " +
                              std::to_string(e.batch_id) + ")";
    if (e.direction != want.dir || e.kind != want.kind) {
      return where + ": got " + to_string(e.kind) + ", expected " + to_string(want.kind);
    }
    if (e.batch_id != events[i - i % pattern.size()].batch_id) {
      return where + ": batch id changed inside one exchange";
    }
    if (topology == Topology::kPrivateLabels && (e.has_labels || e.label_bytes != 0)) {
      return where + ": labels on the wire in private-labels mode";
    }
    if (topology == Topology::kLabelSharing && want.kind == MessageKind::kForwardWithLabels &&
        !e.has_labels) {
      return where + ": forward message without labels";
    }
  }
  return std::nullopt;
}

HonestServer::HonestServer(Model model, OptimizerConfig optimizer, Topology topology)
    : model_(std::move(model)), optimizer_(optimizer, model_), topology_(topology) {
  model_.validate();
}

SplitMessage HonestServer::on_forward(const SplitMessage& message) {
  if (topology_ == Topology::kLabelSharing) {
    if (message.kind != MessageKind::kForwardWithLabels || !message.labels) {
      throw ProtocolError("label-sharing server received a forward message without labels");
    }
    auto fwd = forward(model_, message.payload);
    auto loss = cross_entropy_loss(fwd.output, *message.labels);
    auto grads = backward(model_, fwd.tape, loss.gradient);
    optimizer_.step(model_, grads);
    last_loss_ = loss.loss;
    return SplitMessage{MessageKind::kBackwardGradients, message.batch_id, std::move(grads.input),
                        std::nullopt};
  }
  if (message.kind != MessageKind::kForwardActivations) {
    throw ProtocolError("private-labels server expects ForwardActivations");
  }
  auto fwd = forward(model_, message.payload);
  pending_batch_ = message.batch_id;
  pending_tape_ = std::move(fwd.tape);
  return SplitMessage{MessageKind::kServerOutput, message.batch_id, std::move(fwd.output),
                      std::nullopt};
}

SplitMessage HonestServer::on_client_loss_gradients(const SplitMessage& message) {
  if (topology_ != Topology::kPrivateLabels) {
    throw ProtocolError("ClientLossGradients received in label-sharing mode");
  }
  if (!pending_batch_ || *pending_batch_ != message.batch_id) {
    throw ProtocolError("ClientLossGradients for batch " + std::to_string(message.batch_id) +
                        " without a matching forward pass");
  }
  if (message.payload.shape() != pending_tape_.outputs.back().shape()) {
    throw ProtocolError("ClientLossGradients shape does not match the server output");
  }
  auto grads = backward(model_, pending_tape_, message.payload);
  optimizer_.step(model_, grads);
  pending_batch_.reset();
  pending_tape_ = Tape{};
  return SplitMessage{MessageKind::kBackwardGradients, message.batch_id, std::move(grads.input),
                      std::nullopt};
}

namespace {

void expect_reply(const SplitMessage& reply, MessageKind kind, std::uint32_t batch_id) {
  if (reply.kind != kind) {
    throw ProtocolError("expected " + to_string(kind) + " from server, got " +
                        to_string(reply.kind));
  }
  if (reply.batch_id != batch_id) {
    throw ProtocolError("server replied for batch " + std::to_string(reply.batch_id) +
                        ", expected " + std::to_string(batch_id));
  }
  if (reply.labels) throw ProtocolError("server reply carries labels");
}

}  // namespace

StepOutcome client_train_step(ClientState& client, const Tensor& inputs,
                              std::span<const Label> labels, Topology topology,
                              ServerLink& server, std::uint32_t batch_id, bool fake,
                              const GradientHook& hook) {
  if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
    throw InvalidInput("batch inputs and labels disagree in count");
  }
  StepOutcome out;
  auto fwd = forward(client.model, inputs);
  out.activations = fwd.output;

  Tensor boundary_grad;
  std::optional<Gradients> head_grads;
  if (topology == Topology::kLabelSharing) {
    SplitMessage request{MessageKind::kForwardWithLabels, batch_id, fwd.output,
                         std::vector<Label>(labels.begin(), labels.end())};
    SplitMessage reply = server.exchange(request);
    expect_reply(reply, MessageKind::kBackwardGradients, batch_id);
    boundary_grad = std::move(reply.payload);
  } else {
    if (!client.head || !client.head_optimizer) {
      throw InvalidInput("private-labels topology requires a client head model");
    }
    SplitMessage request{MessageKind::kForwardActivations, batch_id, fwd.output, std::nullopt};
    SplitMessage server_out = server.exchange(request);
    expect_reply(server_out, MessageKind::kServerOutput, batch_id);
    if (server_out.payload.rank() != 2 || server_out.payload.rows() != inputs.rows() ||
        server_out.payload.cols() != client.head->input_width()) {
      throw ProtocolError("server output shape " + shape_string(server_out.payload.shape()) +
                          " does not fit the client head");
    }
    auto head_fwd = forward(*client.head, server_out.payload);
    auto loss = cross_entropy_loss(head_fwd.output, labels);
    out.loss = loss.loss;
    out.accuracy = accuracy(head_fwd.output, labels);
    head_grads = backward(*client.head, head_fwd.tape, loss.gradient);
    SplitMessage loss_grads{MessageKind::kClientLossGradients, batch_id, head_grads->input,
                            std::nullopt};
    SplitMessage reply = server.exchange(loss_grads);
    expect_reply(reply, MessageKind::kBackwardGradients, batch_id);
    boundary_grad = std::move(reply.payload);
  }

  if (boundary_grad.shape() != fwd.output.shape()) {
    throw ProtocolError("server gradient shape " + shape_string(boundary_grad.shape()) +
                        " does not match activation shape " + shape_string(fwd.output.shape()));
  }
  if (!boundary_grad.all_finite()) throw ProtocolError("server gradient contains non-finite values");

  Gradients grads = backward(client.model, fwd.tape, boundary_grad);
  out.first_layer_gradient = grads.first_layer_flat();
  if (hook) hook(out.first_layer_gradient, batch_id, fake);

  if (!fake) {
    client.optimizer.step(client.model, grads);
    if (head_grads) client.head_optimizer->step(*client.head, *head_grads);
    out.updated = true;
  }
  return out;
}

LinearProbe::LinearProbe(std::size_t width, int num_classes, double learning_rate, Rng& rng)
    : model_(make_mlp({width, static_cast<std::size_t>(num_classes)}, Activation::kIdentity,
                      Activation::kIdentity, rng)),
      optimizer_(OptimizerConfig{OptimizerKind::kAdam, learning_rate}, model_) {}

double LinearProbe::observe(const Tensor& activations, std::span<const Label> labels) {
  auto fwd = forward(model_, activations);
  const double acc = accuracy(fwd.output, labels);
  auto loss = cross_entropy_loss(fwd.output, labels);
  optimizer_.step(model_, backward(model_, fwd.tape, loss.gradient));
  return acc;
}

void RollingMean::add(double v) {
  if (capacity_ == 0) return;
  if (values_.size() < capacity_) {
    values_.push_back(v);
  } else {
    values_[next_] = v;
  }
  next_ = (next_ + 1) % capacity_;
}

std::optional<double> RollingMean::value() const {
  if (values_.empty()) return std::nullopt;
  return std::accumulate(values_.begin(), values_.end(), 0.0) /
         static_cast<double>(values_.size());
}

EpochStats train_epoch(ClientSession& session, const Dataset& data, ServerLink& server,
                       const BatchCallback& on_batch) {
  session.plan.validate();
  EpochStats stats;
  const auto order = epoch_order(data.size(), session.plan, session.epochs_done);
  for (auto batch : make_batches(order, session.plan.batch_size)) {
    const std::uint64_t index = session.next_batch++;
    const bool fake = is_fake_batch(session.plan, index);
    const Tensor inputs = data.examples.gather_rows(batch);
    std::vector<Label> labels;
    labels.reserve(batch.size());
    for (std::size_t i : batch) labels.push_back(data.labels[i]);
    if (fake) {
      labels = randomize_labels(labels, session.detector.fake_share(), session.num_classes,
                                session.label_rng)
                   .labels;
    }

    const StepOutcome outcome =
        client_train_step(session.state, inputs, labels, session.topology, server,
                          static_cast<std::uint32_t>(index), fake);

    if (!fake) {
      if (outcome.accuracy) {
        session.accuracy.add(*outcome.accuracy);
      } else if (session.probe) {
        session.accuracy.add(session.probe->observe(outcome.activations, labels));
      }
    }
    session.detector.observe(outcome.first_layer_gradient, index, fake,
                             session.accuracy.value());
    ++stats.batches;
    stats.fake_batches += fake;
    if (on_batch) on_batch(BatchContext{index, fake, inputs, outcome});
  }
  ++session.epochs_done;
  return stats;
}

std::vector<DetectionReport> run_round_robin(std::vector<ClientSession>& clients,
                                             const std::vector<Dataset>& shards,
                                             ServerLink& server, std::size_t epochs,
                                             const BatchCallback& on_batch) {
  if (clients.empty()) throw InvalidInput("round robin needs at least one client");
  if (shards.size() != clients.size()) throw InvalidInput("one shard per client is required");
  std::optional<std::size_t> last_trained;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t c = 0; c < clients.size(); ++c) {
      if (last_trained && *last_trained != c) clients[c].state = clients[*last_trained].state;
      train_epoch(clients[c], shards[c], server, on_batch);
      last_trained = c;
    }
  }
  std::vector<DetectionReport> reports;
  reports.reserve(clients.size());
  for (const auto& c : clients) reports.push_back(c.detector.report());
  return reports;
}

}  // namespace sglab
