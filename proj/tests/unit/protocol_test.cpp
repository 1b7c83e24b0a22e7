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
#include <gtest/gtest.h>

#include <cmath>

#include "sessions.hpp"
#include "sglab/error.hpp"
#include "sglab/protocol.hpp"

namespace sglab {
namespace {

using testing::make_server;
using testing::make_session;
using testing::small_data;

struct TracedRun {
  std::vector<TraceEvent> events;
  std::size_t batches = 0;
};

// Runs epochs until at least `batches` batches have been exchanged.
TracedRun trace_batches(Topology topology, std::size_t batches) {
  auto session = make_session(topology, 1);
  auto server = make_server(topology, 1);
  InProcessLink link(server);
  TracingLink tracing(link);
  const Dataset data = small_data(100, 2);  // 400 examples, 25 batches of 16
  TracedRun out;
  while (out.batches < batches) out.batches += train_epoch(session, data, tracing).batches;
  out.events = tracing.events();
  return out;
}

TEST(Trace, LabelSharingThousandBatches) {
  const auto run = trace_batches(Topology::kLabelSharing, 1000);
  ASSERT_EQ(run.events.size(), 2 * run.batches);
  EXPECT_EQ(verify_trace(run.events, Topology::kLabelSharing), std::nullopt);
  for (std::size_t i = 0; i < run.events.size(); i += 2) {
    ASSERT_TRUE(run.events[i].has_labels);
    ASSERT_EQ(run.events[i].label_bytes, 4 + 4 * run.events[i].payload_shape[0]);
    ASSERT_EQ(run.events[i + 1].label_bytes, 0u);
  }
}

TEST(Trace, PrivateLabelsThousandBatchesCarryNoLabelBytes) {
  const auto run = trace_batches(Topology::kPrivateLabels, 1000);
  ASSERT_EQ(run.events.size(), 4 * run.batches);
  EXPECT_EQ(verify_trace(run.events, Topology::kPrivateLabels), std::nullopt);
  std::size_t label_bytes = 0;
  for (const auto& e : run.events) {
    label_bytes += e.label_bytes;
    ASSERT_FALSE(e.has_labels);
  }
  EXPECT_EQ(label_bytes, 0u);
}

TEST(Trace, VerifierRejectsViolations) {
  const auto good = trace_batches(Topology::kPrivateLabels, 2).events;
  {
    auto bad = good;
    bad.pop_back();
    EXPECT_NE(verify_trace(bad, Topology::kPrivateLabels), std::nullopt);
  }
  {
    auto bad = good;
    std::swap(bad[1], bad[2]);
    EXPECT_NE(verify_trace(bad, Topology::kPrivateLabels), std::nullopt);
  }
  {
    auto bad = good;
    bad[3].batch_id += 1;
    EXPECT_NE(verify_trace(bad, Topology::kPrivateLabels), std::nullopt);
  }
  {
    auto bad = good;
    bad[0].has_labels = true;
    bad[0].label_bytes = 68;
    EXPECT_NE(verify_trace(bad, Topology::kPrivateLabels), std::nullopt);
  }
  EXPECT_NE(verify_trace(good, Topology::kLabelSharing), std::nullopt);
  auto ls = trace_batches(Topology::kLabelSharing, 2).events;
  ls[0].has_labels = false;
  EXPECT_NE(verify_trace(ls, Topology::kLabelSharing), std::nullopt);
}

TEST(Messages, LabelRules) {
  SplitMessage m{MessageKind::kForwardWithLabels, 1, Tensor::matrix(2, 3), std::nullopt};
  EXPECT_THROW(check_message(m), ProtocolError);
  m.labels = std::vector<Label>{1};
  EXPECT_THROW(check_message(m), ProtocolError);
  m.labels = std::vector<Label>{1, 2};
  EXPECT_NO_THROW(check_message(m));
  m.kind = MessageKind::kForwardActivations;
  EXPECT_THROW(check_message(m), ProtocolError);
  m.labels.reset();
  m.payload = Tensor({6});
  EXPECT_THROW(check_message(m), ProtocolError);
}

TEST(Messages, ServerRejectsClientBoundKinds) {
  auto server = make_server(Topology::kLabelSharing, 1);
  for (MessageKind k : {MessageKind::kBackwardGradients, MessageKind::kServerOutput}) {
    EXPECT_THROW(dispatch(server, SplitMessage{k, 0, Tensor::matrix(1, 6), std::nullopt}),
                 ProtocolError);
  }
}

TEST(HonestServer, WrongModeAndBatchMismatch) {
  auto ls = make_server(Topology::kLabelSharing, 1);
  EXPECT_THROW(ls.on_client_loss_gradients(
                   {MessageKind::kClientLossGradients, 0, Tensor::matrix(1, 6), std::nullopt}),
               ProtocolError);
  EXPECT_THROW(ls.on_forward({MessageKind::kForwardActivations, 0, Tensor::matrix(1, 6),
                              std::nullopt}),
               ProtocolError);

  auto pl = make_server(Topology::kPrivateLabels, 1);
  EXPECT_THROW(pl.on_client_loss_gradients(
                   {MessageKind::kClientLossGradients, 0, Tensor::matrix(1, 6), std::nullopt}),
               ProtocolError);  // nothing pending
  const auto out =
      pl.on_forward({MessageKind::kForwardActivations, 7, Tensor::matrix(2, 6), std::nullopt});
  EXPECT_EQ(out.kind, MessageKind::kServerOutput);
  EXPECT_EQ(out.batch_id, 7u);
  EXPECT_THROW(pl.on_client_loss_gradients(
                   {MessageKind::kClientLossGradients, 8, Tensor::matrix(2, 6), std::nullopt}),
               ProtocolError);
}

// A server that answers with whatever it is told to.
class ScriptedServer : public ServerBehavior {
 public:
  std::function<SplitMessage(const SplitMessage&)> reply;
  SplitMessage on_forward(const SplitMessage& m) override { return reply(m); }
  SplitMessage on_client_loss_gradients(const SplitMessage& m) override { return reply(m); }
};

TEST(ClientStep, RejectsMalformedReplies) {
  auto session = make_session(Topology::kLabelSharing, 3);
  const Tensor x = Tensor::matrix(4, 8, 0.5);
  const std::vector<Label> y = {0, 1, 2, 3};
  ScriptedServer server;
  InProcessLink link(server);
  auto attempt = [&] {
    client_train_step(session.state, x, y, Topology::kLabelSharing, link, 5, false);
  };
  server.reply = [](const SplitMessage& m) {
    return SplitMessage{MessageKind::kServerOutput, m.batch_id, Tensor::matrix(4, 6), std::nullopt};
  };
  EXPECT_THROW(attempt(), ProtocolError);
  server.reply = [](const SplitMessage& m) {
    return SplitMessage{MessageKind::kBackwardGradients, m.batch_id + 1, Tensor::matrix(4, 6),
                        std::nullopt};
  };
  EXPECT_THROW(attempt(), ProtocolError);
  server.reply = [](const SplitMessage& m) {
    return SplitMessage{MessageKind::kBackwardGradients, m.batch_id, Tensor::matrix(4, 5),
                        std::nullopt};
  };
  EXPECT_THROW(attempt(), ProtocolError);
  server.reply = [](const SplitMessage& m) {
    Tensor g = Tensor::matrix(4, 6);
    g[3] = std::nan("");
    return SplitMessage{MessageKind::kBackwardGradients, m.batch_id, g, std::nullopt};
  };
  EXPECT_THROW(attempt(), ProtocolError);
}

TEST(ClientStep, PrivateLabelsNeedsAHead) {
  auto session = make_session(Topology::kLabelSharing, 3);
  auto server = make_server(Topology::kPrivateLabels, 3);
  InProcessLink link(server);
  EXPECT_THROW(client_train_step(session.state, Tensor::matrix(2, 8), std::vector<Label>{0, 1},
                                 Topology::kPrivateLabels, link, 0, false),
               InvalidInput);
}

class ClientStepTopology : public ::testing::TestWithParam<Topology> {};

TEST_P(ClientStepTopology, FakeBatchDiscardsClientUpdate) {
  const Topology t = GetParam();
  auto session = make_session(t, 4);
  auto server = make_server(t, 4);
  InProcessLink link(server);
  const Dataset data = small_data(8, 5);
  const std::vector<std::size_t> idx = {0, 9, 17, 30};
  const Tensor x = data.examples.gather_rows(idx);
  const std::vector<Label> y = {data.labels[0], data.labels[9], data.labels[17], data.labels[30]};

  const ClientState before = session.state;
  const auto fake = client_train_step(session.state, x, y, t, link, 1, true);
  EXPECT_FALSE(fake.updated);
  EXPECT_EQ(session.state, before);
  EXPECT_EQ(fake.first_layer_gradient.size(), 8u * 6u + 6u);

  const auto real = client_train_step(session.state, x, y, t, link, 2, false);
  EXPECT_TRUE(real.updated);
  EXPECT_NE(session.state.model, before.model);
  if (t == Topology::kPrivateLabels) {
    EXPECT_NE(*session.state.head, *before.head);
    EXPECT_TRUE(real.loss.has_value());
  }
}

TEST_P(ClientStepTopology, HookSeesTheFirstLayerGradient) {
  const Topology t = GetParam();
  auto session = make_session(t, 5);
  auto server = make_server(t, 5);
  InProcessLink link(server);
  std::vector<double> seen;
  bool seen_fake = false;
  const auto out = client_train_step(
      session.state, Tensor::matrix(3, 8, 0.3), std::vector<Label>{0, 1, 2}, t, link, 9, true,
      [&](std::span<const double> g, std::uint32_t id, bool fake) {
        seen.assign(g.begin(), g.end());
        seen_fake = fake;
        EXPECT_EQ(id, 9u);
      });
  EXPECT_EQ(seen, out.first_layer_gradient);
  EXPECT_TRUE(seen_fake);
}

INSTANTIATE_TEST_SUITE_P(Both, ClientStepTopology,
                         ::testing::Values(Topology::kLabelSharing, Topology::kPrivateLabels),
                         [](const auto& info) {
                           return info.param == Topology::kLabelSharing ? "LabelSharing"
                                                                        : "PrivateLabels";
                         });

// Records the labels an honest label-sharing server receives.
class LabelRecorder : public ServerBehavior {
 public:
  explicit LabelRecorder(ServerBehavior& inner) : inner_(inner) {}
  SplitMessage on_forward(const SplitMessage& m) override {
    received[m.batch_id] = *m.labels;
    return inner_.on_forward(m);
  }
  SplitMessage on_client_loss_gradients(const SplitMessage& m) override {
    return inner_.on_client_loss_gradients(m);
  }
  std::map<std::uint32_t, std::vector<Label>> received;

 private:
  ServerBehavior& inner_;
};

TEST(TrainEpoch, FakeBatchesCarryRandomizedLabels) {
  testing::SmallSetup s;
  s.fake_probability = 0.3;
  s.fake_label_share = 0.5;
  auto session = make_session(Topology::kLabelSharing, 6, s);
  session.plan.shuffle = false;
  auto honest = make_server(Topology::kLabelSharing, 6, s);
  LabelRecorder recorder(honest);
  InProcessLink link(recorder);
  const Dataset data = small_data(200, 7, s);  // 800 rows, 50 batches
  const auto stats = train_epoch(session, data, link);
  EXPECT_EQ(stats.batches, 50u);
  std::size_t fakes = 0;
  for (const auto& [id, labels] : recorder.received) {
    std::size_t differ = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) differ += labels[i] != data.labels[id * 16 + i];
    if (is_fake_batch(session.plan, id)) {
      ++fakes;
      ASSERT_EQ(differ, randomized_count(0.5, 16)) << id;
    } else {
      ASSERT_EQ(differ, 0u) << id;
    }
  }
  EXPECT_EQ(fakes, stats.fake_batches);
  EXPECT_GT(fakes, 0u);
  EXPECT_EQ(session.detector.report().fake_batches, fakes);
}

TEST(TrainEpoch, BatchIndicesContinueAcrossEpochs) {
  auto session = make_session(Topology::kLabelSharing, 8);
  auto server = make_server(Topology::kLabelSharing, 8);
  InProcessLink link(server);
  const Dataset data = small_data(10, 9);  // 40 rows, 3 batches
  std::vector<std::uint64_t> indices;
  for (int e = 0; e < 3; ++e) {
    train_epoch(session, data, link,
                [&](const BatchContext& c) { indices.push_back(c.batch_index); });
  }
  ASSERT_EQ(indices.size(), 9u);
  for (std::size_t i = 0; i < indices.size(); ++i) EXPECT_EQ(indices[i], i);
  EXPECT_EQ(session.epochs_done, 3u);
}

TEST(RoundRobin, NextClientStartsFromPreviousClientsModel) {
  for (Topology t : {Topology::kLabelSharing, Topology::kPrivateLabels}) {
    std::vector<ClientSession> clients;
    clients.push_back(make_session(t, 10));
    clients.push_back(make_session(t, 20));  // different initial weights
    auto server = make_server(t, 10);
    InProcessLink link(server);
    const Dataset data = small_data(40, 11);
    const auto shards = shard_dataset(data, 2);
    const std::size_t a_batches = (shards[0].size() + 15) / 16;

    std::size_t calls = 0;
    std::optional<ClientState> a_end;
    bool checked = false;
    run_round_robin(clients, shards, link, 2, [&](const BatchContext& c) {
      ++calls;
      if (calls == a_batches) a_end = clients[0].state;
      if (calls == a_batches + 1) {
        ASSERT_TRUE(a_end.has_value());
        EXPECT_EQ(c.outcome.activations, predict(a_end->model, c.inputs));
        checked = true;
      }
    });
    EXPECT_TRUE(checked);
    // After the last turn (client B, epoch 2) B holds the latest state, which
    // A took over at the start of epoch 2 and then handed back.
    EXPECT_EQ(clients[0].epochs_done, 2u);
    EXPECT_EQ(clients[1].epochs_done, 2u);
  }
}

TEST(RoundRobin, CopiesOptimizerMomentsToo) {
  std::vector<ClientSession> clients;
  clients.push_back(make_session(Topology::kLabelSharing, 30));
  clients.push_back(make_session(Topology::kLabelSharing, 31));
  auto server = make_server(Topology::kLabelSharing, 30);
  InProcessLink link(server);
  const auto shards = shard_dataset(small_data(40, 12), 2);
  std::size_t calls = 0;
  const std::size_t a_batches = (shards[0].size() + 15) / 16;
  std::optional<ClientState> a_end;
  std::optional<std::uint64_t> b_steps_at_first_batch;
  run_round_robin(clients, shards, link, 1, [&](const BatchContext& c) {
    ++calls;
    if (calls == a_batches) a_end = clients[0].state;
    if (calls == a_batches + 1) {
      b_steps_at_first_batch = clients[1].state.optimizer.steps() - (c.fake ? 0 : 1);
    }
  });
  ASSERT_TRUE(a_end && b_steps_at_first_batch);
  EXPECT_EQ(*b_steps_at_first_batch, a_end->optimizer.steps());
}

TEST(RoundRobin, Validation) {
  std::vector<ClientSession> none;
  auto server = make_server(Topology::kLabelSharing, 1);
  InProcessLink link(server);
  EXPECT_THROW(run_round_robin(none, {}, link, 1), InvalidInput);
  std::vector<ClientSession> one;
  one.push_back(make_session(Topology::kLabelSharing, 1));
  EXPECT_THROW(run_round_robin(one, shard_dataset(small_data(4, 1), 2), link, 1), InvalidInput);
}

TEST(RollingMean, KeepsOnlyTheNewestValues) {
  RollingMean m(3);
  EXPECT_FALSE(m.value().has_value());
  m.add(1);
  m.add(2);
  EXPECT_DOUBLE_EQ(*m.value(), 1.5);
  m.add(3);
  m.add(10);
  EXPECT_DOUBLE_EQ(*m.value(), 5.0);
}

TEST(LinearProbe, LearnsSeparableActivations) {
  Rng rng(1);
  LinearProbe probe(2, 2, 0.05, rng);
  const Tensor a({4, 2}, std::vector<double>{1, 0, 0.9, 0.1, 0, 1, 0.1, 0.9});
  const std::vector<Label> y = {0, 0, 1, 1};
  double acc = 0.0;
  for (int i = 0; i < 300; ++i) acc = probe.observe(a, y);
  EXPECT_EQ(acc, 1.0);
}

TEST(Topology, NamesRoundTrip) {
  for (Topology t : {Topology::kLabelSharing, Topology::kPrivateLabels}) {
    EXPECT_EQ(topology_from_string(to_string(t)), t);
  }
  EXPECT_THROW(topology_from_string("u-shaped"), InvalidInput);
}

}  // namespace
}  // namespace sglab
