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
#include "sglab/experiment.hpp"

#include <gtest/gtest.h>
#include <stdlib.h>

#include <filesystem>
#include <fstream>

#include "sglab/error.hpp"

namespace sglab {
namespace {

namespace fs = std::filesystem;

// Small enough to run in well under a second.
ExperimentConfig tiny(Topology topology = Topology::kLabelSharing) {
  ExperimentConfig c;
  c.dataset = parse_dataset_spec("synth:4,16,400,0.3");
  c.topology = topology;
  c.client_widths = {16, 12};
  c.server_widths = {12, 12, topology == Topology::kLabelSharing ? 4u : 12u};
  c.head_widths = {12, 4};
  c.batch_size = 16;
  c.start_index = 5;
  c.policies = {PolicySpec::parse("fast"), PolicySpec::parse("avg-3"),
                PolicySpec::parse("voting-3x3")};
  c.runs = 1;
  c.fsha_setup_epochs = 2;
  c.reconstruction_every = 10;
  c.reconstruction_images = 3;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sglab-experiment-test-" + name);
  fs::remove_all(p);
  return p;
}

std::string validation_message(const ExperimentConfig& c) {
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    return e.what();
  }
  return "";
}

TEST(Config, ValidationNamesTheField) {
  EXPECT_EQ(validation_message(tiny()), "");
  {
    auto c = tiny();
    c.batch_size = 0;
    EXPECT_NE(validation_message(c).find("'batch_size'"), std::string::npos);
  }
  {
    auto c = tiny();
    c.client_widths = {15, 12};
    EXPECT_NE(validation_message(c).find("'client_widths'"), std::string::npos);
  }
  {
    auto c = tiny();
    c.server_widths = {11, 12, 4};
    EXPECT_NE(validation_message(c).find("'server_widths'"), std::string::npos);
  }
  {
    auto c = tiny();
    c.fake_probability = 1.5;
    EXPECT_NE(validation_message(c).find("'fake_probability'"), std::string::npos);
  }
  {
    auto c = tiny();
    c.score.alpha = -1.0;
    EXPECT_NE(validation_message(c).find("'score'"), std::string::npos);
  }
  {
    auto c = tiny();
    c.decision_policy = 3;
    EXPECT_NE(validation_message(c).find("'decision_policy'"), std::string::npos);
  }
  {
    auto c = tiny();
    c.server = ServerKind::kFsha;
    c.public_fraction = 0.0;
    EXPECT_NE(validation_message(c).find("'public_fraction'"), std::string::npos);
  }
  {
    auto c = tiny(Topology::kPrivateLabels);
    c.head_widths = {12, 5};
    EXPECT_NE(validation_message(c).find("'head_widths'"), std::string::npos);
  }
  {
    auto c = tiny();
    c.fsha_loss = "wgan";
    EXPECT_NE(validation_message(c).find("'fsha_loss'"), std::string::npos);
  }
}

TEST(Config, JsonRoundTrip) {
  auto c = tiny(Topology::kPrivateLabels);
  c.server = ServerKind::kFsha;
  c.transport = Transport::kSocket;
  c.fake_label_share = 0.0625;
  c.adaptive_fake_share = true;
  c.decision.delta = 0.125;
  c.client_optimizer = {OptimizerKind::kSgd, 0.3};
  c.output_dir = "some/where";
  c.fsha_loss = "printed";
  c.seed = 1234567890123ull;
  const std::string text = c.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(text);
  EXPECT_EQ(back.to_json(), text);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.fake_label_share, 0.0625);
  EXPECT_EQ(back.policies.size(), 3u);
}

TEST(Config, JsonErrors) {
  EXPECT_THROW(ExperimentConfig::from_json("{\"batch_sise\": 3}"), InvalidInput);
  EXPECT_THROW(ExperimentConfig::from_json("[1, 2]"), FormatError);
  try {
    ExperimentConfig::from_json("{\"runs\": 3,, }");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset, 0u);
  }
  try {
    ExperimentConfig::from_json("{\"runs\": \"many\"}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("runs"), std::string::npos);
  }
  // Partial configs keep the remaining defaults.
  const auto c = ExperimentConfig::from_json("{\"epochs\": 3}");
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.batch_size, ExperimentConfig{}.batch_size);
}

TEST(Run, SameSeedSameSummary) {
  for (Topology t : {Topology::kLabelSharing, Topology::kPrivateLabels}) {
    for (ServerKind k : {ServerKind::kHonest, ServerKind::kFsha}) {
      auto c = tiny(t);
      c.server = k;
      c.seed = 77;
      const RunSummary a = run_experiment(c).summary;
      const RunSummary b = run_experiment(c).summary;
      EXPECT_EQ(a, b);
      EXPECT_GT(a.batches, 0u);
      EXPECT_EQ(a.test_accuracy.has_value(), k == ServerKind::kHonest);
      EXPECT_EQ(a.reconstruction_mse.empty(), k == ServerKind::kHonest);
      c.seed = 78;
      EXPECT_NE(run_experiment(c).summary.sg_trace, a.sg_trace);
    }
  }
}

TEST(Run, SocketTransportMatchesInProcess) {
  for (Topology t : {Topology::kLabelSharing, Topology::kPrivateLabels}) {
    for (ServerKind k : {ServerKind::kHonest, ServerKind::kFsha}) {
      auto c = tiny(t);
      c.server = k;
      const RunSummary direct = run_experiment(c).summary;
      c.transport = Transport::kSocket;
      EXPECT_EQ(run_experiment(c).summary, direct);
    }
  }
}

TEST(Run, DetectionIndexPresentIffAttack) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    for (ServerKind k : {ServerKind::kHonest, ServerKind::kFsha}) {
      auto c = tiny();
      c.server = k;
      c.seed = seed;
      for (const auto& p : run_experiment(c).summary.policies) {
        EXPECT_EQ(p.detection_batch.has_value(), p.verdict == Verdict::kAttack) << p.policy;
      }
    }
  }
}

TEST(Run, MultipleClientsEachKeepADetector) {
  auto c = tiny();
  c.clients = 3;
  const RunResult r = run_experiment(c);
  EXPECT_EQ(r.reports.size(), 3u);
}

// The desk configuration: the verdicts the detector exists to produce.
TEST(Run, DeskHonestRunIsHonestUnderVoting) {
  ExperimentConfig c;
  c.seed = 3;
  const RunSummary s = run_experiment(c).summary;
  const PolicyResult* voting = s.find_policy("voting-10x5");
  ASSERT_NE(voting, nullptr);
  EXPECT_EQ(voting->verdict, Verdict::kHonest);
  ASSERT_TRUE(s.test_accuracy.has_value());
  EXPECT_GT(*s.test_accuracy, 0.8);
}

TEST(Run, DeskFshaRunIsAttackUnderAllPolicies) {
  ExperimentConfig c;
  c.server = ServerKind::kFsha;
  c.seed = 3;
  const RunSummary s = run_experiment(c).summary;
  ASSERT_EQ(s.policies.size(), 3u);
  for (const auto& p : s.policies) {
    EXPECT_EQ(p.verdict, Verdict::kAttack) << p.policy;
    ASSERT_TRUE(p.detection_batch.has_value());
    EXPECT_GE(*p.detection_batch, c.start_index);
  }
  EXPECT_EQ(s.final_action, to_string(Action::kStopAttack));
}

RunSummary hand_built(ServerKind k, std::vector<std::optional<std::uint64_t>> detections) {
  RunSummary s;
  s.server = k;
  const char* names[] = {"fast", "voting-10x5"};
  for (std::size_t i = 0; i < detections.size(); ++i) {
    PolicyResult p{names[i], detections[i] ? Verdict::kAttack : Verdict::kHonest, detections[i]};
    s.policies.push_back(p);
  }
  return s;
}

TEST(Aggregate, Arithmetic) {
  const std::vector<RunSummary> runs = {
      hand_built(ServerKind::kFsha, {10, std::nullopt}),
      hand_built(ServerKind::kFsha, {20, 40}),
      hand_built(ServerKind::kHonest, {30, std::nullopt}),
      hand_built(ServerKind::kHonest, {std::nullopt, std::nullopt}),
      hand_built(ServerKind::kHonest, {std::nullopt, std::nullopt}),
      hand_built(ServerKind::kHonest, {std::nullopt, std::nullopt}),
  };
  const auto rows = aggregate(runs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].policy, "fast");
  EXPECT_EQ(rows[0].attack_runs, 2u);
  EXPECT_EQ(rows[0].honest_runs, 4u);
  EXPECT_DOUBLE_EQ(rows[0].tp_rate, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].fp_rate, 0.25);
  EXPECT_DOUBLE_EQ(*rows[0].mean_detection_index, 15.0);
  EXPECT_DOUBLE_EQ(rows[1].tp_rate, 0.5);
  EXPECT_DOUBLE_EQ(rows[1].fp_rate, 0.0);
  EXPECT_DOUBLE_EQ(*rows[1].mean_detection_index, 40.0);

  const auto none = aggregate({hand_built(ServerKind::kFsha, {std::nullopt, std::nullopt})});
  EXPECT_EQ(none[0].tp_rate, 0.0);
  EXPECT_FALSE(none[0].mean_detection_index.has_value());

  const std::string csv = detection_table_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "policy,attack_runs,honest_runs,tp_rate,fp_rate,mean_detection_index");
  EXPECT_NE(csv.find("fast,2,4,1,0.25,15\n"), std::string::npos);
}

TEST(Persistence, SummariesReloadExactly) {
  const fs::path root = scratch("persist");
  std::vector<RunSummary> in_memory;
  for (ServerKind k : {ServerKind::kHonest, ServerKind::kFsha}) {
    auto c = tiny();
    c.server = k;
    c.runs = 2;
    c.output_dir = root.string();
    auto runs = run_series(c);
    in_memory.insert(in_memory.end(), runs.begin(), runs.end());
  }
  const auto loaded = load_summaries(root);
  ASSERT_EQ(loaded.size(), in_memory.size());
  for (const auto& s : in_memory) {
    const bool found = std::any_of(loaded.begin(), loaded.end(),
                                   [&](const RunSummary& l) { return l == s; });
    EXPECT_TRUE(found) << s.run_dir;
  }
  EXPECT_EQ(aggregate(loaded).size(), aggregate(in_memory).size());
  const auto a = aggregate(loaded);
  const auto b = aggregate(in_memory);
  EXPECT_EQ(a, b);

  for (const auto& s : in_memory) {
    EXPECT_TRUE(audit_run_directory(s.run_dir, s.server == ServerKind::kFsha).empty()) << s.run_dir;
    // The stored config reproduces the run.
    std::ifstream in(fs::path(s.run_dir) / "config.json");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto c = ExperimentConfig::from_json(text);
    c.output_dir.clear();
    RunSummary again = run_experiment(c).summary;
    again.run_dir = s.run_dir;
    again.score_csv = s.score_csv;
    EXPECT_EQ(again, s);
  }
  fs::remove_all(root);
}

TEST(Persistence, AuditReportsMissingArtifacts) {
  const fs::path root = scratch("audit");
  auto c = tiny();
  c.server = ServerKind::kFsha;
  c.output_dir = root.string();
  const RunSummary s = run_experiment(c).summary;
  EXPECT_TRUE(audit_run_directory(s.run_dir, true).empty());
  fs::remove(fs::path(s.run_dir) / "reconstructions.json");
  fs::remove(fs::path(s.run_dir) / "scores.csv");
  const auto missing = audit_run_directory(s.run_dir, true);
  EXPECT_EQ(missing, (std::vector<std::string>{"scores.csv", "reconstructions.json"}));
  EXPECT_EQ(audit_run_directory(root / "nowhere", false).size(), 3u);
  fs::remove_all(root);
}

TEST(Persistence, OutputRootFromEnvironment) {
  const fs::path root = scratch("env");
  ::setenv("SGLAB_OUTPUT_ROOT", root.c_str(), 1);
  EXPECT_EQ(resolve_output_dir("rel/dir"), root / "rel/dir");
  EXPECT_EQ(resolve_output_dir("/abs/dir"), fs::path("/abs/dir"));
  auto c = tiny();
  c.output_dir = "runs";
  const RunSummary s = run_experiment(c).summary;
  EXPECT_EQ(fs::path(s.run_dir).parent_path(), root / "runs");
  EXPECT_TRUE(fs::is_regular_file(fs::path(s.run_dir) / "summary.json"));
  ::unsetenv("SGLAB_OUTPUT_ROOT");
  EXPECT_EQ(resolve_output_dir("rel/dir"), fs::path("rel/dir"));
  fs::remove_all(root);
}

TEST(AccuracyImpact, OneRowPerGridValue) {
  auto c = tiny();
  const auto rows = accuracy_impact(c, {0.0});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].runs, 1u);
  // With B_F = 0 the grid row is plain training.
  c.fake_label_share = 0.0;
  EXPECT_EQ(rows[0].mean_accuracy, *run_experiment(c).summary.test_accuracy);
  EXPECT_EQ(accuracy_spread(rows), 0.0);
  EXPECT_DOUBLE_EQ(accuracy_spread({{0.0, 1, 0.9}, {1.0, 1, 0.87}, {0.5, 1, 0.95}}), 0.08);

  c.server = ServerKind::kFsha;
  EXPECT_THROW(accuracy_impact(c, {0.0}), InvalidInput);
  EXPECT_THROW(claims_check(c), InvalidInput);
}

TEST(Claims, CountsOnlyLateFakeBatches) {
  auto c = tiny();
  c.runs = 2;
  const ClaimsReport all = claims_check(c, 0);
  const ClaimsReport late = claims_check(c, 2);
  EXPECT_GT(all.checkpoints, late.checkpoints);
  EXPECT_LE(late.theta_holds, late.checkpoints);
  EXPECT_LE(late.d_holds, late.checkpoints);
  EXPECT_EQ(claims_check(c, 1000).checkpoints, 0u);
  EXPECT_EQ(ClaimsReport{}.theta_fraction(), 0.0);
}

TEST(Names, RoundTrip) {
  EXPECT_EQ(server_kind_from_string(to_string(ServerKind::kFsha)), ServerKind::kFsha);
  EXPECT_EQ(server_kind_from_string(to_string(ServerKind::kHonest)), ServerKind::kHonest);
  EXPECT_EQ(transport_from_string(to_string(Transport::kSocket)), Transport::kSocket);
  EXPECT_EQ(transport_from_string(to_string(Transport::kInProcess)), Transport::kInProcess);
  EXPECT_THROW(server_kind_from_string("evil"), InvalidInput);
  EXPECT_THROW(transport_from_string("pigeon"), InvalidInput);
}

}  // namespace
}  // namespace sglab
