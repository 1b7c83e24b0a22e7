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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sglab/data.hpp"
#include "sglab/detector.hpp"
#include "sglab/message.hpp"
#include "sglab/nn.hpp"

namespace sglab {

enum class ServerKind { kHonest, kFsha };
std::string to_string(ServerKind k);
ServerKind server_kind_from_string(const std::string& s);

enum class Transport { kInProcess, kSocket };
std::string to_string(Transport t);
Transport transport_from_string(const std::string& s);

struct ExperimentConfig {
  DatasetSpec dataset = parse_dataset_spec("synth:10,64,6000,0.3");
  std::uint64_t data_seed = 7;  // fixed across runs; run seeds vary the rest
  double test_fraction = 0.1;
  double public_fraction = 0.1;

  Topology topology = Topology::kLabelSharing;
  ServerKind server = ServerKind::kHonest;
  Transport transport = Transport::kInProcess;

  // Client: {input, ..., boundary}. Server: {boundary, ..., out}; its output
  // is the logits in label-sharing mode and feeds the client head otherwise.
  std::vector<std::size_t> client_widths = {64, 64};
  std::vector<std::size_t> server_widths = {64, 64, 10};
  std::vector<std::size_t> head_widths = {64, 10};
  OptimizerConfig client_optimizer{OptimizerKind::kAdam, 1e-4};
  OptimizerConfig server_optimizer{OptimizerKind::kAdam, 1e-3};

  std::size_t batch_size = 64;
  double fake_probability = 0.1;  // P_F
  double fake_label_share = 1.0;  // B_F
  std::size_t start_index = 20;   // N

  ScoreParams score;
  std::vector<PolicySpec> policies = {PolicySpec::parse("fast"), PolicySpec::parse("avg-10"),
                                      PolicySpec::parse("voting-10x5")};
  std::size_t decision_policy = 2;
  DecisionParams decision;
  bool adaptive_fake_share = false;

  std::size_t clients = 1;
  std::size_t epochs = 1;
  std::size_t runs = 20;
  std::uint64_t seed = 1;

  // Attacker knobs.
  std::size_t fsha_setup_epochs = 10;
  double fsha_distinguisher_lr = 3e-3;
  double fsha_autoencoder_lr = 1e-3;
  std::string fsha_loss = "log-likelihood";  // or "printed"
  // The server hands the client its initial weights and starts its encoder
  // from the same weights.
  bool fsha_shared_init = true;
  std::size_t reconstruction_every = 50;  // batches between reconstruction MSE samples
  std::size_t reconstruction_images = 8;

  // Empty: no artifacts. A relative path is resolved against SGLAB_OUTPUT_ROOT
  // when that variable is set.
  std::string output_dir;

  // Throws InvalidInput naming the offending field.
  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
};

struct PolicyResult {
  std::string policy;
  Verdict verdict = Verdict::kUndecided;
  std::optional<std::uint64_t> detection_batch;  // present iff verdict == Attack

  friend bool operator==(const PolicyResult&, const PolicyResult&) = default;
};

struct ReconstructionSample {
  std::uint64_t batch_index = 0;
  double mse = 0.0;

  friend bool operator==(const ReconstructionSample&, const ReconstructionSample&) = default;
};

struct RunSummary {
  std::uint64_t seed = 0;
  ServerKind server = ServerKind::kHonest;
  Topology topology = Topology::kLabelSharing;
  double fake_label_share = 1.0;
  std::optional<double> test_accuracy;  // honest runs
  std::vector<PolicyResult> policies;
  std::string final_action;
  std::optional<std::uint64_t> stop_batch;
  std::size_t batches = 0;
  std::size_t fake_batches = 0;
  std::vector<double> sg_trace;
  std::optional<double> mean_last10_sg;
  std::vector<ReconstructionSample> reconstruction_mse;  // attack runs
  std::string score_csv;  // path relative to the run directory, empty if not written
  std::string run_dir;

  const PolicyResult* find_policy(const std::string& name) const;
  std::string to_json() const;
  static RunSummary from_json(const std::string& text);

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

// Per-run detector traces kept in memory alongside the summary.
struct RunResult {
  RunSummary summary;
  std::vector<DetectionReport> reports;  // one per client
};

// One seeded run using config.seed.
RunResult run_experiment(const ExperimentConfig& config);

// config.runs runs with seeds config.seed, config.seed + 1, ...; `jobs`
// independent runs execute concurrently.
std::vector<RunSummary> run_series(const ExperimentConfig& config, std::size_t jobs = 1);

struct DetectionRow {
  std::string policy;
  std::size_t attack_runs = 0;
  std::size_t honest_runs = 0;
  double tp_rate = 0.0;
  double fp_rate = 0.0;
  std::optional<double> mean_detection_index;  // over detected attack runs

  friend bool operator==(const DetectionRow&, const DetectionRow&) = default;
};

std::vector<DetectionRow> aggregate(const std::vector<RunSummary>& runs);
std::string detection_table_csv(const std::vector<DetectionRow>& rows);

struct AccuracyRow {
  double fake_label_share = 0.0;
  std::size_t runs = 0;
  double mean_accuracy = 0.0;
};

// Honest runs for each B_F in `grid`, config.runs per value.
std::vector<AccuracyRow> accuracy_impact(const ExperimentConfig& config,
                                         const std::vector<double>& grid, std::size_t jobs = 1);
double accuracy_spread(const std::vector<AccuracyRow>& rows);

struct ClaimsReport {
  std::size_t checkpoints = 0;  // fake-batch scores after the skip
  std::size_t theta_holds = 0;  // theta(F,R) > theta(R1,R2)
  std::size_t d_holds = 0;      // d(F,R) > d(R1,R2)
  double theta_fraction() const;
  double d_fraction() const;
};

// Honest runs; counts fake-batch checkpoints after the first `skip` fake batches.
ClaimsReport claims_check(const ExperimentConfig& config, std::size_t skip = 10,
                          std::size_t jobs = 1);

std::filesystem::path resolve_output_dir(const std::string& dir);

// Missing artifacts in a run directory, empty when complete.
std::vector<std::string> audit_run_directory(const std::filesystem::path& dir, bool attack_run);

std::vector<RunSummary> load_summaries(const std::filesystem::path& root);

}  // namespace sglab
