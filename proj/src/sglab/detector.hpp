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

// Client-side hijacking detector.
//
// The client occasionally sends "fake" batches whose labels are partly
// randomized and records the first-layer gradient of every batch. Fake
// gradients go into F; regular ones are split by a fair coin into R1 and R2.
// If the server is training the client on the real task, fake gradients point
// away from regular ones and are larger, so
//
//   S  = (theta(F,R) d(F,R) - theta(R1,R2) d(R1,R2)) / (d(F,R) + d(R1,R2) + eps)
//   SG = sigmoid(alpha S)^beta
//
// stays near 1. A server whose loss ignores labels yields F, R1 and R2 that
// are samples from the same distribution, and SG drops well below 1.
//
// Only running sums are kept per set, so memory is O(gradient size)
// regardless of how many batches are observed.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sglab/rng.hpp"

namespace sglab {

enum class GradientTag { kFake, kRegular };

struct GradientRecord {
  std::vector<double> vector;
  std::uint64_t batch_index = 0;
  GradientTag tag = GradientTag::kRegular;
};

// Running statistics of one gradient set: sum of vectors, count, sum of norms.
struct SetStats {
  std::vector<double> sum;
  std::size_t count = 0;
  double magnitude_sum = 0.0;

  void add(std::span<const double> g);
  double mean_magnitude() const;
  static SetStats merge(const SetStats& a, const SetStats& b);
};

class GradientLedger {
 public:
  explicit GradientLedger(std::size_t dim = 0);

  std::size_t dim() const { return dim_; }

  void record_fake(std::span<const double> g);
  // Appends to R1 or R2 by a fair coin drawn from `rng`; returns 1 or 2.
  int record_regular(std::span<const double> g, Rng& rng);

  const SetStats& fake() const { return fake_; }
  const SetStats& r1() const { return r1_; }
  const SetStats& r2() const { return r2_; }
  // R = R1 u R2, formed by merging the two running sums.
  SetStats regular() const { return SetStats::merge(r1_, r2_); }

  // Number of doubles held by the ledger. Independent of how many gradients
  // were recorded.
  std::size_t stored_doubles() const;

 private:
  void check_dim(std::span<const double> g);

  std::size_t dim_;
  SetStats fake_;
  SetStats r1_;
  SetStats r2_;
};

// |mean ||a|| - mean ||b|||. Throws UndefinedStatistic if either set is empty.
double compute_d(const SetStats& a, const SetStats& b);

// Angle between the two sum vectors, in [0, pi]. The cosine is clamped to
// [-1, 1]. Throws UndefinedStatistic if either sum is the zero vector.
double compute_theta(const SetStats& a, const SetStats& b);

struct ScoreComponents {
  double theta_fr = 0.0;
  double theta_r1r2 = 0.0;
  double d_fr = 0.0;
  double d_r1r2 = 0.0;
  double s = 0.0;
};

double combine_s(double theta_fr, double d_fr, double theta_r1r2, double d_r1r2, double epsilon);

// Requires F, R1 and R2 to be non-empty with non-zero sums.
ScoreComponents compute_s(const GradientLedger& ledger, double epsilon);

// sigmoid(alpha * s)^beta, in (0, 1).
double compute_sg(double s, double alpha, double beta);

struct ScoreParams {
  double alpha = 5.0;
  double beta = 2.0;
  double epsilon = 1e-8;
  double threshold = 0.9;

  void validate() const;
};

enum class Verdict { kHonest, kAttack, kUndecided };
std::string to_string(Verdict v);

// Attack iff the last score after `start` is below the threshold.
Verdict policy_fast(std::span<const double> scores, std::size_t start, double threshold = 0.9);

// Attack iff the mean of the last k scores is below the threshold;
// Undecided with fewer than k scores.
Verdict policy_avg_k(std::span<const double> scores, std::size_t k, double threshold = 0.9);

// Splits the first groups*group_size scores into consecutive groups; each
// group whose mean is below the threshold casts a vote. Attack iff
// votes > groups / 2. Undecided when there are too few scores.
Verdict policy_voting(std::span<const double> scores, std::size_t groups, std::size_t group_size,
                      double threshold = 0.9);

enum class PolicyKind { kFast, kAvgK, kVoting };

struct PolicySpec {
  PolicyKind kind = PolicyKind::kVoting;
  std::size_t start = 0;       // Fast
  std::size_t k = 10;          // Avg-k
  std::size_t groups = 10;     // Voting
  std::size_t group_size = 5;  // Voting

  std::string name() const;
  static PolicySpec parse(const std::string& name);
};

Verdict evaluate_policy(const PolicySpec& policy, std::span<const double> scores,
                        double threshold);

// Expected accuracy on a fake batch: A (1 - B_F) + B_F (1 - A) / L.
// Throws InvalidInput unless A in [1/L, 1], B_F in [0, 1], L >= 2.
double expected_fake_accuracy(double accuracy, double fake_share, int num_classes);

enum class Action { kKeepTraining, kWait, kIncreaseBF, kIncreaseN, kStopAttack };
std::string to_string(Action a);

struct DecisionParams {
  double delta = 0.05;                // |A - A_F| < delta means "A ~ A_F"
  bool increase_n_when_ambiguous = false;
};

struct Decision {
  Action action = Action::kKeepTraining;
  bool suggest_increase_n = false;
  bool accuracy_missing = false;  // fell back to the policy verdict alone
};

// Client decision procedure, applied after each fake batch:
//   scores high                 -> keep training
//   scores low, A ~ A_F         -> increase B_F (wait if B_F is already 1)
//   scores low, A far from A_F  -> stop, the server is attacking
// "Low" is an Attack verdict from `policy`; an Undecided verdict counts as high.
Decision make_decision(std::span<const double> scores, const PolicySpec& policy,
                       const ScoreParams& params, std::optional<double> accuracy,
                       std::optional<double> fake_accuracy, double fake_share,
                       const DecisionParams& decision);

struct DetectorConfig {
  ScoreParams score;
  std::vector<PolicySpec> policies = {PolicySpec{PolicyKind::kFast},
                                      PolicySpec{PolicyKind::kAvgK},
                                      PolicySpec{PolicyKind::kVoting}};
  std::size_t decision_policy = 2;  // index into policies
  DecisionParams decision;
  std::size_t start_index = 20;  // N
  double fake_share = 1.0;       // B_F, used for A_F
  int num_classes = 10;
  bool adaptive_fake_share = false;  // apply IncreaseBF decisions to fake_share
};

struct ScoreEntry {
  std::size_t fake_ordinal = 0;  // 1-based count of fake batches seen
  std::uint64_t batch_index = 0;
  ScoreComponents components;
  double sg = 0.0;
  std::vector<Verdict> verdicts;  // one per configured policy, at this point
  Decision decision;
};

struct PolicyOutcome {
  PolicySpec policy;
  Verdict verdict = Verdict::kUndecided;
  // Batch index at which the policy first reported an attack.
  std::optional<std::uint64_t> detection_batch;
};

struct DetectionReport {
  std::vector<ScoreEntry> trace;
  std::vector<PolicyOutcome> policies;
  Verdict final_decision = Verdict::kUndecided;
  std::size_t fake_batches = 0;
  std::size_t skipped_scores = 0;  // fake batches whose score was undefined
  bool accuracy_fallback = false;
  std::optional<std::uint64_t> stop_batch;  // first StopAttack decision

  std::vector<double> sg_values() const;
  double mean_last_sg(std::size_t n) const;
  std::string to_csv() const;
};

class SplitGuardDetector {
 public:
  SplitGuardDetector(DetectorConfig config, std::uint64_t seed);

  // Feed the first-layer gradient of batch `batch_index`. Batches before the
  // start index are ignored. After a fake batch a score is computed when
  // defined, all policies are re-evaluated and a decision is taken.
  void observe(std::span<const double> gradient, std::uint64_t batch_index, bool fake,
               std::optional<double> accuracy_estimate = std::nullopt);

  const GradientLedger& ledger() const { return ledger_; }
  const DetectionReport& report() const { return report_; }
  const DetectorConfig& config() const { return config_; }
  double fake_share() const { return config_.fake_share; }

 private:
  void score_fake_batch(std::uint64_t batch_index, std::optional<double> accuracy);

  DetectorConfig config_;
  Rng rng_;
  GradientLedger ledger_;
  std::vector<double> scores_;
  DetectionReport report_;
};

}  // namespace sglab
