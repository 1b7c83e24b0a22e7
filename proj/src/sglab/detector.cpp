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
#include "sglab/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sglab/error.hpp"
#include "sglab/tensor.hpp"

namespace sglab {

void SetStats::add(std::span<const double> g) {
  if (sum.empty()) sum.assign(g.size(), 0.0);
  axpy(1.0, g, sum);
  ++count;
  magnitude_sum += norm(g);
}

double SetStats::mean_magnitude() const {
  if (count == 0) throw UndefinedStatistic("mean magnitude of an empty gradient set");
  return magnitude_sum / static_cast<double>(count);
}

SetStats SetStats::merge(const SetStats& a, const SetStats& b) {
  SetStats m;
  m.sum = a.sum.empty() ? b.sum : a.sum;
  if (!a.sum.empty() && !b.sum.empty()) axpy(1.0, b.sum, m.sum);
  m.count = a.count + b.count;
  m.magnitude_sum = a.magnitude_sum + b.magnitude_sum;
  return m;
}

GradientLedger::GradientLedger(std::size_t dim) : dim_(dim) {
  if (dim_ > 0) {
    fake_.sum.assign(dim_, 0.0);
    r1_.sum.assign(dim_, 0.0);
    r2_.sum.assign(dim_, 0.0);
  }
}

void GradientLedger::check_dim(std::span<const double> g) {
  if (dim_ == 0) {
    dim_ = g.size();
    fake_.sum.assign(dim_, 0.0);
    r1_.sum.assign(dim_, 0.0);
    r2_.sum.assign(dim_, 0.0);
  }
  if (g.size() != dim_) {
    throw InvalidInput("gradient has " + std::to_string(g.size()) + " entries, ledger expects " +
                       std::to_string(dim_));
  }
}

void GradientLedger::record_fake(std::span<const double> g) {
  check_dim(g);
  fake_.add(g);
}

int GradientLedger::record_regular(std::span<const double> g, Rng& rng) {
  check_dim(g);
  if (rng.bernoulli(0.5)) {
    r1_.add(g);
    return 1;
  }
  r2_.add(g);
  return 2;
}

std::size_t GradientLedger::stored_doubles() const {
  // Per set: the sum vector plus magnitude sum (count is an integer slot).
  return fake_.sum.capacity() + r1_.sum.capacity() + r2_.sum.capacity() + 3 * 2;
}

double compute_d(const SetStats& a, const SetStats& b) {
  return std::abs(a.mean_magnitude() - b.mean_magnitude());
}

double compute_theta(const SetStats& a, const SetStats& b) {
  if (a.count == 0 || b.count == 0) throw UndefinedStatistic("angle with an empty gradient set");
  const double na = norm(a.sum);
  const double nb = norm(b.sum);
  if (na == 0.0 || nb == 0.0) throw UndefinedStatistic("angle with a zero sum vector");
  const double cosine = std::clamp(dot(a.sum, b.sum) / (na * nb), -1.0, 1.0);
  return std::acos(cosine);
}

double combine_s(double theta_fr, double d_fr, double theta_r1r2, double d_r1r2,
                 double epsilon) {
  return (theta_fr * d_fr - theta_r1r2 * d_r1r2) / (d_fr + d_r1r2 + epsilon);
}

ScoreComponents compute_s(const GradientLedger& ledger, double epsilon) {
  const SetStats r = ledger.regular();
  ScoreComponents c;
  c.d_fr = compute_d(ledger.fake(), r);
  c.d_r1r2 = compute_d(ledger.r1(), ledger.r2());
  c.theta_fr = compute_theta(ledger.fake(), r);
  c.theta_r1r2 = compute_theta(ledger.r1(), ledger.r2());
  c.s = combine_s(c.theta_fr, c.d_fr, c.theta_r1r2, c.d_r1r2, epsilon);
  return c;
}

double compute_sg(double s, double alpha, double beta) {
  const double sigma = 1.0 / (1.0 + std::exp(-alpha * s));
  return std::pow(sigma, beta);
}

void ScoreParams::validate() const {
  if (!(alpha > 0.0)) throw InvalidInput("alpha must be positive");
  if (!(beta > 0.0)) throw InvalidInput("beta must be positive");
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidInput("threshold must lie in (0, 1)");
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kHonest:
      return "honest";
    case Verdict::kAttack:
      return "attack";
    case Verdict::kUndecided:
      return "undecided";
  }
  return "undecided";
}

Verdict policy_fast(std::span<const double> scores, std::size_t start, double threshold) {
  if (scores.size() <= start) return Verdict::kUndecided;
  return scores.back() < threshold ? Verdict::kAttack : Verdict::kHonest;
}

Verdict policy_avg_k(std::span<const double> scores, std::size_t k, double threshold) {
  if (k == 0 || scores.size() < k) return Verdict::kUndecided;
  const auto tail = scores.last(k);
  const double mean = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(k);
  return mean < threshold ? Verdict::kAttack : Verdict::kHonest;
}

Verdict policy_voting(std::span<const double> scores, std::size_t groups, std::size_t group_size,
                      double threshold) {
  if (groups == 0 || group_size == 0 || scores.size() < groups * group_size) {
    return Verdict::kUndecided;
  }
  std::size_t votes = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const auto group = scores.subspan(g * group_size, group_size);
    const double mean =
        std::accumulate(group.begin(), group.end(), 0.0) / static_cast<double>(group_size);
    if (mean < threshold) ++votes;
  }
  // votes > groups / 2, without integer truncation.
  return 2 * votes > groups ? Verdict::kAttack : Verdict::kHonest;
}

std::string PolicySpec::name() const {
  switch (kind) {
    case PolicyKind::kFast:
      return start == 0 ? "fast" : "fast@" + std::to_string(start);
    case PolicyKind::kAvgK:
      return "avg-" + std::to_string(k);
    case PolicyKind::kVoting:
      return "voting-" + std::to_string(groups) + "x" + std::to_string(group_size);
  }
  return "unknown";
}

PolicySpec PolicySpec::parse(const std::string& name) {
  PolicySpec p;
  try {
    if (name == "fast") {
      p.kind = PolicyKind::kFast;
    } else if (name.rfind("fast@", 0) == 0) {
      p.kind = PolicyKind::kFast;
      p.start = std::stoul(name.substr(5));
    } else if (name.rfind("avg-", 0) == 0) {
      p.kind = PolicyKind::kAvgK;
      p.k = std::stoul(name.substr(4));
    } else if (name == "voting") {
      p.kind = PolicyKind::kVoting;
    } else if (name.rfind("voting-", 0) == 0) {
      p.kind = PolicyKind::kVoting;
      const auto rest = name.substr(7);
      const auto x = rest.find('x');
      if (x == std::string::npos) throw InvalidInput("");
      p.groups = std::stoul(rest.substr(0, x));
      p.group_size = std::stoul(rest.substr(x + 1));
    } else {
      throw InvalidInput("");
    }
  } catch (const std::exception&) {
    throw InvalidInput("unknown policy '" + name +
                       "' (expected fast, fast@<i>, avg-<k>, voting or voting-<c>x<n>)");
  }
  if ((p.kind == PolicyKind::kAvgK && p.k == 0) ||
      (p.kind == PolicyKind::kVoting && (p.groups == 0 || p.group_size == 0))) {
    throw InvalidInput("policy '" + name + "' has a zero size parameter");
  }
  return p;
}

Verdict evaluate_policy(const PolicySpec& policy, std::span<const double> scores,
                        double threshold) {
  switch (policy.kind) {
    case PolicyKind::kFast:
      return policy_fast(scores, policy.start, threshold);
    case PolicyKind::kAvgK:
      return policy_avg_k(scores, policy.k, threshold);
    case PolicyKind::kVoting:
      return policy_voting(scores, policy.groups, policy.group_size, threshold);
  }
  return Verdict::kUndecided;
}

double expected_fake_accuracy(double accuracy, double fake_share, int num_classes) {
  if (num_classes < 2) throw InvalidInput("expected fake accuracy needs L >= 2");
  const double L = num_classes;
  if (!(accuracy >= 1.0 / L && accuracy <= 1.0)) {
    throw InvalidInput("accuracy " + std::to_string(accuracy) + " outside [1/L, 1]");
  }
  if (!(fake_share >= 0.0 && fake_share <= 1.0)) throw InvalidInput("B_F outside [0, 1]");
  return accuracy * (1.0 - fake_share) + fake_share * (1.0 - accuracy) / L;
}

std::string to_string(Action a) {
  switch (a) {
    case Action::kKeepTraining:
      return "keep-training";
    case Action::kWait:
      return "wait";
    case Action::kIncreaseBF:
      return "increase-bf";
    case Action::kIncreaseN:
      return "increase-n";
    case Action::kStopAttack:
      return "stop-attack";
  }
  return "keep-training";
}

Decision make_decision(std::span<const double> scores, const PolicySpec& policy,
                       const ScoreParams& params, std::optional<double> accuracy,
                       std::optional<double> fake_accuracy, double fake_share,
                       const DecisionParams& decision) {
  Decision d;
  if (evaluate_policy(policy, scores, params.threshold) != Verdict::kAttack) {
    d.action = Action::kKeepTraining;
    return d;
  }
  if (!accuracy || !fake_accuracy) {
    d.accuracy_missing = true;
    d.action = Action::kStopAttack;
    return d;
  }
  if (std::abs(*accuracy - *fake_accuracy) < decision.delta) {
    d.suggest_increase_n = decision.increase_n_when_ambiguous;
    if (fake_share >= 1.0) {
      d.action = d.suggest_increase_n ? Action::kIncreaseN : Action::kWait;
    } else {
      d.action = Action::kIncreaseBF;
    }
    return d;
  }
  d.action = Action::kStopAttack;
  return d;
}

std::vector<double> DetectionReport::sg_values() const {
  std::vector<double> v;
  v.reserve(trace.size());
  for (const auto& e : trace) v.push_back(e.sg);
  return v;
}

double DetectionReport::mean_last_sg(std::size_t n) const {
  if (trace.empty() || n == 0) throw UndefinedStatistic("no scores recorded");
  const std::size_t m = std::min(n, trace.size());
  double s = 0.0;
  for (std::size_t i = trace.size() - m; i < trace.size(); ++i) s += trace[i].sg;
  return s / static_cast<double>(m);
}

std::string DetectionReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "fake_ordinal,batch_index,theta_FR,theta_R1R2,d_FR,d_R1R2,S,SG";
  for (const auto& p : policies) os << ',' << p.policy.name();
  os << ",action\n";
  for (const auto& e : trace) {
    os << e.fake_ordinal << ',' << e.batch_index << ',' << e.components.theta_fr << ','
       << e.components.theta_r1r2 << ',' << e.components.d_fr << ',' << e.components.d_r1r2
       << ',' << e.components.s << ',' << e.sg;
    for (Verdict v : e.verdicts) os << ',' << to_string(v);
    os << ',' << to_string(e.decision.action) << '\n';
  }
  return os.str();
}

SplitGuardDetector::SplitGuardDetector(DetectorConfig config, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed) {
  config_.score.validate();
  if (config_.policies.empty()) throw InvalidInput("detector needs at least one policy");
  if (config_.decision_policy >= config_.policies.size()) {
    throw InvalidInput("decision_policy index out of range");
  }
  if (config_.num_classes < 2) throw InvalidInput("detector needs L >= 2");
  for (const auto& p : config_.policies) report_.policies.push_back(PolicyOutcome{p, Verdict::kUndecided, std::nullopt});
}

void SplitGuardDetector::observe(std::span<const double> gradient, std::uint64_t batch_index,
                                 bool fake, std::optional<double> accuracy_estimate) {
  if (batch_index < config_.start_index) return;
  if (!fake) {
    ledger_.record_regular(gradient, rng_);
    return;
  }
  ledger_.record_fake(gradient);
  ++report_.fake_batches;
  score_fake_batch(batch_index, accuracy_estimate);
}

void SplitGuardDetector::score_fake_batch(std::uint64_t batch_index,
                                          std::optional<double> accuracy) {
  ScoreEntry entry;
  entry.fake_ordinal = report_.fake_batches;
  entry.batch_index = batch_index;
  try {
    entry.components = compute_s(ledger_, config_.score.epsilon);
  } catch (const UndefinedStatistic&) {
    ++report_.skipped_scores;
    return;
  }
  if (!(std::abs(entry.components.s) <= std::numbers::pi)) {
    throw StateError("score S left [-pi, pi]: " + std::to_string(entry.components.s));
  }
  entry.sg = compute_sg(entry.components.s, config_.score.alpha, config_.score.beta);
  scores_.push_back(entry.sg);

  for (auto& outcome : report_.policies) {
    const Verdict v = evaluate_policy(outcome.policy, scores_, config_.score.threshold);
    entry.verdicts.push_back(v);
    if (v == Verdict::kAttack && !outcome.detection_batch) outcome.detection_batch = batch_index;
    if (v != Verdict::kUndecided) outcome.verdict = outcome.detection_batch ? Verdict::kAttack : v;
  }

  std::optional<double> fake_accuracy;
  if (accuracy) {
    // Below chance the model has learned nothing; treat it as chance level.
    const double a = std::clamp(*accuracy, 1.0 / config_.num_classes, 1.0);
    fake_accuracy = expected_fake_accuracy(a, config_.fake_share, config_.num_classes);
  }
  entry.decision =
      make_decision(scores_, config_.policies[config_.decision_policy], config_.score, accuracy,
                    fake_accuracy, config_.fake_share, config_.decision);
  if (entry.decision.accuracy_missing) report_.accuracy_fallback = true;
  if (entry.decision.action == Action::kStopAttack && !report_.stop_batch) {
    report_.stop_batch = batch_index;
  }
  if (entry.decision.action == Action::kIncreaseBF && config_.adaptive_fake_share) {
    config_.fake_share = std::min(1.0, std::max(2.0 * config_.fake_share, 1.0 / 64.0));
  }
  report_.final_decision = report_.policies[config_.decision_policy].verdict;
  report_.trace.push_back(std::move(entry));
}

}  // namespace sglab
