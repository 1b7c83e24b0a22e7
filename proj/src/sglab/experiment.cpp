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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sglab/checkpoint.hpp"
#include "sglab/error.hpp"
#include "sglab/fsha.hpp"
#include "sglab/protocol.hpp"
#include "sglab/wire.hpp"

namespace sglab {
namespace {

using nlohmann::json;

void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw InvalidInput("config field '" + field + "': " + message);
}

json optimizer_json(const OptimizerConfig& c) {
  return {{"kind", c.kind == OptimizerKind::kAdam ? "adam" : "sgd"},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

OptimizerConfig optimizer_from(const json& j, OptimizerConfig c) {
  if (j.contains("kind")) {
    const auto k = j.at("kind").get<std::string>();
    if (k == "adam") {
      c.kind = OptimizerKind::kAdam;
    } else if (k == "sgd") {
      c.kind = OptimizerKind::kSgd;
    } else {
      throw InvalidInput("config field 'optimizer.kind': expected adam or sgd, got '" + k + "'");
    }
  }
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  return c;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

Verdict verdict_from_string(const std::string& s) {
  if (s == "honest") return Verdict::kHonest;
  if (s == "attack") return Verdict::kAttack;
  if (s == "undecided") return Verdict::kUndecided;
  throw FormatError("unknown verdict '" + s + "'", 0);
}

std::string share_tag(double share) {
  std::ostringstream os;
  os << std::setprecision(6) << share;
  return os.str();
}

// Square image geometry when the example width is a perfect square.
std::optional<std::pair<std::size_t, std::size_t>> image_geometry(const Dataset& d) {
  if (d.image_width && d.image_height) return std::pair{d.image_width, d.image_height};
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d.dims()))));
  if (side * side == d.dims()) return std::pair{side, side};
  return std::nullopt;
}

Model make_server_model(const ExperimentConfig& c, Rng& rng) {
  const Activation out =
      c.topology == Topology::kLabelSharing ? Activation::kIdentity : Activation::kReLU;
  return make_mlp(c.server_widths, Activation::kReLU, out, rng);
}

ClientState make_client_state(const ExperimentConfig& c, Rng& rng) {
  Model model = make_mlp(c.client_widths, Activation::kReLU, Activation::kReLU, rng);
  Optimizer opt(c.client_optimizer, model);
  ClientState state{std::move(model), std::move(opt), std::nullopt, std::nullopt};
  if (c.topology == Topology::kPrivateLabels) {
    Model head = make_mlp(c.head_widths, Activation::kReLU, Activation::kIdentity, rng);
    state.head_optimizer = Optimizer(c.client_optimizer, head);
    state.head = std::move(head);
  }
  return state;
}

std::vector<PolicyResult> combine_policies(const std::vector<DetectionReport>& reports) {
  std::vector<PolicyResult> out;
  const auto& first = reports.front().policies;
  for (std::size_t p = 0; p < first.size(); ++p) {
    PolicyResult r{first[p].policy.name(), Verdict::kHonest, std::nullopt};
    bool all_honest = true;
    for (const auto& rep : reports) {
      const auto& o = rep.policies[p];
      if (o.detection_batch) {
        r.detection_batch = r.detection_batch ? std::min(*r.detection_batch, *o.detection_batch)
                                              : *o.detection_batch;
      }
      all_honest = all_honest && o.verdict == Verdict::kHonest;
    }
    r.verdict = r.detection_batch ? Verdict::kAttack
                                  : (all_honest ? Verdict::kHonest : Verdict::kUndecided);
    out.push_back(std::move(r));
  }
  return out;
}

std::string reconstruction_csv(const std::vector<ReconstructionSample>& samples) {
  std::ostringstream os;
  os << "batch_index,mse\n" << std::setprecision(17);
  for (const auto& s : samples) os << s.batch_index << ',' << s.mse << '\n';
  return os.str();
}

std::string run_dir_name(const ExperimentConfig& c) {
  return "run-" + to_string(c.server) + "-" + to_string(c.topology) + "-bf" +
         share_tag(c.fake_label_share) + "-seed" + std::to_string(c.seed);
}

template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(n, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < n; i = next++) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::string to_string(ServerKind k) { return k == ServerKind::kHonest ? "honest" : "fsha"; }

ServerKind server_kind_from_string(const std::string& s) {
  if (s == "honest") return ServerKind::kHonest;
  if (s == "fsha") return ServerKind::kFsha;
  throw InvalidInput("unknown server behavior '" + s + "' (expected honest or fsha)");
}

std::string to_string(Transport t) { return t == Transport::kInProcess ? "in-process" : "socket"; }

Transport transport_from_string(const std::string& s) {
  if (s == "in-process") return Transport::kInProcess;
  if (s == "socket") return Transport::kSocket;
  throw InvalidInput("unknown transport '" + s + "' (expected in-process or socket)");
}

void ExperimentConfig::validate() const {
  require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction", "must be in (0, 1)");
  require(public_fraction >= 0.0 && test_fraction + public_fraction < 1.0, "public_fraction",
          "must be non-negative with test_fraction + public_fraction < 1");
  require(server != ServerKind::kFsha || public_fraction > 0.0, "public_fraction",
          "an fsha server needs public data");
  require(client_widths.size() >= 2, "client_widths", "needs at least two entries");
  require(server_widths.size() >= 2, "server_widths", "needs at least two entries");
  require(server_widths.front() == client_widths.back(), "server_widths",
          "first width must equal the last client width");
  for (auto w : client_widths) require(w > 0, "client_widths", "widths must be positive");
  for (auto w : server_widths) require(w > 0, "server_widths", "widths must be positive");
  if (dataset.kind == DatasetSpec::Kind::kSynth) {
    require(client_widths.front() == dataset.synth.dims, "client_widths",
            "first width must equal the dataset dimension");
    if (topology == Topology::kLabelSharing) {
      require(server_widths.back() == static_cast<std::size_t>(dataset.synth.classes),
              "server_widths", "last width must equal the class count in label-sharing mode");
    }
  }
  if (topology == Topology::kPrivateLabels) {
    require(head_widths.size() >= 2, "head_widths", "needs at least two entries");
    require(head_widths.front() == server_widths.back(), "head_widths",
            "first width must equal the last server width");
    if (dataset.kind == DatasetSpec::Kind::kSynth) {
      require(head_widths.back() == static_cast<std::size_t>(dataset.synth.classes),
              "head_widths", "last width must equal the class count");
    }
  }
  require(client_optimizer.learning_rate > 0.0, "client_optimizer.learning_rate", "must be > 0");
  require(server_optimizer.learning_rate > 0.0, "server_optimizer.learning_rate", "must be > 0");
  require(batch_size > 0, "batch_size", "must be positive");
  require(fake_probability >= 0.0 && fake_probability <= 1.0, "fake_probability",
          "must be in [0, 1]");
  require(fake_label_share >= 0.0 && fake_label_share <= 1.0, "fake_label_share",
          "must be in [0, 1]");
  try {
    score.validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string("config field 'score': ") + e.what());
  }
  require(!policies.empty(), "policies", "needs at least one policy");
  require(decision_policy < policies.size(), "decision_policy", "index out of range");
  require(decision.delta >= 0.0, "decision.delta", "must be non-negative");
  require(clients > 0, "clients", "must be positive");
  require(epochs > 0, "epochs", "must be positive");
  require(runs > 0, "runs", "must be positive");
  require(fsha_distinguisher_lr > 0.0, "fsha_distinguisher_lr", "must be > 0");
  require(fsha_autoencoder_lr > 0.0, "fsha_autoencoder_lr", "must be > 0");
  require(fsha_loss == "printed" || fsha_loss == "log-likelihood", "fsha_loss",
          "expected printed or log-likelihood");
  require(reconstruction_every > 0, "reconstruction_every", "must be positive");
}

std::string ExperimentConfig::to_json() const {
  json policy_names = json::array();
  for (const auto& p : policies) policy_names.push_back(p.name());
  json j = {
      {"dataset", dataset.to_string()},
      {"data_seed", data_seed},
      {"test_fraction", test_fraction},
      {"public_fraction", public_fraction},
      {"topology", to_string(topology)},
      {"server", to_string(server)},
      {"transport", to_string(transport)},
      {"client_widths", client_widths},
      {"server_widths", server_widths},
      {"head_widths", head_widths},
      {"client_optimizer", optimizer_json(client_optimizer)},
      {"server_optimizer", optimizer_json(server_optimizer)},
      {"batch_size", batch_size},
      {"fake_probability", fake_probability},
      {"fake_label_share", fake_label_share},
      {"start_index", start_index},
      {"score",
       {{"alpha", score.alpha},
        {"beta", score.beta},
        {"epsilon", score.epsilon},
        {"threshold", score.threshold}}},
      {"policies", policy_names},
      {"decision_policy", decision_policy},
      {"decision",
       {{"delta", decision.delta},
        {"increase_n_when_ambiguous", decision.increase_n_when_ambiguous}}},
      {"adaptive_fake_share", adaptive_fake_share},
      {"clients", clients},
      {"epochs", epochs},
      {"runs", runs},
      {"seed", seed},
      {"fsha_setup_epochs", fsha_setup_epochs},
      {"fsha_distinguisher_lr", fsha_distinguisher_lr},
      {"fsha_autoencoder_lr", fsha_autoencoder_lr},
      {"fsha_loss", fsha_loss},
      {"fsha_shared_init", fsha_shared_init},
      {"reconstruction_every", reconstruction_every},
      {"reconstruction_images", reconstruction_images},
      {"output_dir", output_dir},
  };
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw FormatError("config must be a JSON object", 0);
  static const char* const kKnown[] = {
      "dataset", "data_seed", "test_fraction", "public_fraction", "topology", "server",
      "transport", "client_widths", "server_widths", "head_widths", "client_optimizer",
      "server_optimizer", "batch_size", "fake_probability", "fake_label_share", "start_index",
      "score", "policies", "decision_policy", "decision", "adaptive_fake_share", "clients",
      "epochs", "runs", "seed", "fsha_setup_epochs", "fsha_distinguisher_lr",
      "fsha_autoencoder_lr", "fsha_loss", "fsha_shared_init", "reconstruction_every", "reconstruction_images", "output_dir"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw InvalidInput("config field '" + key + "': unknown field");
    }
  }
  ExperimentConfig c;
  std::string field;
  try {
    field = "dataset";
    if (j.contains(field)) c.dataset = parse_dataset_spec(j.at(field).get<std::string>());
    field = "data_seed";
    c.data_seed = j.value(field, c.data_seed);
    field = "test_fraction";
    c.test_fraction = j.value(field, c.test_fraction);
    field = "public_fraction";
    c.public_fraction = j.value(field, c.public_fraction);
    field = "topology";
    if (j.contains(field)) c.topology = topology_from_string(j.at(field).get<std::string>());
    field = "server";
    if (j.contains(field)) c.server = server_kind_from_string(j.at(field).get<std::string>());
    field = "transport";
    if (j.contains(field)) c.transport = transport_from_string(j.at(field).get<std::string>());
    field = "client_widths";
    c.client_widths = j.value(field, c.client_widths);
    field = "server_widths";
    c.server_widths = j.value(field, c.server_widths);
    field = "head_widths";
    c.head_widths = j.value(field, c.head_widths);
    field = "client_optimizer";
    if (j.contains(field)) c.client_optimizer = optimizer_from(j.at(field), c.client_optimizer);
    field = "server_optimizer";
    if (j.contains(field)) c.server_optimizer = optimizer_from(j.at(field), c.server_optimizer);
    field = "batch_size";
    c.batch_size = j.value(field, c.batch_size);
    field = "fake_probability";
    c.fake_probability = j.value(field, c.fake_probability);
    field = "fake_label_share";
    c.fake_label_share = j.value(field, c.fake_label_share);
    field = "start_index";
    c.start_index = j.value(field, c.start_index);
    field = "score";
    if (j.contains(field)) {
      const auto& s = j.at(field);
      c.score.alpha = s.value("alpha", c.score.alpha);
      c.score.beta = s.value("beta", c.score.beta);
      c.score.epsilon = s.value("epsilon", c.score.epsilon);
      c.score.threshold = s.value("threshold", c.score.threshold);
    }
    field = "policies";
    if (j.contains(field)) {
      c.policies.clear();
      for (const auto& p : j.at(field)) c.policies.push_back(PolicySpec::parse(p.get<std::string>()));
    }
    field = "decision_policy";
    c.decision_policy = j.value(field, c.decision_policy);
    field = "decision";
    if (j.contains(field)) {
      const auto& d = j.at(field);
      c.decision.delta = d.value("delta", c.decision.delta);
      c.decision.increase_n_when_ambiguous =
          d.value("increase_n_when_ambiguous", c.decision.increase_n_when_ambiguous);
    }
    field = "adaptive_fake_share";
    c.adaptive_fake_share = j.value(field, c.adaptive_fake_share);
    field = "clients";
    c.clients = j.value(field, c.clients);
    field = "epochs";
    c.epochs = j.value(field, c.epochs);
    field = "runs";
    c.runs = j.value(field, c.runs);
    field = "seed";
    c.seed = j.value(field, c.seed);
    field = "fsha_setup_epochs";
    c.fsha_setup_epochs = j.value(field, c.fsha_setup_epochs);
    field = "fsha_distinguisher_lr";
    c.fsha_distinguisher_lr = j.value(field, c.fsha_distinguisher_lr);
    field = "fsha_autoencoder_lr";
    c.fsha_autoencoder_lr = j.value(field, c.fsha_autoencoder_lr);
    field = "fsha_loss";
    c.fsha_loss = j.value(field, c.fsha_loss);
    field = "fsha_shared_init";
    c.fsha_shared_init = j.value(field, c.fsha_shared_init);
    field = "reconstruction_every";
    c.reconstruction_every = j.value(field, c.reconstruction_every);
    field = "reconstruction_images";
    c.reconstruction_images = j.value(field, c.reconstruction_images);
    field = "output_dir";
    c.output_dir = j.value(field, c.output_dir);
  } catch (const json::exception& e) {
    throw InvalidInput("config field '" + field + "': " + e.what());
  } catch (const InvalidInput& e) {
    const std::string what = e.what();
    if (what.rfind("config field", 0) == 0) throw;
    throw InvalidInput("config field '" + field + "': " + what);
  }
  c.validate();
  return c;
}

const PolicyResult* RunSummary::find_policy(const std::string& name) const {
  for (const auto& p : policies) {
    if (p.policy == name) return &p;
  }
  return nullptr;
}

std::string RunSummary::to_json() const {
  json pol = json::array();
  for (const auto& p : policies) {
    pol.push_back({{"policy", p.policy},
                   {"verdict", to_string(p.verdict)},
                   {"detection_batch", optional_json(p.detection_batch)}});
  }
  json rec = json::array();
  for (const auto& r : reconstruction_mse) rec.push_back({{"batch", r.batch_index}, {"mse", r.mse}});
  json j = {{"format", "sglab-run-summary"},
            {"version", 1},
            {"seed", seed},
            {"server", to_string(server)},
            {"topology", to_string(topology)},
            {"fake_label_share", fake_label_share},
            {"test_accuracy", optional_json(test_accuracy)},
            {"policies", pol},
            {"final_action", final_action},
            {"stop_batch", optional_json(stop_batch)},
            {"batches", batches},
            {"fake_batches", fake_batches},
            {"sg_trace", sg_trace},
            {"mean_last10_sg", optional_json(mean_last10_sg)},
            {"reconstruction_mse", rec},
            {"score_csv", score_csv},
            {"run_dir", run_dir}};
  return j.dump(2);
}

RunSummary RunSummary::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("summary is not valid JSON: ") + e.what(), e.byte);
  }
  try {
    if (j.at("format") != "sglab-run-summary" || j.at("version") != 1) {
      throw FormatError("not an sglab-run-summary version 1 document", 0);
    }
    RunSummary s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.server = server_kind_from_string(j.at("server").get<std::string>());
    s.topology = topology_from_string(j.at("topology").get<std::string>());
    s.fake_label_share = j.at("fake_label_share").get<double>();
    s.test_accuracy = optional_from<double>(j, "test_accuracy");
    for (const auto& p : j.at("policies")) {
      s.policies.push_back(PolicyResult{p.at("policy").get<std::string>(),
                                        verdict_from_string(p.at("verdict").get<std::string>()),
                                        optional_from<std::uint64_t>(p, "detection_batch")});
    }
    s.final_action = j.at("final_action").get<std::string>();
    s.stop_batch = optional_from<std::uint64_t>(j, "stop_batch");
    s.batches = j.at("batches").get<std::size_t>();
    s.fake_batches = j.at("fake_batches").get<std::size_t>();
    s.sg_trace = j.at("sg_trace").get<std::vector<double>>();
    s.mean_last10_sg = optional_from<double>(j, "mean_last10_sg");
    for (const auto& r : j.at("reconstruction_mse")) {
      s.reconstruction_mse.push_back({r.at("batch").get<std::uint64_t>(), r.at("mse").get<double>()});
    }
    s.score_csv = j.at("score_csv").get<std::string>();
    s.run_dir = j.at("run_dir").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed summary: ") + e.what(), 0);
  }
}

std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("SGLAB_OUTPUT_ROOT"); root && *root) {
      return std::filesystem::path(root) / p;
    }
  }
  return p;
}

RunResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Dataset data = load_dataset(config.dataset, config.data_seed);
  const int num_classes = data.num_classes;
  if (config.client_widths.front() != data.dims()) {
    throw InvalidInput("config field 'client_widths': first width must equal the dataset dimension " +
                       std::to_string(data.dims()));
  }
  const std::size_t out_width = config.topology == Topology::kLabelSharing
                                    ? config.server_widths.back()
                                    : config.head_widths.back();
  if (out_width != static_cast<std::size_t>(num_classes)) {
    throw InvalidInput("config field '" +
                       std::string(config.topology == Topology::kLabelSharing ? "server_widths"
                                                                              : "head_widths") +
                       "': last width must equal the class count " + std::to_string(num_classes));
  }
  const DatasetSplit split =
      split_dataset(data, config.test_fraction, config.public_fraction, config.data_seed ^ 0x51u);
  const std::vector<Dataset> shards = shard_dataset(split.train, config.clients);

  Rng rng(config.seed);
  std::vector<ClientSession> sessions;
  const ClientState initial = make_client_state(config, rng);
  {
    for (std::size_t c = 0; c < config.clients; ++c) {
      DetectorConfig dc;
      dc.score = config.score;
      dc.policies = config.policies;
      dc.decision_policy = config.decision_policy;
      dc.decision = config.decision;
      dc.start_index = config.start_index;
      dc.fake_share = config.fake_label_share;
      dc.num_classes = num_classes;
      dc.adaptive_fake_share = config.adaptive_fake_share;
      BatchPlan plan;
      plan.batch_size = config.batch_size;
      plan.fake_probability = config.fake_probability;
      plan.fake_label_share = config.fake_label_share;
      plan.start_index = config.start_index;
      plan.seed = rng.fork();
      std::optional<LinearProbe> probe;
      if (config.topology == Topology::kLabelSharing) {
        probe.emplace(config.client_widths.back(), num_classes, 1e-2, rng);
      }
      sessions.push_back(ClientSession{initial, config.topology, plan, num_classes,
                                       SplitGuardDetector(dc, rng.fork()), Rng(rng.fork()),
                                       std::move(probe), RollingMean(20), 0, 0});
    }
  }

  std::optional<HonestServer> honest;
  std::optional<FshaServer> attacker;
  ServerBehavior* behavior = nullptr;
  if (config.server == ServerKind::kHonest) {
    honest.emplace(make_server_model(config, rng), config.server_optimizer, config.topology);
    behavior = &*honest;
  } else {
    FshaConfig fc;
    fc.encoder_widths = config.client_widths;
    fc.facade_output = config.server_widths.back();
    fc.autoencoder_optimizer.learning_rate = config.fsha_autoencoder_lr;
    fc.distinguisher_optimizer.learning_rate = config.fsha_distinguisher_lr;
    fc.setup_batch_size = config.batch_size;
    fc.attack_batch_size = config.batch_size;
    fc.seed = rng.fork();
    fc.loss = hijack_loss_from_string(config.fsha_loss);
    if (config.fsha_shared_init) fc.initial_encoder = initial.model;
    attacker.emplace(fc, split.pub, config.topology);
    attacker->setup_phase(config.fsha_setup_epochs);
    behavior = &*attacker;
  }

  RunSummary summary;
  summary.seed = config.seed;
  summary.server = config.server;
  summary.topology = config.topology;
  summary.fake_label_share = config.fake_label_share;

  BatchCallback on_batch = [&](const BatchContext& ctx) {
    ++summary.batches;
    if (attacker && ctx.batch_index % config.reconstruction_every == 0) {
      const double mse =
          mse_loss(attacker->reconstruct(ctx.outcome.activations), ctx.inputs).loss;
      summary.reconstruction_mse.push_back({ctx.batch_index, mse});
    }
  };

  std::vector<DetectionReport> reports;
  if (config.transport == Transport::kInProcess) {
    InProcessLink link(*behavior);
    reports = run_round_robin(sessions, shards, link, config.epochs, on_batch);
  } else {
    LocalStreamSession stream(*behavior);
    reports = run_round_robin(sessions, shards, stream.link(), config.epochs, on_batch);
    stream.finish();
  }

  // The client that trained last holds the current client-side model.
  const ClientState& final_state = sessions.back().state;
  if (honest) {
    const Tensor boundary = predict(final_state.model, split.test.examples);
    Tensor scores = predict(honest->model(), boundary);
    if (final_state.head) scores = predict(*final_state.head, scores);
    summary.test_accuracy = accuracy(scores, split.test.labels);
  }

  summary.policies = combine_policies(reports);
  for (const auto& r : reports) summary.fake_batches += r.fake_batches;
  const DetectionReport& primary = reports.front();
  summary.final_action =
      primary.trace.empty() ? to_string(Action::kKeepTraining)
                            : to_string(primary.trace.back().decision.action);
  summary.stop_batch = primary.stop_batch;
  summary.sg_trace = primary.sg_values();
  if (!primary.trace.empty()) summary.mean_last10_sg = primary.mean_last_sg(10);

  if (!config.output_dir.empty()) {
    const auto dir = resolve_output_dir(config.output_dir) / run_dir_name(config);
    std::filesystem::create_directories(dir);
    summary.run_dir = dir.string();
    ExperimentConfig run_config = config;
    run_config.runs = 1;
    write_text_file(dir / "config.json", run_config.to_json());
    for (std::size_t c = 0; c < reports.size(); ++c) {
      const std::string name = c == 0 ? "scores.csv" : "scores-client" + std::to_string(c) + ".csv";
      write_text_file(dir / name, reports[c].to_csv());
    }
    summary.score_csv = "scores.csv";
    if (attacker) {
      write_text_file(dir / "reconstruction_mse.csv", reconstruction_csv(summary.reconstruction_mse));
      const std::size_t n = std::min(config.reconstruction_images, split.test.size());
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
      const Tensor originals = split.test.examples.gather_rows(idx);
      const Tensor recon = attacker->reconstruct(predict(final_state.model, originals));
      save_tensor(originals, dir / "originals.json");
      save_tensor(recon, dir / "reconstructions.json");
      if (auto geo = image_geometry(split.test)) {
        write_pgm_strip(originals, geo->first, geo->second, dir / "originals.pgm");
        write_pgm_strip(recon, geo->first, geo->second, dir / "reconstructions.pgm");
      }
    }
    write_text_file(dir / "summary.json", summary.to_json());
  }
  return RunResult{std::move(summary), std::move(reports)};
}

std::vector<RunSummary> run_series(const ExperimentConfig& config, std::size_t jobs) {
  config.validate();
  std::vector<RunSummary> out(config.runs);
  parallel_for(config.runs, jobs, [&](std::size_t r) {
    ExperimentConfig c = config;
    c.seed = config.seed + r;
    out[r] = run_experiment(c).summary;
  });
  return out;
}

std::vector<DetectionRow> aggregate(const std::vector<RunSummary>& runs) {
  std::vector<DetectionRow> rows;
  std::map<std::string, std::size_t> row_of;
  std::map<std::string, std::pair<std::size_t, std::size_t>> hits;  // tp, fp counts
  std::map<std::string, std::pair<double, std::size_t>> index_sum;
  for (const auto& run : runs) {
    for (const auto& p : run.policies) {
      auto [it, inserted] = row_of.try_emplace(p.policy, rows.size());
      if (inserted) rows.push_back(DetectionRow{p.policy, 0, 0, 0.0, 0.0, std::nullopt});
      DetectionRow& row = rows[it->second];
      const bool flagged = p.verdict == Verdict::kAttack;
      if (run.server == ServerKind::kFsha) {
        ++row.attack_runs;
        if (flagged) {
          ++hits[p.policy].first;
          index_sum[p.policy].first += static_cast<double>(*p.detection_batch);
          ++index_sum[p.policy].second;
        }
      } else {
        ++row.honest_runs;
        if (flagged) ++hits[p.policy].second;
      }
    }
  }
  for (auto& row : rows) {
    const auto [tp, fp] = hits[row.policy];
    if (row.attack_runs) row.tp_rate = static_cast<double>(tp) / static_cast<double>(row.attack_runs);
    if (row.honest_runs) row.fp_rate = static_cast<double>(fp) / static_cast<double>(row.honest_runs);
    const auto [sum, n] = index_sum[row.policy];
    if (n) row.mean_detection_index = sum / static_cast<double>(n);
  }
  return rows;
}

std::string detection_table_csv(const std::vector<DetectionRow>& rows) {
  std::ostringstream os;
  os << "policy,attack_runs,honest_runs,tp_rate,fp_rate,mean_detection_index\n"
     << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.policy << ',' << r.attack_runs << ',' << r.honest_runs << ',' << r.tp_rate << ','
       << r.fp_rate << ',';
    if (r.mean_detection_index) os << *r.mean_detection_index;
    os << '\n';
  }
  return os.str();
}

std::vector<AccuracyRow> accuracy_impact(const ExperimentConfig& config,
                                         const std::vector<double>& grid, std::size_t jobs) {
  if (config.server != ServerKind::kHonest) {
    throw InvalidInput("config field 'server': accuracy impact needs an honest server");
  }
  std::vector<AccuracyRow> rows;
  for (double share : grid) {
    ExperimentConfig c = config;
    c.fake_label_share = share;
    const auto runs = run_series(c, jobs);
    AccuracyRow row{share, runs.size(), 0.0};
    for (const auto& r : runs) row.mean_accuracy += *r.test_accuracy;
    row.mean_accuracy /= static_cast<double>(runs.size());
    rows.push_back(row);
  }
  return rows;
}

double accuracy_spread(const std::vector<AccuracyRow>& rows) {
  if (rows.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(
      rows.begin(), rows.end(),
      [](const AccuracyRow& a, const AccuracyRow& b) { return a.mean_accuracy < b.mean_accuracy; });
  return hi->mean_accuracy - lo->mean_accuracy;
}

double ClaimsReport::theta_fraction() const {
  return checkpoints ? static_cast<double>(theta_holds) / static_cast<double>(checkpoints) : 0.0;
}

double ClaimsReport::d_fraction() const {
  return checkpoints ? static_cast<double>(d_holds) / static_cast<double>(checkpoints) : 0.0;
}

ClaimsReport claims_check(const ExperimentConfig& config, std::size_t skip, std::size_t jobs) {
  if (config.server != ServerKind::kHonest) {
    throw InvalidInput("config field 'server': the claims check needs an honest server");
  }
  std::vector<ClaimsReport> per_run(config.runs);
  parallel_for(config.runs, jobs, [&](std::size_t r) {
    ExperimentConfig c = config;
    c.seed = config.seed + r;
    const RunResult result = run_experiment(c);
    for (const auto& report : result.reports) {
      for (const auto& e : report.trace) {
        if (e.fake_ordinal <= skip) continue;
        ++per_run[r].checkpoints;
        per_run[r].theta_holds += e.components.theta_fr > e.components.theta_r1r2;
        per_run[r].d_holds += e.components.d_fr > e.components.d_r1r2;
      }
    }
  });
  ClaimsReport total;
  for (const auto& r : per_run) {
    total.checkpoints += r.checkpoints;
    total.theta_holds += r.theta_holds;
    total.d_holds += r.d_holds;
  }
  return total;
}

std::vector<std::string> audit_run_directory(const std::filesystem::path& dir, bool attack_run) {
  std::vector<std::string> required = {"config.json", "scores.csv", "summary.json"};
  if (attack_run) {
    required.insert(required.end(),
                    {"reconstruction_mse.csv", "originals.json", "reconstructions.json"});
  }
  std::vector<std::string> missing;
  for (const auto& f : required) {
    if (!std::filesystem::is_regular_file(dir / f)) missing.push_back(f);
  }
  return missing;
}

std::vector<RunSummary> load_summaries(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == "summary.json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RunSummary> out;
  for (const auto& f : files) out.push_back(RunSummary::from_json(read_text_file(f)));
  return out;
}

}  // namespace sglab
