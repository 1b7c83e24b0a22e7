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

// Command-line front end. Talks to the library only through sglab.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sglab/sglab.h"

namespace {

using nlohmann::json;

// Exit codes: 0 success, 1 library error, 2 usage error, 3 a checked
// threshold was not met.
constexpr int kLibraryError = 1;
constexpr int kUsageError = 2;
constexpr int kThresholdFailed = 3;

struct Failure {
  sglab_status status;
  std::string message;
};

void check(sglab_status s) {
  if (s != SGLAB_OK) throw Failure{s, sglab_last_error()};
}

std::string take(char* s) {
  std::string out(s ? s : "");
  sglab_string_free(s);
  return out;
}

struct ConfigDeleter {
  void operator()(sglab_config* c) const { sglab_config_free(c); }
};
struct RunSetDeleter {
  void operator()(sglab_run_set* r) const { sglab_run_set_free(r); }
};
using ConfigPtr = std::unique_ptr<sglab_config, ConfigDeleter>;
using RunSetPtr = std::unique_ptr<sglab_run_set, RunSetDeleter>;

// Flags shared by every subcommand that builds an experiment config.
struct ConfigFlags {
  std::string file;
  std::optional<std::string> dataset;
  std::optional<std::string> topology;
  std::optional<std::string> server;
  std::optional<std::string> transport;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> clients;
  std::optional<std::size_t> batch_size;
  std::optional<double> fake_probability;
  std::optional<double> fake_label_share;
  std::optional<std::size_t> start_index;
  std::optional<std::string> fsha_loss;
  std::optional<std::string> output;
  std::vector<std::string> policies;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", file, "JSON config file; flags override its fields")
        ->check(CLI::ExistingFile);
    app->add_option("--dataset", dataset, "synth:L,D,N,SPREAD or idx:IMAGES,LABELS");
    app->add_option("--topology", topology, "label-sharing or private-labels");
    app->add_option("--server", server, "honest or fsha");
    app->add_option("--transport", transport, "in-process or socket");
    app->add_option("--epochs", epochs);
    app->add_option("--runs", runs);
    app->add_option("--seed", seed, "seed of the first run");
    app->add_option("--clients", clients);
    app->add_option("--batch-size", batch_size);
    app->add_option("--fake-probability", fake_probability, "P_F");
    app->add_option("--fake-label-share", fake_label_share, "B_F");
    app->add_option("--start-index", start_index, "N");
    app->add_option("--fsha-loss", fsha_loss, "log-likelihood or printed");
    app->add_option("--policy", policies, "detection policy; repeatable");
    app->add_option("-o,--output", output, "artifact directory");
  }

  ConfigPtr build() const {
    json j = json::object();
    if (!file.empty()) {
      std::ifstream in(file);
      std::stringstream ss;
      ss << in.rdbuf();
      j = json::parse(ss.str());
    }
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    set("dataset", dataset);
    set("topology", topology);
    set("server", server);
    set("transport", transport);
    set("epochs", epochs);
    set("runs", runs);
    set("seed", seed);
    set("clients", clients);
    set("batch_size", batch_size);
    set("fake_probability", fake_probability);
    set("fake_label_share", fake_label_share);
    set("start_index", start_index);
    set("fsha_loss", fsha_loss);
    set("output_dir", output);
    if (!policies.empty()) {
      j["policies"] = policies;
      if (!j.contains("decision_policy")) j["decision_policy"] = policies.size() - 1;
    }
    sglab_config* raw = nullptr;
    check(sglab_config_from_json(j.dump().c_str(), &raw));
    return ConfigPtr(raw);
  }
};

std::size_t default_jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

void print_table(const sglab_run_set* runs) {
  char* csv = nullptr;
  check(sglab_aggregate_csv(runs, &csv));
  std::cout << take(csv);
}

int cmd_run(const ConfigFlags& flags, std::size_t jobs, bool quiet) {
  ConfigPtr config = flags.build();
  sglab_run_set* raw = nullptr;
  check(sglab_run_series(config.get(), jobs, &raw));
  RunSetPtr runs(raw);
  if (!quiet) {
    for (std::size_t i = 0; i < sglab_run_set_size(runs.get()); ++i) {
      char* s = nullptr;
      check(sglab_run_set_summary_json(runs.get(), i, &s));
      const json summary = json::parse(take(s));
      std::cout << "seed " << summary["seed"] << "  final_action "
                << summary["final_action"].get<std::string>() << "  mean_last10_sg "
                << summary["mean_last10_sg"] << "\n";
    }
  }
  print_table(runs.get());
  return 0;
}

int cmd_aggregate(const std::vector<std::string>& dirs, bool as_json) {
  sglab_run_set* raw = nullptr;
  check(sglab_run_set_create(&raw));
  RunSetPtr all(raw);
  for (const auto& dir : dirs) {
    sglab_run_set* part = nullptr;
    check(sglab_run_set_load(dir.c_str(), &part));
    RunSetPtr owned(part);
    check(sglab_run_set_append(all.get(), owned.get()));
  }
  if (sglab_run_set_size(all.get()) == 0) {
    std::cerr << "no summary.json found\n";
    return kLibraryError;
  }
  if (as_json) {
    char* s = nullptr;
    check(sglab_aggregate_json(all.get(), &s));
    std::cout << take(s) << "\n";
  } else {
    print_table(all.get());
  }
  return 0;
}

int cmd_accuracy_grid(const ConfigFlags& flags, const std::vector<double>& shares,
                      std::size_t jobs, std::optional<double> max_spread) {
  ConfigPtr config = flags.build();
  char* s = nullptr;
  check(sglab_accuracy_grid(config.get(), shares.data(), shares.size(), jobs, &s));
  const json result = json::parse(take(s));
  std::cout << result.dump(2) << "\n";
  if (max_spread && result["spread"].get<double>() >= *max_spread) return kThresholdFailed;
  return 0;
}

int cmd_claims_check(const ConfigFlags& flags, std::size_t skip, std::size_t jobs,
                     std::optional<double> min_fraction) {
  ConfigPtr config = flags.build();
  char* s = nullptr;
  check(sglab_claims_check(config.get(), skip, jobs, &s));
  const json result = json::parse(take(s));
  std::cout << result.dump(2) << "\n";
  if (min_fraction && (result["theta_fraction"].get<double>() < *min_fraction ||
                       result["d_fraction"].get<double>() < *min_fraction)) {
    return kThresholdFailed;
  }
  return 0;
}

int cmd_config(const ConfigFlags& flags) {
  ConfigPtr config = flags.build();
  char* s = nullptr;
  check(sglab_config_to_json(config.get(), &s));
  std::cout << take(s) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split-learning lab: run honest and hijacking servers, score with SplitGuard"};
  app.set_version_flag("--version", std::string(sglab_version()));
  app.require_subcommand(1);

  std::size_t jobs = default_jobs();

  ConfigFlags run_flags;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run a seeded series and print the detection table");
  run_flags.attach(run);
  run->add_option("-j,--jobs", jobs, "concurrent runs");
  run->add_flag("-q,--quiet", quiet, "only print the detection table");

  std::vector<std::string> dirs;
  bool as_json = false;
  auto* agg = app.add_subcommand("aggregate", "detection table from saved run directories");
  agg->add_option("dirs", dirs, "directories searched for summary.json")->required();
  agg->add_flag("--json", as_json);

  ConfigFlags grid_flags;
  std::vector<double> shares = {0.0, 1.0 / 64, 4.0 / 64, 16.0 / 64, 1.0};
  std::optional<double> max_spread;
  auto* grid = app.add_subcommand("accuracy-grid", "honest test accuracy across fake-label shares");
  grid_flags.attach(grid);
  grid->add_option("--shares", shares, "B_F values")->delimiter(',');
  grid->add_option("--max-spread", max_spread, "exit 3 if max - min accuracy reaches this");
  grid->add_option("-j,--jobs", jobs, "concurrent runs");

  ConfigFlags claims_flags;
  std::size_t skip = 10;
  std::optional<double> min_fraction;
  auto* claims = app.add_subcommand(
      "claims-check", "how often theta and d separate fake from regular gradients on honest runs");
  claims_flags.attach(claims);
  claims->add_option("--skip", skip, "fake batches ignored at the start");
  claims->add_option("--min-fraction", min_fraction, "exit 3 if either fraction is below this");
  claims->add_option("-j,--jobs", jobs, "concurrent runs");

  ConfigFlags config_flags;
  auto* cfg = app.add_subcommand("config", "print the effective config as JSON");
  config_flags.attach(cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version are successes; everything else is a usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*run) return cmd_run(run_flags, jobs, quiet);
    if (*agg) return cmd_aggregate(dirs, as_json);
    if (*grid) return cmd_accuracy_grid(grid_flags, shares, jobs, max_spread);
    if (*claims) return cmd_claims_check(claims_flags, skip, jobs, min_fraction);
    if (*cfg) return cmd_config(config_flags);
  } catch (const Failure& f) {
    std::cerr << "error (" << sglab_status_name(f.status) << "): " << f.message << "\n";
    return kLibraryError;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kLibraryError;
  }
  return 0;
}
