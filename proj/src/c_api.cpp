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
#include "sglab/sglab.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sglab/detector.hpp"
#include "sglab/error.hpp"
#include "sglab/experiment.hpp"

struct sglab_config {
  sglab::ExperimentConfig value;
};

struct sglab_run_set {
  std::vector<sglab::RunSummary> runs;
};

struct sglab_detector {
  sglab::SplitGuardDetector detector;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

sglab_status status_of(sglab::ErrorCode code) {
  switch (code) {
    case sglab::ErrorCode::kInvalidInput:
      return SGLAB_INVALID_INPUT;
    case sglab::ErrorCode::kFormat:
      return SGLAB_FORMAT_ERROR;
    case sglab::ErrorCode::kProtocol:
      return SGLAB_PROTOCOL_ERROR;
    case sglab::ErrorCode::kContract:
      return SGLAB_CONTRACT_VIOLATION;
    case sglab::ErrorCode::kState:
      return SGLAB_STATE_ERROR;
    case sglab::ErrorCode::kUndefined:
      return SGLAB_UNDEFINED;
    case sglab::ErrorCode::kIo:
      return SGLAB_IO_ERROR;
  }
  return SGLAB_INTERNAL_ERROR;
}

template <typename F>
sglab_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SGLAB_OK;
  } catch (const sglab::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return SGLAB_FORMAT_ERROR;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SGLAB_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SGLAB_INTERNAL_ERROR;
  }
}

template <typename T>
void require_out(T* out) {
  if (out == nullptr) throw sglab::InvalidInput("output pointer is null");
}

char* copy_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p == nullptr) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

json rows_json(const std::vector<sglab::DetectionRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"policy", r.policy},
                   {"attack_runs", r.attack_runs},
                   {"honest_runs", r.honest_runs},
                   {"tp_rate", r.tp_rate},
                   {"fp_rate", r.fp_rate},
                   {"mean_detection_index", r.mean_detection_index
                                                ? json(*r.mean_detection_index)
                                                : json(nullptr)}});
  }
  return out;
}

sglab::DetectorConfig detector_config_from(const json& j) {
  sglab::DetectorConfig c;
  static const char* const kKnown[] = {"alpha",      "beta",        "epsilon",
                                       "threshold",  "policies",    "decision_policy",
                                       "start_index", "fake_share", "num_classes",
                                       "delta",      "adaptive_fake_share"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
      throw sglab::InvalidInput("detector config: unknown field '" + key + "'");
    }
  }
  c.score.alpha = j.value("alpha", c.score.alpha);
  c.score.beta = j.value("beta", c.score.beta);
  c.score.epsilon = j.value("epsilon", c.score.epsilon);
  c.score.threshold = j.value("threshold", c.score.threshold);
  if (j.contains("policies")) {
    c.policies.clear();
    for (const auto& p : j.at("policies")) {
      c.policies.push_back(sglab::PolicySpec::parse(p.get<std::string>()));
    }
  }
  c.decision_policy = j.value("decision_policy", c.decision_policy);
  c.start_index = j.value("start_index", c.start_index);
  c.fake_share = j.value("fake_share", c.fake_share);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.decision.delta = j.value("delta", c.decision.delta);
  c.adaptive_fake_share = j.value("adaptive_fake_share", c.adaptive_fake_share);
  return c;
}

}  // namespace

extern "C" {

const char* sglab_version(void) { return "1.0.0"; }

const char* sglab_status_name(sglab_status status) {
  switch (status) {
    case SGLAB_OK:
      return "ok";
    case SGLAB_INVALID_INPUT:
      return "invalid input";
    case SGLAB_FORMAT_ERROR:
      return "format error";
    case SGLAB_PROTOCOL_ERROR:
      return "protocol error";
    case SGLAB_CONTRACT_VIOLATION:
      return "contract violation";
    case SGLAB_STATE_ERROR:
      return "state error";
    case SGLAB_UNDEFINED:
      return "undefined statistic";
    case SGLAB_IO_ERROR:
      return "i/o error";
    case SGLAB_INTERNAL_ERROR:
      return "internal error";
  }
  return "unknown status";
}

const char* sglab_last_error(void) { return g_last_error.c_str(); }

void sglab_string_free(char* s) { std::free(s); }

sglab_status sglab_config_default(sglab_config** out) {
  return guarded([&] {
    require_out(out);
    *out = new sglab_config{};
  });
}

sglab_status sglab_config_from_json(const char* text, sglab_config** out) {
  return guarded([&] {
    require_out(out);
    *out = nullptr;
    if (text == nullptr) throw sglab::InvalidInput("config JSON is null");
    auto config = sglab::ExperimentConfig::from_json(text);
    config.validate();
    *out = new sglab_config{std::move(config)};
  });
}

sglab_status sglab_config_to_json(const sglab_config* config, char** out) {
  return guarded([&] {
    require_out(out);
    if (config == nullptr) throw sglab::InvalidInput("config handle is null");
    *out = copy_string(config->value.to_json());
  });
}

void sglab_config_free(sglab_config* config) { delete config; }

sglab_status sglab_run_series(const sglab_config* config, size_t jobs, sglab_run_set** out) {
  return guarded([&] {
    require_out(out);
    if (config == nullptr) throw sglab::InvalidInput("config handle is null");
    *out = new sglab_run_set{sglab::run_series(config->value, jobs)};
  });
}

sglab_status sglab_run_set_load(const char* dir, sglab_run_set** out) {
  return guarded([&] {
    require_out(out);
    if (dir == nullptr) throw sglab::InvalidInput("directory is null");
    if (!std::filesystem::is_directory(dir)) {
      throw sglab::IoError(std::string("not a directory: ") + dir);
    }
    *out = new sglab_run_set{sglab::load_summaries(dir)};
  });
}

sglab_status sglab_run_set_create(sglab_run_set** out) {
  return guarded([&] {
    require_out(out);
    *out = new sglab_run_set{};
  });
}

sglab_status sglab_run_set_append(sglab_run_set* dst, const sglab_run_set* src) {
  return guarded([&] {
    if (dst == nullptr || src == nullptr) throw sglab::InvalidInput("run set handle is null");
    if (dst == src) {
      const auto copy = src->runs;
      dst->runs.insert(dst->runs.end(), copy.begin(), copy.end());
    } else {
      dst->runs.insert(dst->runs.end(), src->runs.begin(), src->runs.end());
    }
  });
}

size_t sglab_run_set_size(const sglab_run_set* runs) { return runs ? runs->runs.size() : 0; }

sglab_status sglab_run_set_summary_json(const sglab_run_set* runs, size_t index, char** out) {
  return guarded([&] {
    require_out(out);
    if (runs == nullptr) throw sglab::InvalidInput("run set handle is null");
    if (index >= runs->runs.size()) throw sglab::InvalidInput("run index out of range");
    *out = copy_string(runs->runs[index].to_json());
  });
}

void sglab_run_set_free(sglab_run_set* runs) { delete runs; }

sglab_status sglab_aggregate_csv(const sglab_run_set* runs, char** out) {
  return guarded([&] {
    require_out(out);
    if (runs == nullptr) throw sglab::InvalidInput("run set handle is null");
    *out = copy_string(sglab::detection_table_csv(sglab::aggregate(runs->runs)));
  });
}

sglab_status sglab_aggregate_json(const sglab_run_set* runs, char** out) {
  return guarded([&] {
    require_out(out);
    if (runs == nullptr) throw sglab::InvalidInput("run set handle is null");
    *out = copy_string(rows_json(sglab::aggregate(runs->runs)).dump(2));
  });
}

sglab_status sglab_accuracy_grid(const sglab_config* config, const double* shares, size_t count,
                                 size_t jobs, char** out_json) {
  return guarded([&] {
    require_out(out_json);
    if (config == nullptr) throw sglab::InvalidInput("config handle is null");
    if (shares == nullptr || count == 0) throw sglab::InvalidInput("empty fake-share grid");
    const std::vector<double> grid(shares, shares + count);
    const auto rows = sglab::accuracy_impact(config->value, grid, jobs);
    json j = {{"rows", json::array()}, {"spread", sglab::accuracy_spread(rows)}};
    for (const auto& r : rows) {
      j["rows"].push_back({{"fake_label_share", r.fake_label_share},
                           {"runs", r.runs},
                           {"mean_accuracy", r.mean_accuracy}});
    }
    *out_json = copy_string(j.dump(2));
  });
}

sglab_status sglab_claims_check(const sglab_config* config, size_t skip, size_t jobs,
                                char** out_json) {
  return guarded([&] {
    require_out(out_json);
    if (config == nullptr) throw sglab::InvalidInput("config handle is null");
    const auto r = sglab::claims_check(config->value, skip, jobs);
    const json j = {{"checkpoints", r.checkpoints},
                    {"theta_holds", r.theta_holds},
                    {"d_holds", r.d_holds},
                    {"theta_fraction", r.theta_fraction()},
                    {"d_fraction", r.d_fraction()}};
    *out_json = copy_string(j.dump(2));
  });
}

sglab_status sglab_detector_create(const char* config_json, uint64_t seed, sglab_detector** out) {
  return guarded([&] {
    require_out(out);
    const json j = config_json ? json::parse(config_json) : json::object();
    if (!j.is_object()) throw sglab::InvalidInput("detector config must be a JSON object");
    *out = new sglab_detector{sglab::SplitGuardDetector(detector_config_from(j), seed)};
  });
}

sglab_status sglab_detector_observe(sglab_detector* detector, const double* gradient,
                                    size_t length, uint64_t batch_index, int fake,
                                    const double* accuracy) {
  return guarded([&] {
    if (detector == nullptr) throw sglab::InvalidInput("detector handle is null");
    if (gradient == nullptr || length == 0) throw sglab::InvalidInput("empty gradient");
    std::optional<double> acc;
    if (accuracy) acc = *accuracy;
    detector->detector.observe(std::span<const double>(gradient, length), batch_index, fake != 0,
                               acc);
  });
}

sglab_status sglab_detector_score_count(const sglab_detector* detector, size_t* out) {
  return guarded([&] {
    require_out(out);
    if (detector == nullptr) throw sglab::InvalidInput("detector handle is null");
    *out = detector->detector.report().trace.size();
  });
}

sglab_status sglab_detector_last_sg(const sglab_detector* detector, double* out) {
  return guarded([&] {
    require_out(out);
    if (detector == nullptr) throw sglab::InvalidInput("detector handle is null");
    const auto& trace = detector->detector.report().trace;
    if (trace.empty()) throw sglab::UndefinedStatistic("no score has been computed yet");
    *out = trace.back().sg;
  });
}

sglab_status sglab_detector_verdict(const sglab_detector* detector, sglab_verdict* out) {
  return guarded([&] {
    require_out(out);
    if (detector == nullptr) throw sglab::InvalidInput("detector handle is null");
    switch (detector->detector.report().final_decision) {
      case sglab::Verdict::kHonest:
        *out = SGLAB_VERDICT_HONEST;
        break;
      case sglab::Verdict::kAttack:
        *out = SGLAB_VERDICT_ATTACK;
        break;
      case sglab::Verdict::kUndecided:
        *out = SGLAB_VERDICT_UNDECIDED;
        break;
    }
  });
}

sglab_status sglab_detector_report_csv(const sglab_detector* detector, char** out) {
  return guarded([&] {
    require_out(out);
    if (detector == nullptr) throw sglab::InvalidInput("detector handle is null");
    *out = copy_string(detector->detector.report().to_csv());
  });
}

void sglab_detector_free(sglab_detector* detector) { delete detector; }

sglab_status sglab_squash_score(double s, double alpha, double beta, double* out) {
  return guarded([&] {
    require_out(out);
    sglab::ScoreParams p;
    p.alpha = alpha;
    p.beta = beta;
    p.validate();
    *out = sglab::compute_sg(s, alpha, beta);
  });
}

sglab_status sglab_expected_fake_accuracy(double accuracy, double fake_share, int num_classes,
                                          double* out) {
  return guarded([&] {
    require_out(out);
    *out = sglab::expected_fake_accuracy(accuracy, fake_share, num_classes);
  });
}

}  // extern "C"
