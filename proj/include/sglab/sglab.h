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
#ifndef SGLAB_SGLAB_H_
#define SGLAB_SGLAB_H_

/*
 * C interface to the split-learning lab: experiment configuration and runs,
 * detection statistics, and a standalone gradient detector.
 *
 * Every function returning sglab_status leaves a message retrievable with
 * sglab_last_error() on failure (per thread). Strings returned through
 * char** out-parameters are owned by the caller and released with
 * sglab_string_free(). Handles are not thread-safe; distinct handles may be
 * used from distinct threads.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SGLAB_API __declspec(dllexport)
#else
#define SGLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sglab_status {
  SGLAB_OK = 0,
  SGLAB_INVALID_INPUT = 1,
  SGLAB_FORMAT_ERROR = 2,
  SGLAB_PROTOCOL_ERROR = 3,
  SGLAB_CONTRACT_VIOLATION = 4,
  SGLAB_STATE_ERROR = 5,
  SGLAB_UNDEFINED = 6,
  SGLAB_IO_ERROR = 7,
  SGLAB_INTERNAL_ERROR = 99
} sglab_status;

typedef enum sglab_verdict {
  SGLAB_VERDICT_HONEST = 0,
  SGLAB_VERDICT_ATTACK = 1,
  SGLAB_VERDICT_UNDECIDED = 2
} sglab_verdict;

SGLAB_API const char* sglab_version(void);
SGLAB_API const char* sglab_status_name(sglab_status status);
/* Message of the last failed call on this thread; "" if none. */
SGLAB_API const char* sglab_last_error(void);
SGLAB_API void sglab_string_free(char* s);

/* ---- experiment configuration ---- */

typedef struct sglab_config sglab_config;

SGLAB_API sglab_status sglab_config_default(sglab_config** out);
/* Fields absent from `json` keep their defaults; unknown fields and invalid
 * values are rejected, leaving *out NULL. */
SGLAB_API sglab_status sglab_config_from_json(const char* json, sglab_config** out);
SGLAB_API sglab_status sglab_config_to_json(const sglab_config* config, char** out);
SGLAB_API void sglab_config_free(sglab_config* config);

/* ---- runs ---- */

typedef struct sglab_run_set sglab_run_set;

/* config.runs seeded runs, `jobs` at a time. Writes artifacts when the
 * config has an output directory. */
SGLAB_API sglab_status sglab_run_series(const sglab_config* config, size_t jobs,
                                        sglab_run_set** out);
/* Reads every summary.json below `dir`. */
SGLAB_API sglab_status sglab_run_set_load(const char* dir, sglab_run_set** out);
SGLAB_API sglab_status sglab_run_set_create(sglab_run_set** out);
SGLAB_API sglab_status sglab_run_set_append(sglab_run_set* dst, const sglab_run_set* src);
SGLAB_API size_t sglab_run_set_size(const sglab_run_set* runs);
SGLAB_API sglab_status sglab_run_set_summary_json(const sglab_run_set* runs, size_t index,
                                                  char** out);
SGLAB_API void sglab_run_set_free(sglab_run_set* runs);

/* Detection table (TP, FP, mean detection index per policy). */
SGLAB_API sglab_status sglab_aggregate_csv(const sglab_run_set* runs, char** out);
SGLAB_API sglab_status sglab_aggregate_json(const sglab_run_set* runs, char** out);

/* Honest runs for each fake-label share; JSON rows plus the accuracy spread. */
SGLAB_API sglab_status sglab_accuracy_grid(const sglab_config* config, const double* shares,
                                           size_t count, size_t jobs, char** out_json);

/* Honest runs; counts fake-batch checkpoints after the first `skip`. */
SGLAB_API sglab_status sglab_claims_check(const sglab_config* config, size_t skip, size_t jobs,
                                          char** out_json);

/* ---- standalone detector ---- */

typedef struct sglab_detector sglab_detector;

/* `config_json` may be NULL for defaults. Recognized keys: alpha, beta,
 * epsilon, threshold, policies (array of names), decision_policy,
 * start_index, fake_share, num_classes, delta, adaptive_fake_share. */
SGLAB_API sglab_status sglab_detector_create(const char* config_json, uint64_t seed,
                                             sglab_detector** out);
/* `accuracy` may be NULL when no estimate is available. */
SGLAB_API sglab_status sglab_detector_observe(sglab_detector* detector, const double* gradient,
                                              size_t length, uint64_t batch_index, int fake,
                                              const double* accuracy);
SGLAB_API sglab_status sglab_detector_score_count(const sglab_detector* detector, size_t* out);
SGLAB_API sglab_status sglab_detector_last_sg(const sglab_detector* detector, double* out);
/* Verdict of the decision policy. */
SGLAB_API sglab_status sglab_detector_verdict(const sglab_detector* detector,
                                              sglab_verdict* out);
SGLAB_API sglab_status sglab_detector_report_csv(const sglab_detector* detector, char** out);
SGLAB_API void sglab_detector_free(sglab_detector* detector);

/* ---- score helpers ---- */

SGLAB_API sglab_status sglab_squash_score(double s, double alpha, double beta, double* out);
SGLAB_API sglab_status sglab_expected_fake_accuracy(double accuracy, double fake_share,
                                                    int num_classes, double* out);

#ifdef __cplusplus
}
#endif

#endif /* SGLAB_SGLAB_H_ */
