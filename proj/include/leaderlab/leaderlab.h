// Copyright 2026 The LeaderLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the leaderlab core. All functions are thread-safe unless
 * they take the same handle from two threads. Strings returned through
 * `char**` out-parameters are owned by the caller and released with
 * ll_string_free. On failure the last error of the calling thread is set. */
#ifndef LEADERLAB_LEADERLAB_H_
#define LEADERLAB_LEADERLAB_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LL_API __declspec(dllexport)
#else
#define LL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ll_status {
  LL_OK = 0,
  LL_ERR_INTERNAL = 1,
  LL_ERR_VALIDATION = 2,
  LL_ERR_UPSTREAM = 3,
  LL_ERR_NUMERICAL = 4,
  LL_ERR_IO = 5,
} ll_status;

typedef struct ll_puzzle ll_puzzle;
typedef struct ll_session ll_session;
typedef struct ll_server ll_server;

LL_API const char* ll_version(void);

/* Code (e.g. "SumNot100") and message of the calling thread's last error.
 * Valid until the next failing call on this thread. */
LL_API const char* ll_last_error_code(void);
LL_API const char* ll_last_error_message(void);

LL_API void ll_string_free(char* s);

/* Puzzles. spec_json may be NULL for the default specification. */
LL_API ll_status ll_puzzle_generate(const char* spec_json, uint64_t seed, ll_puzzle** out);
LL_API ll_status ll_puzzle_from_json(const char* json, ll_puzzle** out);
LL_API ll_status ll_puzzle_to_json(const ll_puzzle* puzzle, char** out);
LL_API ll_status ll_puzzle_parallel_form(const ll_puzzle* puzzle, uint64_t theme_seed,
                                         ll_puzzle** out);
/* *holds is set to 1 when no single member can solve a dimension alone but
 * the pooled clues determine the answer key. */
LL_API ll_status ll_puzzle_verify(const ll_puzzle* puzzle, int* holds);
LL_API const char* ll_puzzle_id(const ll_puzzle* puzzle);
LL_API void ll_puzzle_free(ll_puzzle* puzzle);

/* Scores one dimension under the total-variation rule. */
LL_API ll_status ll_score_dimension(const int* submitted, const int* key, size_t n_options,
                                    double* value, int* optimal);

/* In-process sessions driven by a manual clock starting at 0. config_json
 * (may be NULL) accepts session_id, leader_id, test, time_limit_ms,
 * grace_ms and follower_policy. */
LL_API ll_status ll_session_create(const ll_puzzle* puzzle, const char* config_json,
                                   ll_session** out);
/* Leader message to "Follower1".."Follower3" or "All"; follower replies are
 * generated synchronously. *events_json lists the appended events. */
LL_API ll_status ll_session_post(ll_session* session, const char* recipient,
                                 const char* text, char** events_json);
/* profiles_json: [[...], [...]], one integer array per dimension. */
LL_API ll_status ll_session_submit(ll_session* session, const char* profiles_json,
                                   double* score);
LL_API ll_status ll_session_advance(ll_session* session, int64_t ms);
LL_API ll_status ll_session_view(const ll_session* session, char** view_json);
LL_API ll_status ll_session_log(const ll_session* session, char** jsonl);
LL_API void ll_session_free(ll_session* session);

/* Pipelines behind the command-line tool. Each writes a JSON summary. */
LL_API ll_status ll_gen_puzzles(const char* spec_path, uint64_t seed, int count,
                                int parallel_forms, const char* out_dir, char** summary);
/* seed_override < 0 keeps the seed from the config file. */
LL_API ll_status ll_simulate(const char* config_path, int64_t seed_override,
                             const char* out_dir, int bootstrap_reps, char** summary);
/* covariates: comma-separated names, may be empty. method: "ml" or "reml". */
LL_API ll_status ll_estimate(const char* obs_path, const char* covariates,
                             const char* method, int bootstrap_reps, uint64_t seed,
                             const char* out_path, char** summary);
/* Writes raw leader metrics to out_path and z-scores next to it
 * (metrics.csv -> metrics_z.csv). */
LL_API ll_status ll_metrics(const char* logs_dir, const char* lexicon_dir,
                            const char* out_path, char** summary);

/* HTTP session service over the puzzles in bank_dir. log_dir may be NULL. */
LL_API ll_status ll_server_create(const char* bank_dir, const char* log_dir,
                                  ll_server** out);
LL_API ll_status ll_server_bind(ll_server* server, const char* host, int port,
                                int* bound_port);
/* Blocks until ll_server_stop is called from another thread. */
LL_API ll_status ll_server_listen(ll_server* server);
LL_API void ll_server_stop(ll_server* server);
LL_API void ll_server_free(ll_server* server);

#ifdef __cplusplus
}
#endif

#endif /* LEADERLAB_LEADERLAB_H_ */
