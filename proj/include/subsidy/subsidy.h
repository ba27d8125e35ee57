/* Copyright 2026 The Subsidy Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to libsubsidy.
 *
 * Every call returns a subsidy_status. On failure the thread-local message
 * from subsidy_last_error() explains it. Strings handed out by the library
 * are released with subsidy_string_free; handles with their *_free call.
 * Passing NULL to a *_free function is a no-op.
 */
#ifndef SUBSIDY_SUBSIDY_H_
#define SUBSIDY_SUBSIDY_H_

#include <stddef.h>
#include <stdint.h>

#if defined(SUBSIDY_BUILDING_LIBRARY)
#define SUBSIDY_API __attribute__((visibility("default")))
#else
#define SUBSIDY_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum subsidy_status {
  SUBSIDY_OK = 0,
  SUBSIDY_ERR_INVALID_ARGUMENT = 1,
  SUBSIDY_ERR_NOT_ON_GRID = 2,
  SUBSIDY_ERR_CONFIG = 3,
  SUBSIDY_ERR_SHAPE = 4,
  SUBSIDY_ERR_TAPE = 5,
  SUBSIDY_ERR_EMPTY_BATCH = 6,
  SUBSIDY_ERR_DATA = 7,
  SUBSIDY_ERR_DEGENERATE_LABELS = 8,
  SUBSIDY_ERR_EMPTY_INPUT = 9,
  SUBSIDY_ERR_INFEASIBLE = 10,
  SUBSIDY_ERR_INSTANCE_TOO_LARGE = 11,
  SUBSIDY_ERR_PARSE = 12,
  SUBSIDY_ERR_IO = 13,
  SUBSIDY_ERR_INTERNAL = 14
} subsidy_status;

typedef struct subsidy_world subsidy_world;
typedef struct subsidy_dataset subsidy_dataset;
typedef struct subsidy_model subsidy_model;
typedef struct subsidy_dictionary subsidy_dictionary;
typedef struct subsidy_server subsidy_server;

SUBSIDY_API const char* subsidy_version(void);
SUBSIDY_API const char* subsidy_status_name(subsidy_status status);
SUBSIDY_API const char* subsidy_last_error(void);
SUBSIDY_API void subsidy_string_free(char* s);

/* Batch stages: "gen", "train", "eval", "optimize", "simulate", "pipeline".
 * options_json is a JSON object; *summary_json receives a JSON summary. */
SUBSIDY_API subsidy_status subsidy_run_stage(const char* stage, const char* options_json, char** summary_json);

/* World. params_json may be NULL or "{}" for defaults. */
SUBSIDY_API subsidy_status subsidy_world_create(const char* params_json, subsidy_world** out);
SUBSIDY_API subsidy_status subsidy_world_serialize(const subsidy_world* world, char** out_json);
SUBSIDY_API void subsidy_world_free(subsidy_world* world);

/* Datasets. policy is "observational" or "rct". */
SUBSIDY_API subsidy_status subsidy_dataset_generate(const subsidy_world* world, size_t n, const char* policy,
                                                    uint32_t stream, subsidy_dataset** out);
SUBSIDY_API subsidy_status subsidy_dataset_load(const char* path, subsidy_dataset** out);
SUBSIDY_API subsidy_status subsidy_dataset_save(const subsidy_dataset* dataset, const char* path);
SUBSIDY_API subsidy_status subsidy_dataset_size(const subsidy_dataset* dataset, size_t* n);
SUBSIDY_API void subsidy_dataset_free(subsidy_dataset* dataset);

/* Models. */
SUBSIDY_API subsidy_status subsidy_model_train(const subsidy_dataset* dataset, const char* config_json,
                                               subsidy_model** out);
SUBSIDY_API subsidy_status subsidy_model_load(const char* path, subsidy_model** out);
SUBSIDY_API subsidy_status subsidy_model_save(const subsidy_model* model, const char* path);
SUBSIDY_API subsidy_status subsidy_model_shape(const subsidy_model* model, size_t* feature_dim, size_t* levels);
/* Writes `levels` conversion probabilities for one feature row. */
SUBSIDY_API subsidy_status subsidy_model_elasticity(const subsidy_model* model, const double* features,
                                                    size_t feature_dim, double* curve, size_t levels);
/* Metrics report JSON against a dataset. */
SUBSIDY_API subsidy_status subsidy_model_evaluate(const subsidy_model* model, const subsidy_dataset* dataset,
                                                  char** out_json);
SUBSIDY_API void subsidy_model_free(subsidy_model* model);

/* Allocation dictionaries. */
SUBSIDY_API subsidy_status subsidy_dictionary_load(const char* path, subsidy_dictionary** out);
SUBSIDY_API subsidy_status subsidy_dictionary_size(const subsidy_dictionary* dict, size_t* entries);
SUBSIDY_API subsidy_status subsidy_dictionary_lookup(const subsidy_dictionary* dict, int k, int origin, int dest,
                                                     int time_bucket, double* amount, int* fallback);
SUBSIDY_API void subsidy_dictionary_free(subsidy_dictionary* dict);

/* Lookup server. */
SUBSIDY_API subsidy_status subsidy_server_create(const char* dictionary_path, subsidy_server** out);
/* One protocol exchange without a socket; *response has no newline. */
SUBSIDY_API subsidy_status subsidy_server_handle(subsidy_server* server, const char* line, char** response);
/* Port 0 picks a free port; *bound_port receives the actual one. */
SUBSIDY_API subsidy_status subsidy_server_listen(subsidy_server* server, const char* host, int port,
                                                 int* bound_port);
/* Blocks until subsidy_server_stop is called from another thread. */
SUBSIDY_API subsidy_status subsidy_server_run(subsidy_server* server);
SUBSIDY_API subsidy_status subsidy_server_stop(subsidy_server* server);
/* Serves stdin/stdout until EOF. */
SUBSIDY_API subsidy_status subsidy_server_serve_stdio(subsidy_server* server);
SUBSIDY_API void subsidy_server_free(subsidy_server* server);

#ifdef __cplusplus
}
#endif

#endif /* SUBSIDY_SUBSIDY_H_ */
