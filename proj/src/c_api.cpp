// Copyright 2026 The Subsidy Authors.
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

#include "subsidy/subsidy.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <memory>
#include <string>

#include "subsidy/allocator.hpp"
#include "subsidy/lookup.hpp"
#include "subsidy/metrics.hpp"
#include "subsidy/multenet.hpp"
#include "subsidy/pipeline.hpp"
#include "subsidy/server.hpp"
#include "subsidy/synthworld.hpp"

using nlohmann::json;

struct subsidy_world {
  subsidy::World world;
};

struct subsidy_dataset {
  subsidy::Dataset data;
};

struct subsidy_model {
  subsidy::MulTeNetParams params;
  subsidy::TrainConfig config;
};

struct subsidy_dictionary {
  subsidy::AllocationDictionary dict;
  subsidy::LookupTable table;
};

struct subsidy_server {
  std::unique_ptr<subsidy::LookupServer> server;
};

namespace {

thread_local std::string g_last_error;

subsidy_status from_code(subsidy::ErrorCode code) {
  using subsidy::ErrorCode;
  switch (code) {
    case ErrorCode::kNotOnGrid: return SUBSIDY_ERR_NOT_ON_GRID;
    case ErrorCode::kConfig: return SUBSIDY_ERR_CONFIG;
    case ErrorCode::kShape: return SUBSIDY_ERR_SHAPE;
    case ErrorCode::kTape: return SUBSIDY_ERR_TAPE;
    case ErrorCode::kEmptyBatch: return SUBSIDY_ERR_EMPTY_BATCH;
    case ErrorCode::kData: return SUBSIDY_ERR_DATA;
    case ErrorCode::kDegenerateLabels: return SUBSIDY_ERR_DEGENERATE_LABELS;
    case ErrorCode::kEmptyInput: return SUBSIDY_ERR_EMPTY_INPUT;
    case ErrorCode::kInfeasible: return SUBSIDY_ERR_INFEASIBLE;
    case ErrorCode::kInstanceTooLarge: return SUBSIDY_ERR_INSTANCE_TOO_LARGE;
    case ErrorCode::kParse: return SUBSIDY_ERR_PARSE;
    case ErrorCode::kIo: return SUBSIDY_ERR_IO;
  }
  return SUBSIDY_ERR_INTERNAL;
}

template <typename F>
subsidy_status guard(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SUBSIDY_OK;
  } catch (const subsidy::Error& e) {
    g_last_error = e.what();
    return from_code(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return SUBSIDY_ERR_PARSE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SUBSIDY_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return SUBSIDY_ERR_INTERNAL;
  }
}

subsidy_status invalid(const char* what) {
  g_last_error = what;
  return SUBSIDY_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json parse_options(const char* text) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw subsidy::Error(subsidy::ErrorCode::kConfig, std::string("options are not valid JSON: ") + e.what());
  }
}

}  // namespace

extern "C" {

const char* subsidy_version(void) { return "1.0.0"; }

const char* subsidy_status_name(subsidy_status status) {
  switch (status) {
    case SUBSIDY_OK: return "ok";
    case SUBSIDY_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SUBSIDY_ERR_NOT_ON_GRID: return "not_on_grid";
    case SUBSIDY_ERR_CONFIG: return "config";
    case SUBSIDY_ERR_SHAPE: return "shape";
    case SUBSIDY_ERR_TAPE: return "tape";
    case SUBSIDY_ERR_EMPTY_BATCH: return "empty_batch";
    case SUBSIDY_ERR_DATA: return "data";
    case SUBSIDY_ERR_DEGENERATE_LABELS: return "degenerate_labels";
    case SUBSIDY_ERR_EMPTY_INPUT: return "empty_input";
    case SUBSIDY_ERR_INFEASIBLE: return "infeasible";
    case SUBSIDY_ERR_INSTANCE_TOO_LARGE: return "instance_too_large";
    case SUBSIDY_ERR_PARSE: return "parse";
    case SUBSIDY_ERR_IO: return "io";
    case SUBSIDY_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* subsidy_last_error(void) { return g_last_error.c_str(); }

void subsidy_string_free(char* s) { std::free(s); }

subsidy_status subsidy_run_stage(const char* stage, const char* options_json, char** summary_json) {
  if (!stage || !summary_json) return invalid("stage and summary_json are required");
  return guard([&] {
    namespace p = subsidy::pipeline;
    const json opts = parse_options(options_json);
    const std::string s = stage;
    json out;
    if (s == "gen") out = p::gen(opts);
    else if (s == "train") out = p::train(opts);
    else if (s == "eval") out = p::eval(opts);
    else if (s == "optimize") out = p::optimize(opts);
    else if (s == "simulate") out = p::simulate(opts);
    else if (s == "pipeline") out = p::run_all(opts);
    else throw subsidy::Error(subsidy::ErrorCode::kConfig, "unknown stage '" + s + "'");
    *summary_json = dup_string(out.dump());
  });
}

subsidy_status subsidy_world_create(const char* params_json, subsidy_world** out) {
  if (!out) return invalid("out is required");
  return guard([&] {
    auto params = subsidy::WorldParams::from_json(parse_options(params_json));
    *out = new subsidy_world{subsidy::World(std::move(params))};
  });
}

subsidy_status subsidy_world_serialize(const subsidy_world* world, char** out_json) {
  if (!world || !out_json) return invalid("world and out_json are required");
  return guard([&] { *out_json = dup_string(world->world.serialize()); });
}

void subsidy_world_free(subsidy_world* world) { delete world; }

subsidy_status subsidy_dataset_generate(const subsidy_world* world, size_t n, const char* policy, uint32_t stream,
                                        subsidy_dataset** out) {
  if (!world || !policy || !out) return invalid("world, policy and out are required");
  return guard([&] {
    auto d = subsidy::generate_dataset(world->world, n, subsidy::parse_provenance(policy), stream);
    *out = new subsidy_dataset{std::move(d)};
  });
}

subsidy_status subsidy_dataset_load(const char* path, subsidy_dataset** out) {
  if (!path || !out) return invalid("path and out are required");
  return guard([&] { *out = new subsidy_dataset{subsidy::load_dataset(path)}; });
}

subsidy_status subsidy_dataset_save(const subsidy_dataset* dataset, const char* path) {
  if (!dataset || !path) return invalid("dataset and path are required");
  return guard([&] { subsidy::save_dataset(dataset->data, path); });
}

subsidy_status subsidy_dataset_size(const subsidy_dataset* dataset, size_t* n) {
  if (!dataset || !n) return invalid("dataset and n are required");
  *n = dataset->data.records.size();
  return SUBSIDY_OK;
}

void subsidy_dataset_free(subsidy_dataset* dataset) { delete dataset; }

subsidy_status subsidy_model_train(const subsidy_dataset* dataset, const char* config_json, subsidy_model** out) {
  if (!dataset || !out) return invalid("dataset and out are required");
  return guard([&] {
    const auto cfg = subsidy::TrainConfig::from_json(parse_options(config_json));
    auto result = subsidy::train(dataset->data, cfg);
    *out = new subsidy_model{std::move(result.params), cfg};
  });
}

subsidy_status subsidy_model_load(const char* path, subsidy_model** out) {
  if (!path || !out) return invalid("path and out are required");
  return guard([&] {
    auto params = subsidy::load_checkpoint(path);
    *out = new subsidy_model{std::move(params), subsidy::TrainConfig{}};
  });
}

subsidy_status subsidy_model_save(const subsidy_model* model, const char* path) {
  if (!model || !path) return invalid("model and path are required");
  return guard([&] { subsidy::save_checkpoint(model->params, model->config, path); });
}

subsidy_status subsidy_model_shape(const subsidy_model* model, size_t* feature_dim, size_t* levels) {
  if (!model) return invalid("model is required");
  if (feature_dim) *feature_dim = model->params.feature_dim();
  if (levels) *levels = model->params.levels();
  return SUBSIDY_OK;
}

subsidy_status subsidy_model_elasticity(const subsidy_model* model, const double* features, size_t feature_dim,
                                        double* curve, size_t levels) {
  if (!model || !features || !curve) return invalid("model, features and curve are required");
  if (feature_dim != model->params.feature_dim() || levels != model->params.levels()) {
    g_last_error = "feature_dim or levels do not match the model";
    return SUBSIDY_ERR_SHAPE;
  }
  return guard([&] {
    const auto c = subsidy::elasticity(model->params, std::span<const double>(features, feature_dim));
    std::copy(c.p.begin(), c.p.end(), curve);
  });
}

subsidy_status subsidy_model_evaluate(const subsidy_model* model, const subsidy_dataset* dataset, char** out_json) {
  if (!model || !dataset || !out_json) return invalid("model, dataset and out_json are required");
  return guard([&] { *out_json = dup_string(subsidy::evaluate(model->params, dataset->data).to_json().dump()); });
}

void subsidy_model_free(subsidy_model* model) { delete model; }

subsidy_status subsidy_dictionary_load(const char* path, subsidy_dictionary** out) {
  if (!path || !out) return invalid("path and out are required");
  return guard([&] {
    auto dict = subsidy::AllocationDictionary::load(path);
    subsidy::LookupTable table(dict);
    *out = new subsidy_dictionary{std::move(dict), std::move(table)};
  });
}

subsidy_status subsidy_dictionary_size(const subsidy_dictionary* dict, size_t* entries) {
  if (!dict || !entries) return invalid("dict and entries are required");
  *entries = dict->dict.entries.size();
  return SUBSIDY_OK;
}

subsidy_status subsidy_dictionary_lookup(const subsidy_dictionary* dict, int k, int origin, int dest, int time_bucket,
                                         double* amount, int* fallback) {
  if (!dict || !amount) return invalid("dict and amount are required");
  const auto r = dict->table.lookup(k, {origin, dest, time_bucket});
  *amount = r.amount;
  if (fallback) *fallback = r.fallback ? 1 : 0;
  return SUBSIDY_OK;
}

void subsidy_dictionary_free(subsidy_dictionary* dict) { delete dict; }

subsidy_status subsidy_server_create(const char* dictionary_path, subsidy_server** out) {
  if (!dictionary_path || !out) return invalid("dictionary_path and out are required");
  return guard([&] { *out = new subsidy_server{std::make_unique<subsidy::LookupServer>(dictionary_path)}; });
}

subsidy_status subsidy_server_handle(subsidy_server* server, const char* line, char** response) {
  if (!server || !line || !response) return invalid("server, line and response are required");
  return guard([&] { *response = dup_string(server->server->handle_line(line)); });
}

subsidy_status subsidy_server_listen(subsidy_server* server, const char* host, int port, int* bound_port) {
  if (!server || !host) return invalid("server and host are required");
  return guard([&] {
    const int p = server->server->listen(host, port);
    if (bound_port) *bound_port = p;
  });
}

subsidy_status subsidy_server_run(subsidy_server* server) {
  if (!server) return invalid("server is required");
  return guard([&] { server->server->run(); });
}

subsidy_status subsidy_server_stop(subsidy_server* server) {
  if (!server) return invalid("server is required");
  return guard([&] { server->server->stop(); });
}

subsidy_status subsidy_server_serve_stdio(subsidy_server* server) {
  if (!server) return invalid("server is required");
  return guard([&] { server->server->serve_stream(std::cin, std::cout); });
}

void subsidy_server_free(subsidy_server* server) { delete server; }

}  // extern "C"
