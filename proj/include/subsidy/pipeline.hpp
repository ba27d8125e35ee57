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

#pragma once

#include "json.hpp"

// Batch stages behind the command line. Each takes a JSON options object
// and returns a JSON summary; artifacts go to the paths named in the
// options. Unknown option keys are rejected with kConfig.
namespace subsidy::pipeline {

// {world_config?|world?, seed?, out, n, policy: observational|rct, stream?}
nlohmann::json gen(const nlohmann::json& opts);

// {data, train_config?|train?, seed?, out, log?}
nlohmann::json train(const nlohmann::json& opts);

// {checkpoint, data, out?, curves_dir?}; the summary is the metrics report.
nlohmann::json eval(const nlohmann::json& opts);

// {checkpoint, world_config?|world?, seed?, day?, budget?|target_rate?,
//  coarsening?, min_cluster_size?, u_lo?, u_hi?, exact?, cost_scale?,
//  out, problem_out?}
nlohmann::json optimize(const nlohmann::json& opts);

// {checkpoint?, world_config?|world?, seed?, horizon_config?|horizon?,
//  strategy?, out_dir}
nlohmann::json simulate(const nlohmann::json& opts);

// Every stage in order under one global seed:
// {seed, world?, n_train?, n_holdout?, train?, optimize?, horizon?, strategy?, out_dir}
nlohmann::json run_all(const nlohmann::json& opts);

}  // namespace subsidy::pipeline
