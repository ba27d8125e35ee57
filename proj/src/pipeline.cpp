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

#include "subsidy/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>

#include "subsidy/allocator.hpp"
#include "subsidy/metrics.hpp"
#include "subsidy/mpc.hpp"
#include "subsidy/multenet.hpp"
#include "subsidy/synthworld.hpp"

namespace subsidy::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& opts, std::initializer_list<const char*> allowed, const char* stage) {
  if (!opts.is_object()) throw Error(ErrorCode::kConfig, std::string(stage) + ": options must be a JSON object");
  for (const auto& [key, _] : opts.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::kConfig, std::string(stage) + ": unknown option '" + key + "'");
  }
}

template <typename T>
T get(const json& opts, const char* key, T fallback) {
  try {
    return opts.contains(key) && !opts.at(key).is_null() ? opts.at(key).get<T>() : fallback;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("option '") + key + "': " + e.what());
  }
}

std::string required_path(const json& opts, const char* key) {
  const auto path = get<std::string>(opts, key, "");
  if (path.empty()) throw Error(ErrorCode::kConfig, std::string("missing required option '") + key + "'");
  return path;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) fs::create_directories(parent, ec);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

// Inline object wins over a config path; "seed" overrides either.
json section(const json& opts, const char* path_key, const char* inline_key) {
  if (opts.contains(inline_key) && !opts.at(inline_key).is_null()) return opts.at(inline_key);
  if (opts.contains(path_key) && !opts.at(path_key).is_null()) return read_json(opts.at(path_key).get<std::string>());
  return json::object();
}

WorldParams world_params(const json& opts) {
  json j = section(opts, "world_config", "world");
  if (opts.contains("seed")) j["seed"] = opts.at("seed");
  return WorldParams::from_json(j);
}

TrainConfig train_config(const json& opts) {
  json j = section(opts, "train_config", "train");
  if (opts.contains("seed") && !j.contains("seed")) j["seed"] = opts.at("seed");
  return TrainConfig::from_json(j);
}

HorizonConfig horizon_config(const json& opts) { return HorizonConfig::from_json(section(opts, "horizon_config", "horizon")); }

Coarsening coarsening_from(const json& j, Coarsening c) {
  if (j.is_null()) return c;
  c.zone_block = j.value("zone_block", c.zone_block);
  c.time_block = j.value("time_block", c.time_block);
  c.time_period = j.value("time_period", c.time_period);
  c.validate();
  return c;
}

}  // namespace

json gen(const json& opts) {
  check_keys(opts, {"world_config", "world", "seed", "out", "n", "policy", "stream"}, "gen");
  const World world(world_params(opts));
  const auto out = required_path(opts, "out");
  const auto n = get<std::size_t>(opts, "n", 100000);
  const auto policy = parse_provenance(get<std::string>(opts, "policy", "observational"));
  const auto stream = get<std::uint32_t>(opts, "stream", policy == Provenance::kRct ? 1u : 0u);
  const auto d = generate_dataset(world, n, policy, stream);
  ensure_parent(out);
  save_dataset(d, out);
  std::vector<std::size_t> arms(d.grid.size(), 0);
  double converted = 0;
  for (const auto& r : d.records) {
    ++arms[static_cast<std::size_t>(r.treatment_idx)];
    converted += r.converted;
  }
  return {{"out", out},
          {"n", d.records.size()},
          {"policy", provenance_name(policy)},
          {"seed", world.params().seed},
          {"arm_counts", arms},
          {"conversion_rate", converted / static_cast<double>(d.records.size())}};
}

json train(const json& opts) {
  check_keys(opts, {"data", "train_config", "train", "seed", "out", "log"}, "train");
  const auto cfg = train_config(opts);
  const auto data = load_dataset(required_path(opts, "data"));
  const auto out = required_path(opts, "out");
  const auto result = subsidy::train(data, cfg);
  ensure_parent(out);
  save_checkpoint(result.params, cfg, out);
  const auto log = get<std::string>(opts, "log", "");
  if (!log.empty()) write_text(log, training_log_csv(result.log));
  json summary = {{"out", out}, {"epochs_run", result.log.size()}, {"best_epoch", result.best_epoch}, {"config", cfg.to_json()}};
  if (!result.log.empty()) {
    summary["best_val_bce"] = result.log[static_cast<std::size_t>(result.best_epoch - 1)].val_bce;
  }
  return summary;
}

json eval(const json& opts) {
  check_keys(opts, {"checkpoint", "data", "out", "curves_dir"}, "eval");
  const auto params = load_checkpoint(required_path(opts, "checkpoint"));
  const auto data = load_dataset(required_path(opts, "data"));
  const auto report = evaluate(params, data);
  json j = report.to_json();
  const auto out = get<std::string>(opts, "out", "");
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
  const auto curves = get<std::string>(opts, "curves_dir", "");
  if (!curves.empty()) {
    write_text((fs::path(curves) / "qini.csv").string(), curve_csv(report.qini_curve));
    write_text((fs::path(curves) / "uplift.csv").string(), curve_csv(report.uplift_curve));
  }
  return j;
}

json optimize(const json& opts) {
  check_keys(opts,
             {"checkpoint", "world_config", "world", "seed", "day", "budget", "target_rate", "coarsening",
              "min_cluster_size", "u_lo", "u_hi", "exact", "cost_scale", "out", "problem_out"},
             "optimize");
  const World world(world_params(opts));
  const auto params = load_checkpoint(required_path(opts, "checkpoint"));
  const auto out = required_path(opts, "out");
  const int day = get<int>(opts, "day", 0);
  ClusteringConfig cc;
  cc.coarsening = coarsening_from(opts.value("coarsening", json()), Coarsening{1, 3, 24});
  cc.min_size = get<std::size_t>(opts, "min_cluster_size", 1);

  const auto queries = simulation_traffic(world, day);
  const auto curves = infer_batch(params, queries);
  const auto& services = world.params().services;
  std::vector<std::vector<double>> quotes;
  quotes.reserve(queries.size());
  for (const auto& q : queries) {
    std::vector<double> row;
    for (std::size_t k = 0; k < services.size(); ++k) row.push_back(world.service_revenue(q, k));
    quotes.push_back(std::move(row));
  }
  AllocationProblem problem;
  problem.clusters = build_clusters(queries, curves, quotes, services, world.grid(), cc);
  problem.u_lo = get<double>(opts, "u_lo", 0.0);
  problem.u_hi = get<double>(opts, "u_hi", kUnbounded);
  double base_revenue = 0.0;
  for (std::size_t i = 0; i < problem.clusters.size(); ++i) base_revenue += problem.value(i, 0);
  problem.budget = opts.contains("budget") && !opts.at("budget").is_null()
                       ? get<double>(opts, "budget", 0.0)
                       : budget_from_rate(base_revenue, get<double>(opts, "target_rate", 0.05));

  const bool exact = get<bool>(opts, "exact", false);
  const auto solution = exact ? solve_exact(problem, get<double>(opts, "cost_scale", 1.0)) : solve_lagrangian(problem);
  auto dict = emit_dictionary(solution, problem.clusters, world.grid(), services, cc.coarsening, day);
  dict.budget = problem.budget;
  ensure_parent(out);
  dict.save(out);
  const auto problem_out = get<std::string>(opts, "problem_out", "");
  if (!problem_out.empty()) write_text(problem_out, problem.to_json().dump() + "\n");
  return {{"out", out},
          {"solver", exact ? "exact" : "lagrangian"},
          {"clusters", problem.clusters.size()},
          {"entries", dict.entries.size()},
          {"budget", problem.budget},
          {"objective", solution.objective},
          {"total_cost", solution.total_cost},
          {"dual_bound", solution.dual_bound},
          {"gap_bound", solution.optimality_gap_bound}};
}

json simulate(const json& opts) {
  check_keys(opts, {"checkpoint", "world_config", "world", "seed", "horizon_config", "horizon", "strategy", "out_dir"},
             "simulate");
  const World world(world_params(opts));
  const auto cfg = horizon_config(opts);
  const auto strategy = parse_strategy(get<std::string>(opts, "strategy", "model"));
  const auto out_dir = fs::path(required_path(opts, "out_dir"));
  MulTeNetParams params;
  CurveSource curves;
  if (strategy != Strategy::kOracle) {
    params = load_checkpoint(required_path(opts, "checkpoint"));
    curves = model_curves(params);
  }
  const auto rep = mpc_loop(world, strategy, curves, cfg);
  json j = rep.to_json();
  j["config"] = cfg.to_json();
  write_text((out_dir / "report.json").string(), j.dump(2) + "\n");
  write_text((out_dir / "trajectory.csv").string(), rep.trajectory_csv());
  for (const auto& d : rep.dictionaries) {
    char name[32];
    std::snprintf(name, sizeof(name), "day_%03lld.json", d.solved_at);
    write_text((out_dir / "dictionaries" / name).string(), d.serialize());
  }
  json summary = j;
  summary.erase("days");
  summary["out_dir"] = out_dir.string();
  return summary;
}

json run_all(const json& opts) {
  check_keys(opts, {"seed", "world", "n_train", "n_holdout", "train", "optimize", "horizon", "strategy", "out_dir"},
             "pipeline");
  const auto seed = get<std::uint64_t>(opts, "seed", 7);
  const auto dir = fs::path(required_path(opts, "out_dir"));
  const json world = opts.value("world", json::object());
  auto at = [&](const char* name) { return (dir / name).string(); };

  json summary;
  summary["gen"] = gen({{"world", world}, {"seed", seed}, {"out", at("train.jsonl")},
                        {"n", get<std::size_t>(opts, "n_train", 20000)}, {"policy", "observational"}});
  gen({{"world", world}, {"seed", seed}, {"out", at("holdout.jsonl")},
       {"n", get<std::size_t>(opts, "n_holdout", 10000)}, {"policy", "rct"}});
  summary["train"] = train({{"data", at("train.jsonl")}, {"train", opts.value("train", json::object())},
                            {"seed", seed}, {"out", at("model.json")}, {"log", at("train_log.csv")}});
  summary["eval"] = eval({{"checkpoint", at("model.json")}, {"data", at("holdout.jsonl")}, {"out", at("metrics.json")}});
  json opt = opts.value("optimize", json::object());
  opt["checkpoint"] = at("model.json");
  opt["world"] = world;
  opt["seed"] = seed;
  opt["out"] = at("dictionary.json");
  summary["optimize"] = optimize(opt);
  summary["simulate"] = simulate({{"checkpoint", at("model.json")}, {"world", world}, {"seed", seed},
                                  {"horizon", opts.value("horizon", json::object())},
                                  {"strategy", get<std::string>(opts, "strategy", "model")},
                                  {"out_dir", at("simulation")}});
  return summary;
}

}  // namespace subsidy::pipeline
