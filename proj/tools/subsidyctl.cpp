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

// subsidyctl: command-line front end over libsubsidy.
//
//   subsidyctl gen      --config world.json --out data.jsonl --n 100000 --policy observational
//   subsidyctl train    --data data.jsonl --train-config train.json --out model.json
//   subsidyctl eval     --checkpoint model.json --data rct.jsonl [--out metrics.json]
//   subsidyctl optimize --checkpoint model.json --out dict.json [--budget B | --target-rate r]
//   subsidyctl simulate --checkpoint model.json --out-dir report/ [--strategy model]
//   subsidyctl serve    --dictionary dict.json [--port 7070 | --stdio]
//
// Exit codes: 0 success, 1 runtime/config failure (one JSON line on stderr),
// 2 usage error.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "subsidy/subsidy.h"

using nlohmann::json;

namespace {

int fail(subsidy_status status) {
  std::cerr << json{{"error", subsidy_status_name(status)}, {"message", subsidy_last_error()}}.dump() << '\n';
  return 1;
}

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
  return 1;
}

void log_config(const std::string& command, const json& opts) {
  json line = {{"event", "resolved_config"}, {"command", command}, {"options", opts}};
  if (opts.contains("seed")) line["seed"] = opts["seed"];
  std::cerr << line.dump() << '\n';
}

int run_stage(const std::string& stage, const json& opts) {
  log_config(stage, opts);
  char* summary = nullptr;
  const auto status = subsidy_run_stage(stage.c_str(), opts.dump().c_str(), &summary);
  if (status != SUBSIDY_OK) return fail(status);
  std::cout << summary << '\n';
  subsidy_string_free(summary);
  return 0;
}

template <typename T>
void put(json& opts, const char* key, const std::optional<T>& v) {
  if (v) opts[key] = *v;
}

void put(json& opts, const char* key, const std::string& v) {
  if (!v.empty()) opts[key] = v;
}

int serve(const std::string& dictionary, const std::string& host, int port, bool stdio) {
  log_config("serve", {{"dictionary", dictionary}, {"host", host}, {"port", port}, {"stdio", stdio}});
  subsidy_server* server = nullptr;
  if (const auto st = subsidy_server_create(dictionary.c_str(), &server); st != SUBSIDY_OK) return fail(st);
  if (stdio) {
    const auto st = subsidy_server_serve_stdio(server);
    subsidy_server_free(server);
    return st == SUBSIDY_OK ? 0 : fail(st);
  }
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  int bound = 0;
  if (const auto st = subsidy_server_listen(server, host.c_str(), port, &bound); st != SUBSIDY_OK) {
    subsidy_server_free(server);
    return fail(st);
  }
  std::cerr << json{{"event", "listening"}, {"host", host}, {"port", bound}}.dump() << std::endl;
  std::thread worker([server] { subsidy_server_run(server); });
  int sig = 0;
  sigwait(&signals, &sig);
  subsidy_server_stop(server);
  worker.join();
  subsidy_server_free(server);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-class ride-hailing subsidy toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(subsidy_version()));

  std::optional<std::uint64_t> seed;
  std::string world_config;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_out, policy = "observational";
  std::optional<std::size_t> gen_n;
  std::optional<std::uint32_t> stream;
  gen->add_option("--config", world_config, "World config JSON")->envname("SUBSIDY_WORLD_CONFIG");
  gen->add_option("--out", gen_out, "Output dataset (JSON lines)")->required()->envname("SUBSIDY_DATA");
  gen->add_option("--n", gen_n, "Number of records");
  gen->add_option("--policy", policy, "observational | rct")->check(CLI::IsMember({"observational", "rct"}));
  gen->add_option("--stream", stream, "Query stream id");
  gen->add_option("--seed", seed, "Global seed");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  std::string data, train_config, checkpoint_out, log_out;
  train->add_option("--data", data, "Training dataset")->required()->envname("SUBSIDY_DATA");
  train->add_option("--train-config", train_config, "Training config JSON");
  train->add_option("--out", checkpoint_out, "Checkpoint output")->required()->envname("SUBSIDY_CHECKPOINT");
  train->add_option("--log", log_out, "Per-epoch loss CSV");
  train->add_option("--seed", seed, "Global seed");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  std::string checkpoint, eval_out, curves_dir;
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->envname("SUBSIDY_CHECKPOINT");
  eval->add_option("--data", data, "Evaluation dataset")->required()->envname("SUBSIDY_DATA");
  eval->add_option("--out", eval_out, "Metrics JSON output");
  eval->add_option("--curves-dir", curves_dir, "Directory for Qini/uplift curve CSVs");

  // optimize
  auto* optimize = app.add_subcommand("optimize", "Cluster, solve the allocation and emit a dictionary");
  std::string dict_out, problem_out;
  std::optional<double> budget, target_rate, u_lo, u_hi, cost_scale;
  std::optional<int> day;
  std::optional<std::size_t> min_cluster_size;
  bool exact = false;
  optimize->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->envname("SUBSIDY_CHECKPOINT");
  optimize->add_option("--config", world_config, "World config JSON")->envname("SUBSIDY_WORLD_CONFIG");
  optimize->add_option("--out", dict_out, "Dictionary output")->required()->envname("SUBSIDY_DICTIONARY");
  optimize->add_option("--problem-out", problem_out, "Dump the allocation problem as JSON");
  auto* budget_opt = optimize->add_option("--budget", budget, "Budget in currency");
  optimize->add_option("--target-rate", target_rate, "Budget as a share of forecast revenue")->excludes(budget_opt);
  optimize->add_option("--day", day, "Planning day");
  optimize->add_option("--min-cluster-size", min_cluster_size, "Merge clusters smaller than this");
  optimize->add_option("--u-lo", u_lo, "Lower per-order subsidy bound");
  optimize->add_option("--u-hi", u_hi, "Upper per-order subsidy bound");
  optimize->add_flag("--exact", exact, "Use the exact DP solver");
  optimize->add_option("--cost-scale", cost_scale, "DP cost resolution (units per currency)");
  optimize->add_option("--seed", seed, "Global seed");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run the rolling-horizon simulation");
  std::string horizon_config, out_dir, strategy = "model";
  simulate->add_option("--checkpoint", checkpoint, "Model checkpoint")->envname("SUBSIDY_CHECKPOINT");
  simulate->add_option("--config", world_config, "World config JSON")->envname("SUBSIDY_WORLD_CONFIG");
  simulate->add_option("--horizon-config", horizon_config, "Horizon config JSON");
  simulate->add_option("--strategy", strategy, "model | oracle | uniform")
      ->check(CLI::IsMember({"model", "oracle", "uniform"}));
  simulate->add_option("--out-dir", out_dir, "Report directory")->required()->envname("SUBSIDY_REPORT_DIR");
  simulate->add_option("--seed", seed, "Global seed");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve dictionary lookups");
  std::string dictionary, host = "127.0.0.1";
  int port = 7070;
  bool stdio = false;
  serve_cmd->add_option("--dictionary", dictionary, "Dictionary file")->required()->envname("SUBSIDY_DICTIONARY");
  serve_cmd->add_option("--host", host, "IPv4 listen address");
  serve_cmd->add_option("--port", port, "TCP port (0 picks one)");
  serve_cmd->add_flag("--stdio", stdio, "Serve stdin/stdout instead of TCP");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  json opts = json::object();
  put(opts, "seed", seed);
  if (gen->parsed()) {
    put(opts, "world_config", world_config);
    opts["out"] = gen_out;
    put(opts, "n", gen_n);
    opts["policy"] = policy;
    put(opts, "stream", stream);
    return run_stage("gen", opts);
  }
  if (train->parsed()) {
    opts["data"] = data;
    put(opts, "train_config", train_config);
    opts["out"] = checkpoint_out;
    put(opts, "log", log_out);
    return run_stage("train", opts);
  }
  if (eval->parsed()) {
    opts["checkpoint"] = checkpoint;
    opts["data"] = data;
    put(opts, "out", eval_out);
    put(opts, "curves_dir", curves_dir);
    return run_stage("eval", opts);
  }
  if (optimize->parsed()) {
    opts["checkpoint"] = checkpoint;
    put(opts, "world_config", world_config);
    opts["out"] = dict_out;
    put(opts, "problem_out", problem_out);
    put(opts, "budget", budget);
    put(opts, "target_rate", target_rate);
    put(opts, "day", day);
    put(opts, "min_cluster_size", min_cluster_size);
    put(opts, "u_lo", u_lo);
    put(opts, "u_hi", u_hi);
    put(opts, "cost_scale", cost_scale);
    if (exact) opts["exact"] = true;
    return run_stage("optimize", opts);
  }
  if (simulate->parsed()) {
    put(opts, "checkpoint", checkpoint);
    put(opts, "world_config", world_config);
    put(opts, "horizon_config", horizon_config);
    opts["strategy"] = strategy;
    opts["out_dir"] = out_dir;
    return run_stage("simulate", opts);
  }
  if (serve_cmd->parsed()) return serve(dictionary, host, port, stdio);
  return fail("usage", "no command given");
}
