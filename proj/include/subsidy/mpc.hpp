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

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "subsidy/allocator.hpp"
#include "subsidy/lookup.hpp"
#include "subsidy/synthworld.hpp"

namespace subsidy {

struct MulTeNetParams;

// Query stream used for simulated traffic; disjoint from dataset streams.
inline constexpr std::uint32_t kSimulationStream = 7;

enum class Strategy { kModel, kOracle, kUniform };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

struct HorizonConfig {
  int history_days = 14;
  int horizon_days = 7;
  double target_subsidy_rate = 0.05;
  int resolve_interval_days = 1;
  std::uint64_t seed = 0;  // selects the simulated traffic sample
  Coarsening coarsening{1, 3, 24};
  double u_lo = 0.0;
  double u_hi = kUnbounded;
  // Fixed-point rounds when sizing the budget against planned revenue.
  int budget_rounds = 8;
  // Horizon budget; negative derives it from the target rate.
  double budget_override = -1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static HorizonConfig from_json(const nlohmann::json& j);
};

/// Per-cluster aggregates of one day. Curve sums come from whichever
/// elasticity source drives the plan; realized fields from run_day.
struct ClusterDayStats {
  double queries = 0.0;
  double orders = 0.0;
  double revenue = 0.0;
  double spend = 0.0;
  std::vector<double> quote_sum;  // per service
  std::vector<double> curve_sum;  // per level
};

struct DayResult {
  int day = 0;
  std::size_t queries = 0;
  std::size_t orders = 0;
  double revenue = 0.0;
  double spend = 0.0;
  double budget_remaining = 0.0;  // at day start
  double day_budget = 0.0;        // slice handed to the solver
  double planned_cost = 0.0;
  bool fallback = false;
  std::map<ClusterKey, ClusterDayStats> clusters;
};

/// Queries of day `day` drawn from the simulation stream.
std::vector<Query> simulation_traffic(const World& world, int day);

/// Serves `queries` from the dictionary, realizes outcomes with common
/// random numbers and accrues gamma-weighted revenue and spend. A grant is
/// made only while spend + worst-case payout stays within `cap`.
DayResult run_day(const World& world, int day, std::span<const Query> queries, const LookupTable& table,
                  const Coarsening& coarsening, double cap = kUnbounded);
DayResult run_day(const World& world, int day, const AllocationDictionary& dictionary, double cap = kUnbounded);

struct ClusterForecast {
  ClusterKey key;
  double n_hat = 0.0;
  std::vector<double> p_hat;
  std::vector<double> pr_hat;
  std::vector<double> gamma;
};

/// n_hat is the mean over history days sharing target_day's weekday (all
/// days when none does); p_hat and pr_hat are window means. Keys in `extra`
/// missing from history receive the global mean.
std::vector<ClusterForecast> forecast(std::span<const DayResult> history, int target_day,
                                      std::span<const ServiceClass> services,
                                      std::span<const ClusterKey> extra = {});

/// Expected revenue if every cluster stays at `levels[i]` (level 0 when empty).
double forecast_revenue(std::span<const ClusterForecast> fc, std::span<const int> levels = {});

double budget_from_rate(double forecast_revenue, double target_rate);

AllocationProblem problem_from_forecast(std::span<const ClusterForecast> fc, const TreatmentGrid& grid,
                                        double budget, double u_lo = 0.0, double u_hi = kUnbounded);

using CurveSource = std::function<std::vector<ElasticityCurve>(std::span<const Query>)>;

CurveSource model_curves(const MulTeNetParams& params);
CurveSource oracle_curves(const World& world);

struct SimulationReport {
  std::string strategy;
  double budget_total = 0.0;
  double revenue = 0.0;
  double orders = 0.0;
  double spend = 0.0;
  double cf_revenue = 0.0;
  double cf_orders = 0.0;
  double subsidy_rate = 0.0;
  std::optional<double> roi;
  double normalized_revenue = 1.0;
  double normalized_orders = 1.0;
  std::vector<DayResult> days;
  std::vector<DayResult> counterfactual;
  std::vector<AllocationDictionary> dictionaries;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  std::string trajectory_csv() const;
};

SimulationReport report(std::string strategy, double budget_total, std::vector<DayResult> days,
                        std::vector<DayResult> counterfactual);

/// Warm-up of history_days without subsidy, then horizon_days of daily
/// re-planning. `curves` supplies elasticities for the model and uniform
/// strategies (the uniform plan uses them only to size its level).
SimulationReport mpc_loop(const World& world, Strategy strategy, const CurveSource& curves,
                          const HorizonConfig& cfg);
SimulationReport mpc_loop(const World& world, const MulTeNetParams& params, const HorizonConfig& cfg);

}  // namespace subsidy
