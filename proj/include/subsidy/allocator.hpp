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

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "subsidy/domain.hpp"

namespace subsidy {

/// Maps a raw (origin, dest, time_bucket) onto its cluster key:
///   zone' = zone / zone_block
///   time' = (time_period > 0 ? time % time_period : time) / time_block
struct Coarsening {
  int zone_block = 1;
  int time_block = 1;
  int time_period = 0;

  ClusterKey apply(const ClusterKey& raw) const;
  void validate() const;
  friend bool operator==(const Coarsening&, const Coarsening&) = default;
};

struct ClusteringConfig {
  Coarsening coarsening;
  std::size_t min_size = 1;
  // Member count -> forecast volume multiplier.
  double volume_scale = 1.0;
  // Per-service multiplier on the subsidy cost of each level; empty means 1.
  std::vector<double> service_cost_scale;
};

/// Aggregated cluster i of the allocation problem.
struct ClusterStats {
  ClusterKey key;
  // Keys merged into this cluster; served with the same plan.
  std::vector<ClusterKey> aliases;
  double n_hat = 0.0;
  std::vector<double> p_hat;               // per level, monotone
  std::vector<double> pr_hat;              // per service
  std::vector<double> gamma;               // per service
  std::vector<std::vector<double>> cost;   // [service][level], cost[k][0] == 0
};

/// Groups queries by coarsened key. p_hat is the member-count-weighted mean
/// curve, pr_hat the mean per-service quote. Clusters below min_size are
/// merged into the nearest time bucket with the same origin/dest (or the
/// next key in canonical order when there is none).
/// `quotes[i][k]` is the fare of query i for service k.
std::vector<ClusterStats> build_clusters(std::span<const Query> queries, std::span<const ElasticityCurve> curves,
                                         std::span<const std::vector<double>> quotes,
                                         std::span<const ServiceClass> services, const TreatmentGrid& grid,
                                         const ClusteringConfig& cfg);

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Levels j with u_lo <= p_hat[j] * cost[k][j] <= u_hi for every service k.
/// Throws kInfeasible when none qualifies.
std::vector<std::size_t> feasible_levels(const ClusterStats& c, double u_lo, double u_hi);

struct AllocationProblem {
  std::vector<ClusterStats> clusters;
  double budget = 0.0;
  double u_lo = 0.0;
  double u_hi = kUnbounded;

  std::size_t levels() const { return clusters.empty() ? 0 : clusters.front().p_hat.size(); }
  /// sum_k gamma_k * n_hat * pr_hat_k * p_hat_j
  double value(std::size_t i, std::size_t j) const;
  /// sum_k gamma_k * n_hat * p_hat_j * cost_kj
  double cost(std::size_t i, std::size_t j) const;
  void validate() const;

  nlohmann::json to_json() const;
  static AllocationProblem from_json(const nlohmann::json& j);
};

struct AllocationSolution {
  std::vector<int> assignment;  // chosen level per cluster
  double objective = 0.0;
  double total_cost = 0.0;
  double dual_lambda = 0.0;
  double dual_bound = 0.0;
  double optimality_gap_bound = 0.0;
};

/// Throws kInfeasible describing the first violated constraint.
void check_solution(const AllocationProblem& p, const AllocationSolution& s);

/// Bisection on the budget multiplier, then a greedy fill of leftover
/// budget. Throws kInfeasible when even the cheapest assignment overshoots.
AllocationSolution solve_lagrangian(const AllocationProblem& p);

/// Multiple-choice knapsack DP over costs rounded to multiples of
/// 1/cost_scale; exact when costs are such multiples. kInstanceTooLarge
/// beyond 10^6 scaled budget units.
AllocationSolution solve_exact(const AllocationProblem& p, double cost_scale = 1.0);

struct DictionaryEntry {
  int k = 0;
  ClusterKey key;
  double amount = 0.0;
};

struct AllocationDictionary {
  long long solved_at = 0;  // logical plan time (day index)
  double budget = 0.0;
  double lambda = 0.0;
  double gap_bound = 0.0;
  Coarsening coarsening;
  std::vector<DictionaryEntry> entries;  // sorted by (k, key)

  /// Canonical bytes: sorted keys, shortest round-trip floats, trailing \n.
  std::string serialize() const;
  static AllocationDictionary parse(std::string_view text);
  void save(const std::string& path) const;
  static AllocationDictionary load(const std::string& path);
};

AllocationDictionary emit_dictionary(const AllocationSolution& s, std::span<const ClusterStats> clusters,
                                     const TreatmentGrid& grid, std::span<const ServiceClass> services,
                                     const Coarsening& coarsening, long long solved_at = 0);

}  // namespace subsidy
