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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "subsidy/domain.hpp"

namespace subsidy {

// Feature layout shared by every dataset the world emits. Columns past
// kFeatureCentrality are uniform noise.
inline constexpr std::size_t kFeatureActivity = 0;
inline constexpr std::size_t kFeatureDistance = 1;
inline constexpr std::size_t kFeatureOffPeak = 2;
inline constexpr std::size_t kFeatureCentrality = 3;
inline constexpr std::size_t kMinFeatureDim = 4;

/// Parameters of the synthetic marketplace. The ground-truth conversion curve
/// is p[j] = sigmoid(b(x) + sum_{m<=j} delta_m(x)) where
///   b(x)       = base[0] + sum_f base[f+1] * x_f  (+ interaction * a * d
///                 when misspecified)
///   delta_m(x) = up[m][0] + up[m][1] * (1 - a) + sum_f up[m][f+2] * x_f
/// and every up[m][.] >= 0, so increments are nonnegative for features in
/// [0,1].
struct WorldParams {
  std::uint64_t seed = 7;
  int n_zones = 9;
  int n_time_buckets = 168;
  std::size_t feature_dim = 6;
  double activity_alpha = 1.2;
  double activity_beta = 1.2;
  std::vector<double> levels = {0, 1, 2, 3, 5};
  std::vector<double> base_rate_coeffs;
  std::vector<std::vector<double>> uplift_coeffs;
  bool misspecified = false;
  double base_interaction = 0.0;
  double logging_policy_strength = 4.0;
  std::vector<ServiceClass> services = {{0, 0.6}, {1, 0.3}};
  std::vector<double> revenue_log_mean;
  double revenue_log_sd = 0.25;
  double revenue_distance_coef = 0.8;
  double revenue_zone_sd = 0.15;
  double zone_intensity_sd = 0.6;
  double daily_query_volume = 20000;
  std::array<double, 7> weekly_pattern = {0.85, 0.9, 0.95, 1.0, 1.15, 1.25, 0.9};

  /// Defaults with coefficient tables sized for (feature_dim, levels).
  static WorldParams defaults();
  /// Fills coefficient tables left empty with defaults sized to the
  /// current feature_dim and levels.
  void fill_default_coefficients();
  /// Throws kConfig on any invalid field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; throws kConfig on invalid values.
  static WorldParams from_json(const nlohmann::json& j);
  static WorldParams load(const std::string& path);
};

class World {
 public:
  explicit World(WorldParams params);

  const WorldParams& params() const { return params_; }
  const TreatmentGrid& grid() const { return grid_; }
  const std::vector<double>& zone_intensity() const { return zone_intensity_; }
  const std::vector<double>& zone_centrality() const { return zone_centrality_; }
  const std::vector<double>& hourly_intensity() const { return hourly_intensity_; }

  /// Deterministic query count for a simulated day.
  std::size_t daily_volume(int day) const;
  /// Per-service fare quote for a query; deterministic in (seed, query id, k).
  double service_revenue(const Query& q, std::size_t service_index) const;
  /// Canonical JSON of params and derived state, for determinism checks.
  std::string serialize() const;

  double base_logit(const std::vector<double>& x) const;
  double uplift_increment(const std::vector<double>& x, std::size_t level) const;

 private:
  WorldParams params_;
  TreatmentGrid grid_;
  std::vector<double> zone_intensity_;
  std::vector<double> zone_centrality_;
  std::vector<double> zone_revenue_effect_;
  std::vector<std::array<double, 2>> zone_xy_;
  std::vector<double> hourly_intensity_;
  double max_distance_ = 1.0;
};

World gen_world(const WorldParams& params);

/// Queries for one day. `stream` separates independent samples of the same
/// day (training set, holdout, simulation).
std::vector<Query> sample_queries(const World& world, int day, std::size_t n, std::uint32_t stream = 0);

ElasticityCurve true_elasticity(const World& world, const Query& q);

/// Historical assignment: softmax over levels with logits
/// strength * (0.5 - activity) * 2j/(J-1). Strength 0 is uniform random.
int logging_policy(const World& world, const Query& q);
std::vector<double> logging_propensities(const World& world, const Query& q);

/// Conversion uses one uniform draw per query id, shared by every level
/// (common random numbers).
OutcomeRecord realize_outcome(const World& world, const Query& q, int treatment_idx);

/// Records spread over days 0..6 so every weekday is represented.
Dataset generate_dataset(const World& world, std::size_t n, Provenance policy, std::uint32_t stream = 0);

}  // namespace subsidy
