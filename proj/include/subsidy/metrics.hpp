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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "subsidy/domain.hpp"

namespace subsidy {

struct MulTeNetParams;

/// One row per evaluated record. Records are ranked by `predicted_uplift`;
/// ties are ordered by position in the input, then handled as a group.
struct EvalRecord {
  double predicted_uplift = 0.0;
  double predicted_response = 0.0;
  int treated = 0;
  int converted = 0;
};

struct CurvePoint {
  double phi = 0.0;
  double value = 0.0;
};

/// Mann-Whitney AUC; tied scores count one half. kDegenerateLabels if only
/// one class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct QiniResult {
  std::vector<CurvePoint> curve;  // value = Qini(n) / N, at tie-group boundaries
  double area = 0.0;
  double random_area = 0.0;
  double perfect_area = 0.0;
  double coefficient = 0.0;
};

/// Qini(n) = R_T(n) - R_C(n) * N_T(n) / N_C(n). While a prefix holds no
/// control record the last valid control mean (initially 0) is carried.
/// coefficient = (area - random) / (perfect - random).
QiniResult qini(std::span<const EvalRecord> records);

struct UpliftCurveResult {
  std::vector<CurvePoint> curve;  // value = (mean_T - mean_C) * n(phi) / N
  double auuc = 0.0;
};

/// Uplift curve on the percentile grid phi = k/grid_points, k = 1..grid_points
/// (plus the origin). AUUC is the trapezoidal area of the per-capita curve.
UpliftCurveResult uplift_curve(std::span<const EvalRecord> records, std::size_t grid_points = 100);

struct LevelMetrics {
  std::size_t level = 0;
  std::size_t n = 0;
  double auuc = 0.0;
  double qini = 0.0;
};

struct MetricsReport {
  double auc = 0.0;
  double auuc = 0.0;
  double qini = 0.0;
  std::size_t n = 0;
  std::vector<std::size_t> arm_counts;
  std::vector<LevelMetrics> per_level;
  std::vector<CurvePoint> qini_curve;
  std::vector<CurvePoint> uplift_curve;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Pooled score: mean of p[j] - p[0] over the nonzero levels.
double pooled_uplift(const ElasticityCurve& curve);

/// Scores `curves[i]` against `dataset.records[i]`. Treated means t > 0.
MetricsReport evaluate_curves(const Dataset& dataset, std::span<const ElasticityCurve> curves);
MetricsReport evaluate(const MulTeNetParams& params, const Dataset& dataset);

std::string curve_csv(std::span<const CurvePoint> curve);

}  // namespace subsidy
