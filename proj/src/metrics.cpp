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

#include "subsidy/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "subsidy/multenet.hpp"

namespace subsidy {

using nlohmann::json;

namespace {

struct Counts {
  double rt = 0, nt = 0, rc = 0, nc = 0;
};

// Descending by score, ties in input order.
std::vector<std::size_t> rank_order(std::span<const EvalRecord> records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].predicted_uplift > records[b].predicted_uplift;
  });
  return order;
}

// Cumulative arm counts at the end of each tie group.
std::vector<Counts> group_boundaries(std::span<const EvalRecord> records, const std::vector<std::size_t>& order) {
  std::vector<Counts> out;
  Counts c;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& r = records[order[i]];
    if (r.treated) {
      c.nt += 1;
      c.rt += r.converted;
    } else {
      c.nc += 1;
      c.rc += r.converted;
    }
    const bool last_of_group =
        i + 1 == order.size() || records[order[i + 1]].predicted_uplift != r.predicted_uplift;
    if (last_of_group) out.push_back(c);
  }
  return out;
}

void require_both_arms(std::span<const EvalRecord> records) {
  bool treated = false, control = false;
  for (const auto& r : records) (r.treated ? treated : control) = true;
  if (!treated || !control) throw Error(ErrorCode::kData, "uplift metrics need treated and control records");
}

double trapezoid(const std::vector<CurvePoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += 0.5 * (curve[i].value + curve[i - 1].value) * (curve[i].phi - curve[i - 1].phi);
  }
  return area;
}

// Qini points over a sequence of cumulative counts.
std::vector<CurvePoint> qini_points(const std::vector<Counts>& cumulative, double total) {
  std::vector<CurvePoint> curve{{0.0, 0.0}};
  double control_mean = 0.0;
  for (const auto& c : cumulative) {
    if (c.nc > 0) control_mean = c.rc / c.nc;
    const double q = c.rt - control_mean * c.nt;
    curve.push_back({(c.nt + c.nc) / total, q / total});
  }
  return curve;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::kShape, "auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0, neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        pos += 1;
        rank_sum += avg_rank;
      } else {
        neg += 1;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw Error(ErrorCode::kDegenerateLabels, "auc needs both label classes");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

QiniResult qini(std::span<const EvalRecord> records) {
  require_both_arms(records);
  const double total = static_cast<double>(records.size());
  QiniResult out;
  out.curve = qini_points(group_boundaries(records, rank_order(records)), total);
  out.area = trapezoid(out.curve);
  out.random_area = 0.5 * out.curve.back().value;

  // Perfect ranking: treated converters first, control converters last.
  std::vector<EvalRecord> perfect(records.begin(), records.end());
  auto rank = [](const EvalRecord& r) { return r.treated ? (r.converted ? 0 : 1) : (r.converted ? 2 : 1); };
  std::stable_sort(perfect.begin(), perfect.end(),
                   [&](const EvalRecord& a, const EvalRecord& b) { return rank(a) < rank(b); });
  std::vector<Counts> cumulative;
  Counts c;
  for (const auto& r : perfect) {
    (r.treated ? c.nt : c.nc) += 1;
    (r.treated ? c.rt : c.rc) += r.converted;
    cumulative.push_back(c);
  }
  out.perfect_area = trapezoid(qini_points(cumulative, total));
  const double denom = out.perfect_area - out.random_area;
  out.coefficient = denom > 0 ? (out.area - out.random_area) / denom : 0.0;
  return out;
}

UpliftCurveResult uplift_curve(std::span<const EvalRecord> records, std::size_t grid_points) {
  require_both_arms(records);
  if (grid_points == 0) throw Error(ErrorCode::kConfig, "uplift curve needs at least one grid point");
  const auto order = rank_order(records);
  const auto bounds = group_boundaries(records, order);
  const double total = static_cast<double>(records.size());

  UpliftCurveResult out;
  out.curve.push_back({0.0, 0.0});
  double mean_t = 0.0, mean_c = 0.0;
  std::size_t g = 0;
  Counts prev;
  for (std::size_t k = 1; k <= grid_points; ++k) {
    const double phi = static_cast<double>(k) / static_cast<double>(grid_points);
    const double m = phi * total;
    while (g < bounds.size() && bounds[g].nt + bounds[g].nc < m) prev = bounds[g++];
    Counts c = prev;
    if (g < bounds.size()) {
      // Partial tie group enters in proportion to the share included.
      const double size = (bounds[g].nt + bounds[g].nc) - (prev.nt + prev.nc);
      const double f = size > 0 ? (m - (prev.nt + prev.nc)) / size : 1.0;
      c.nt += f * (bounds[g].nt - prev.nt);
      c.rt += f * (bounds[g].rt - prev.rt);
      c.nc += f * (bounds[g].nc - prev.nc);
      c.rc += f * (bounds[g].rc - prev.rc);
    }
    if (c.nt > 0) mean_t = c.rt / c.nt;
    if (c.nc > 0) mean_c = c.rc / c.nc;
    out.curve.push_back({phi, (mean_t - mean_c) * m / total});
  }
  out.auuc = trapezoid(out.curve);
  return out;
}

json MetricsReport::to_json() const {
  json levels = json::array();
  for (const auto& l : per_level) {
    levels.push_back({{"level", l.level}, {"n", l.n}, {"auuc", l.auuc}, {"qini", l.qini}});
  }
  return {{"auc", auc}, {"auuc", auuc},           {"qini", qini},         {"n", n},
          {"arm_counts", arm_counts}, {"per_level", levels}, {"warnings", warnings}};
}

double pooled_uplift(const ElasticityCurve& curve) {
  if (curve.p.size() < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 1; j < curve.p.size(); ++j) sum += curve.p[j] - curve.p[0];
  return sum / static_cast<double>(curve.p.size() - 1);
}

MetricsReport evaluate_curves(const Dataset& dataset, std::span<const ElasticityCurve> curves) {
  if (curves.size() != dataset.records.size()) throw Error(ErrorCode::kShape, "one curve per record required");
  if (dataset.records.empty()) throw Error(ErrorCode::kEmptyInput, "nothing to evaluate");
  MetricsReport report;
  report.n = dataset.records.size();
  report.arm_counts.assign(dataset.grid.size(), 0);
  if (dataset.provenance != Provenance::kRct) {
    report.warnings.push_back("uplift metrics computed on observational data; expect confounding bias");
  }

  std::vector<EvalRecord> pooled;
  std::vector<double> response;
  std::vector<int> labels;
  pooled.reserve(report.n);
  for (std::size_t i = 0; i < report.n; ++i) {
    const auto& r = dataset.records[i];
    const auto t = static_cast<std::size_t>(r.treatment_idx);
    ++report.arm_counts.at(t);
    const auto& p = curves[i].p;
    pooled.push_back({pooled_uplift(curves[i]), p.at(t), t > 0 ? 1 : 0, r.converted});
    response.push_back(p[t]);
    labels.push_back(r.converted);
  }
  report.auc = auc(response, labels);
  const auto q = qini(pooled);
  const auto u = uplift_curve(pooled);
  report.qini = q.coefficient;
  report.qini_curve = q.curve;
  report.auuc = u.auuc;
  report.uplift_curve = u.curve;

  for (std::size_t j = 1; j < dataset.grid.size(); ++j) {
    if (report.arm_counts[0] == 0 || report.arm_counts[j] == 0) continue;
    std::vector<EvalRecord> subset;
    for (std::size_t i = 0; i < report.n; ++i) {
      const auto t = static_cast<std::size_t>(dataset.records[i].treatment_idx);
      if (t != 0 && t != j) continue;
      const auto& p = curves[i].p;
      subset.push_back({p[j] - p[0], p[t], t == j ? 1 : 0, dataset.records[i].converted});
    }
    report.per_level.push_back({j, subset.size(), uplift_curve(subset).auuc, qini(subset).coefficient});
  }
  return report;
}

MetricsReport evaluate(const MulTeNetParams& params, const Dataset& dataset) {
  std::vector<Query> queries;
  queries.reserve(dataset.records.size());
  for (const auto& r : dataset.records) queries.push_back(r.query);
  const auto curves = infer_batch(params, queries);
  return evaluate_curves(dataset, curves);
}

std::string curve_csv(std::span<const CurvePoint> curve) {
  std::ostringstream out;
  out.precision(17);
  out << "phi,value\n";
  for (const auto& p : curve) out << p.phi << ',' << p.value << '\n';
  return out.str();
}

}  // namespace subsidy
