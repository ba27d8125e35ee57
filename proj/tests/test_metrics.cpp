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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "subsidy/metrics.hpp"
#include "subsidy/synthworld.hpp"
#include "test_util.hpp"

using namespace subsidy;
using subsidy::testing::code_of;

namespace {

// Qini(n)/N at every prefix, recomputed from raw counts. Distinct scores only.
std::vector<double> brute_qini(std::vector<EvalRecord> recs) {
  std::stable_sort(recs.begin(), recs.end(),
                   [](const EvalRecord& a, const EvalRecord& b) { return a.predicted_uplift > b.predicted_uplift; });
  std::vector<double> out = {0.0};
  double carried = 0.0;
  for (std::size_t n = 1; n <= recs.size(); ++n) {
    double rt = 0, nt = 0, rc = 0, nc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      (recs[i].treated ? rt : rc) += recs[i].converted;
      (recs[i].treated ? nt : nc) += 1;
    }
    if (nc > 0) carried = rc / nc;
    out.push_back((rt - carried * nt) / static_cast<double>(recs.size()));
  }
  return out;
}

double value_at(const std::vector<CurvePoint>& curve, double phi) {
  for (const auto& p : curve) {
    if (std::abs(p.phi - phi) < 1e-12) return p.value;
  }
  FAIL("no curve point at phi " << phi);
  return 0.0;
}

std::vector<EvalRecord> rct_records(const World& w, const Dataset& d, bool oracle_scores) {
  std::vector<EvalRecord> out;
  for (const auto& r : d.records) {
    EvalRecord e;
    e.predicted_uplift = oracle_scores ? pooled_uplift(true_elasticity(w, r.query)) : 0.0;
    e.treated = r.treatment_idx > 0 ? 1 : 0;
    e.converted = r.converted;
    out.push_back(e);
  }
  return out;
}

}  // namespace

TEST_CASE("auc") {
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(auc(std::vector<double>{0, 0, 1, 1}, labels) == 1.0);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, labels) == 0.5);
  CHECK(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, labels) == doctest::Approx(0.75));
  CHECK(code_of([] { auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }) ==
        ErrorCode::kDegenerateLabels);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(500), exp_s(500), affine(500);
  std::vector<int> y(500);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < s[i] ? 1 : 0;
    exp_s[i] = std::exp(s[i]);
    affine[i] = 3.0 * s[i] - 7.0;
  }
  const double base = auc(s, y);
  CHECK(auc(exp_s, y) == doctest::Approx(base).epsilon(1e-14));
  CHECK(auc(affine, y) == doctest::Approx(base).epsilon(1e-14));
}

TEST_CASE("qini on a hand-enumerated instance") {
  // (score, treated, converted), already in descending score order.
  const std::vector<EvalRecord> recs = {
      {0.9, 0, 1, 1}, {0.8, 0, 0, 0}, {0.7, 0, 1, 1}, {0.6, 0, 0, 1}, {0.5, 0, 1, 0}, {0.4, 0, 0, 1},
  };
  const auto q = qini(recs);
  const std::vector<double> hand = {0.0, 1.0 / 6, 1.0 / 6, 2.0 / 6, 1.0 / 6, 0.5 / 6, 0.0};
  const auto brute = brute_qini(recs);
  for (std::size_t n = 0; n <= 6; ++n) {
    CHECK(brute[n] == doctest::Approx(hand[n]));
    CHECK(value_at(q.curve, n / 6.0) == doctest::Approx(hand[n]).epsilon(1e-12));
  }
  CHECK(q.area == doctest::Approx(5.5 / 36.0).epsilon(1e-12));
  CHECK(q.random_area == doctest::Approx(0.0));

  // Shuffled input ranks identically.
  auto shuffled = recs;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(qini(shuffled).area == doctest::Approx(q.area).epsilon(1e-12));
}

TEST_CASE("control mean is carried while a prefix has no controls") {
  const std::vector<EvalRecord> recs = {
      {0.9, 0, 0, 1}, {0.8, 0, 1, 1}, {0.7, 0, 1, 0}, {0.6, 0, 0, 0},
  };
  const auto q = qini(recs);
  const auto brute = brute_qini(recs);
  // Prefix 1 is control only; prefix 2 adds a treated record against mean 1.
  CHECK(brute[2] == doctest::Approx(0.0));
  for (std::size_t n = 0; n <= recs.size(); ++n) {
    CHECK(value_at(q.curve, n / 4.0) == doctest::Approx(brute[n]).epsilon(1e-12));
  }

  // No controls until the end: the initial mean of 0 is carried.
  const std::vector<EvalRecord> late = {{0.9, 0, 1, 1}, {0.8, 0, 1, 0}, {0.1, 0, 0, 1}};
  CHECK(value_at(qini(late).curve, 1.0 / 3) == doctest::Approx(1.0 / 3));
}

TEST_CASE("constant predictor has zero coefficient") {
  std::mt19937_64 rng(4);
  std::vector<EvalRecord> recs(2000);
  for (auto& r : recs) {
    r.predicted_uplift = 0.25;
    r.treated = static_cast<int>(rng() % 2);
    r.converted = static_cast<int>(rng() % 3 == 0);
  }
  CHECK(std::abs(qini(recs).coefficient) < 1e-9);
  CHECK(std::abs(uplift_curve(recs).auuc - 0.5 * uplift_curve(recs).curve.back().value) < 1e-12);
}

TEST_CASE("qini coefficient is a rank statistic") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<EvalRecord> recs(3000);
  for (auto& r : recs) {
    r.predicted_uplift = u(rng);
    r.treated = u(rng) < 0.5;
    r.converted = u(rng) < 0.2 + (r.treated ? 0.3 * r.predicted_uplift : 0.0);
  }
  auto transformed = recs;
  for (auto& r : transformed) r.predicted_uplift = std::exp(5.0 * r.predicted_uplift) - 2.0;
  CHECK(qini(transformed).coefficient == doctest::Approx(qini(recs).coefficient).epsilon(1e-12));
  CHECK(uplift_curve(transformed).auuc == doctest::Approx(uplift_curve(recs).auuc).epsilon(1e-12));
  CHECK(qini(recs).coefficient > 0.0);
}

TEST_CASE("uplift curve") {
  SUBCASE("one grid point is half the difference in means") {
    const std::vector<EvalRecord> recs = {
        {0.9, 0, 1, 1}, {0.8, 0, 0, 0}, {0.7, 0, 1, 1}, {0.6, 0, 0, 1}, {0.5, 0, 1, 0}, {0.4, 0, 0, 1},
    };
    const double diff = 2.0 / 3.0 - 2.0 / 3.0;
    CHECK(uplift_curve(recs, 1).auuc == doctest::Approx(0.5 * diff));
    auto shifted = recs;
    shifted[5].converted = 0;
    CHECK(uplift_curve(shifted, 1).auuc == doctest::Approx(0.5 * (2.0 / 3.0 - 1.0 / 3.0)));
  }
  SUBCASE("tie groups enter fractionally") {
    // Two tied records split by the 50% grid point.
    const std::vector<EvalRecord> recs = {{1.0, 0, 1, 1}, {0.5, 0, 1, 0}, {0.5, 0, 0, 0}, {0.0, 0, 0, 1}};
    const auto c = uplift_curve(recs, 2);
    // At phi = 0.5: one treated converter plus half of the tie group.
    const double mt = 1.0 / 1.5, mc = 0.0;
    CHECK(value_at(c.curve, 0.5) == doctest::Approx((mt - mc) * 0.5));
    CHECK(value_at(c.curve, 1.0) == doctest::Approx(0.5 - 0.5));
  }
  SUBCASE("null world is near zero") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<EvalRecord> recs(20000);
    for (auto& r : recs) {
      r.predicted_uplift = u(rng);
      r.treated = u(rng) < 0.5;
      r.converted = u(rng) < 0.3;
    }
    CHECK(std::abs(uplift_curve(recs).auuc) < 0.01);
  }
  CHECK(code_of([] { uplift_curve(std::vector<EvalRecord>{{0.1, 0, 1, 1}}); }) == ErrorCode::kData);
}

TEST_CASE("random permutations average to zero") {
  const auto w = gen_world(WorldParams::defaults());
  const auto d = generate_dataset(w, 10000, Provenance::kRct, 3);
  auto recs = rct_records(w, d, true);
  std::vector<double> scores;
  for (const auto& r : recs) scores.push_back(r.predicted_uplift);
  std::mt19937_64 rng(7);
  double sum = 0;
  for (int t = 0; t < 200; ++t) {
    std::shuffle(scores.begin(), scores.end(), rng);
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].predicted_uplift = scores[i];
    sum += qini(recs).coefficient;
  }
  CHECK(std::abs(sum / 200) < 0.02);
}

TEST_CASE("oracle scores beat random scores") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto p = WorldParams::defaults();
    p.seed = seed;
    const auto w = gen_world(p);
    const auto d = generate_dataset(w, 50000, Provenance::kRct, 1);
    const auto oracle = rct_records(w, d, true);
    auto random = oracle;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& r : random) r.predicted_uplift = u(rng);
    CAPTURE(seed);
    CHECK(qini(oracle).coefficient > 0.0);
    CHECK(uplift_curve(oracle).auuc >= uplift_curve(random).auuc);
  }
}

TEST_CASE("evaluate_curves report") {
  const auto w = gen_world(WorldParams::defaults());
  const auto d = generate_dataset(w, 5000, Provenance::kObservational, 2);
  std::vector<ElasticityCurve> curves;
  for (const auto& r : d.records) curves.push_back(true_elasticity(w, r.query));
  const auto report = evaluate_curves(d, curves);
  CHECK(report.n == d.records.size());
  CHECK(report.arm_counts.size() == w.grid().size());
  CHECK(std::accumulate(report.arm_counts.begin(), report.arm_counts.end(), std::size_t{0}) == report.n);
  CHECK(report.per_level.size() == w.grid().size() - 1);
  CHECK_FALSE(report.warnings.empty());
  const auto j = report.to_json();
  for (const char* key : {"auc", "auuc", "qini", "per_level", "n", "arm_counts"}) CHECK(j.contains(key));
  CHECK(pooled_uplift(ElasticityCurve{{0.2, 0.3, 0.5}}) == doctest::Approx(0.2));
  CHECK(curve_csv(report.qini_curve).rfind("phi,value\n", 0) == 0);
}
