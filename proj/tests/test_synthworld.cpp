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

#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>

#include "doctest.h"
#include "subsidy/synthworld.hpp"
#include "test_util.hpp"

using namespace subsidy;
using subsidy::testing::code_of;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

WorldParams flat_params() {
  auto p = WorldParams::defaults();
  p.base_rate_coeffs.assign(p.feature_dim + 1, 0.0);
  for (auto& row : p.uplift_coeffs) row.assign(row.size(), 0.0);
  return p;
}

// Treated-minus-control conversion rate, all treated levels pooled.
double naive_gap(const Dataset& d) {
  double yt = 0, nt = 0, yc = 0, nc = 0;
  for (const auto& r : d.records) {
    if (r.treatment_idx == 0) {
      yc += r.converted;
      nc += 1;
    } else {
      yt += r.converted;
      nt += 1;
    }
  }
  return yt / nt - yc / nc;
}

// Population average of mean_{j>0} p_j - p_0 under the world's curves.
double true_pooled_uplift(const World& w, const Dataset& d) {
  double acc = 0;
  for (const auto& r : d.records) {
    const auto c = true_elasticity(w, r.query);
    double treated = 0;
    for (std::size_t j = 1; j < c.p.size(); ++j) treated += c.p[j];
    acc += treated / static_cast<double>(c.p.size() - 1) - c.p[0];
  }
  return acc / static_cast<double>(d.records.size());
}

}  // namespace

TEST_CASE("world generation is deterministic and validated") {
  const auto params = WorldParams::defaults();
  CHECK(gen_world(params).serialize() == gen_world(params).serialize());

  auto bad = params;
  bad.uplift_coeffs[1][0] = -0.1;
  CHECK(code_of([&] { gen_world(bad); }) == ErrorCode::kConfig);

  auto zero_zones = params;
  zero_zones.n_zones = 0;
  CHECK(code_of([&] { gen_world(zero_zones); }) == ErrorCode::kConfig);

  auto round_trip = WorldParams::from_json(params.to_json());
  CHECK(round_trip.to_json() == params.to_json());
}

TEST_CASE("degenerate geography yields a single cluster key") {
  auto p = WorldParams::defaults();
  p.n_zones = 1;
  p.n_time_buckets = 1;
  const auto w = gen_world(p);
  for (int day = 0; day < 7; ++day) {
    for (const auto& q : sample_queries(w, day, 200)) {
      CHECK(q.origin_zone == 0);
      CHECK(q.dest_zone == 0);
      CHECK(q.time_bucket == 0);
    }
  }
}

TEST_CASE("sample_queries") {
  const auto w = gen_world(WorldParams::defaults());
  CHECK(sample_queries(w, 0, 0).empty());
  CHECK(sample_queries(w, 3, 500, 2) == sample_queries(w, 3, 500, 2));
  CHECK(sample_queries(w, 3, 500, 2) != sample_queries(w, 3, 500, 1));

  SUBCASE("origin zones follow configured intensities") {
    const auto qs = sample_queries(w, 1, 10000);
    std::vector<double> freq(w.zone_intensity().size(), 0.0);
    for (const auto& q : qs) freq[static_cast<std::size_t>(q.origin_zone)] += 1.0 / qs.size();
    double tv = 0;
    for (std::size_t z = 0; z < freq.size(); ++z) tv += 0.5 * std::abs(freq[z] - w.zone_intensity()[z]);
    CHECK(tv < 0.05);
  }
  SUBCASE("features and keys are in range") {
    for (const auto& q : sample_queries(w, 6, 2000)) {
      REQUIRE(q.features.size() == w.params().feature_dim);
      for (double f : q.features) {
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
      }
      CHECK(q.time_bucket >= 0);
      CHECK(q.time_bucket < w.params().n_time_buckets);
      CHECK(q.origin_zone < w.params().n_zones);
      CHECK(q.service_class < static_cast<int>(w.params().services.size()));
    }
  }
}

TEST_CASE("true_elasticity matches the logit-additive form") {
  const auto w = gen_world(WorldParams::defaults());
  const auto& p = w.params();
  for (const auto& q : sample_queries(w, 2, 300)) {
    const auto c = true_elasticity(w, q);
    CHECK(c.valid());
    double z = p.base_rate_coeffs[0];
    for (std::size_t f = 0; f < p.feature_dim; ++f) z += p.base_rate_coeffs[f + 1] * q.features[f];
    CHECK(c.p[0] == doctest::Approx(logistic(z)).epsilon(1e-12));
    const double a = q.features[kFeatureActivity];
    for (std::size_t m = 1; m < c.p.size(); ++m) {
      const auto& up = p.uplift_coeffs[m - 1];
      double delta = up[0] + up[1] * (1.0 - a);
      for (std::size_t f = 0; f < p.feature_dim; ++f) delta += up[f + 2] * q.features[f];
      CHECK(delta >= 0.0);
      z += delta;
      CHECK(c.p[m] == doctest::Approx(logistic(z)).epsilon(1e-12));
    }
  }

  const auto flat = gen_world(flat_params());
  for (const auto& q : sample_queries(flat, 0, 20)) {
    for (double pj : true_elasticity(flat, q).p) CHECK(pj == 0.5);
  }
}

TEST_CASE("logging policy") {
  SUBCASE("zero strength is uniform") {
    auto p = WorldParams::defaults();
    p.logging_policy_strength = 0.0;
    const auto w = gen_world(p);
    std::vector<double> freq(w.grid().size(), 0.0);
    std::size_t n = 0;
    for (int day = 0; day < 5; ++day) {
      for (const auto& q : sample_queries(w, day, 20000)) {
        freq[static_cast<std::size_t>(logging_policy(w, q))] += 1;
        ++n;
      }
    }
    for (double f : freq) CHECK(std::abs(f / n - 1.0 / w.grid().size()) < 0.02);
  }
  SUBCASE("strong policy targets inactive users") {
    auto p = WorldParams::defaults();
    p.logging_policy_strength = 10.0;
    const auto w = gen_world(p);
    std::vector<std::pair<double, int>> rows;
    for (int day = 0; day < 5; ++day) {
      for (const auto& q : sample_queries(w, day, 20000)) {
        rows.emplace_back(q.features[kFeatureActivity], logging_policy(w, q));
      }
    }
    std::sort(rows.begin(), rows.end());
    const std::size_t decile = rows.size() / 10;
    double low = 0, high = 0;
    for (std::size_t i = 0; i < decile; ++i) {
      low += rows[i].second;
      high += rows[rows.size() - 1 - i].second;
    }
    CHECK(low / decile > high / decile);
  }
  SUBCASE("propensities are a distribution") {
    const auto w = gen_world(WorldParams::defaults());
    for (const auto& q : sample_queries(w, 0, 100)) {
      const auto pi = logging_propensities(w, q);
      CHECK(std::accumulate(pi.begin(), pi.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("realize_outcome") {
  SUBCASE("certain conversion") {
    auto p = flat_params();
    p.base_rate_coeffs[0] = 60.0;
    const auto w = gen_world(p);
    for (const auto& q : sample_queries(w, 0, 500)) CHECK(realize_outcome(w, q, 0).converted == 1);
  }
  SUBCASE("equal probabilities give identical outcomes across levels") {
    const auto w = gen_world(flat_params());
    for (const auto& q : sample_queries(w, 0, 500)) {
      const int y0 = realize_outcome(w, q, 0).converted;
      for (int j = 1; j < static_cast<int>(w.grid().size()); ++j) CHECK(realize_outcome(w, q, j).converted == y0);
    }
  }
  SUBCASE("outcomes are monotone in the level for each query") {
    const auto w = gen_world(WorldParams::defaults());
    for (const auto& q : sample_queries(w, 0, 2000)) {
      int prev = 0;
      for (int j = 0; j < static_cast<int>(w.grid().size()); ++j) {
        const int y = realize_outcome(w, q, j).converted;
        CHECK(y >= prev);
        prev = y;
      }
    }
  }
  SUBCASE("conversion frequency matches p[j]") {
    const auto w = gen_world(WorldParams::defaults());
    Query base = sample_queries(w, 0, 1).front();
    const auto curve = true_elasticity(w, base);
    for (int j : {0, 2, 4}) {
      double hits = 0;
      for (std::uint64_t i = 0; i < 100000; ++i) {
        base.id = (std::uint64_t{900} << 48) | i;
        hits += realize_outcome(w, base, j).converted;
      }
      CHECK(std::abs(hits / 100000 - curve.p[static_cast<std::size_t>(j)]) < 0.005);
    }
  }
  SUBCASE("revenue is the service-weighted quote") {
    const auto w = gen_world(WorldParams::defaults());
    const auto q = sample_queries(w, 0, 1).front();
    double expect = 0;
    for (std::size_t k = 0; k < w.params().services.size(); ++k) {
      expect += w.params().services[k].gamma * w.service_revenue(q, k);
    }
    CHECK(realize_outcome(w, q, 1).revenue_if_converted == doctest::Approx(expect));
    CHECK(code_of([&] { realize_outcome(w, q, 5); }) == ErrorCode::kNotOnGrid);
  }
}

TEST_CASE("generate_dataset") {
  const auto w = gen_world(WorldParams::defaults());
  CHECK(generate_dataset(w, 1, Provenance::kRct).records.size() == 1);
  CHECK(code_of([&] { generate_dataset(w, 0, Provenance::kRct); }) == ErrorCode::kConfig);

  const std::size_t n = 100000;
  const auto rct = generate_dataset(w, n, Provenance::kRct);
  REQUIRE(rct.records.size() == n);
  CHECK(validate_dataset(rct).ok());
  std::map<int, double> counts;
  for (const auto& r : rct.records) counts[r.treatment_idx] += 1;
  const double J = static_cast<double>(w.grid().size());
  const double sigma = std::sqrt(n * (1.0 / J) * (1.0 - 1.0 / J));
  REQUIRE(counts.size() == w.grid().size());
  for (auto [arm, c] : counts) CHECK(std::abs(c - n / J) < 3.0 * sigma);

  SUBCASE("randomized difference in means is unbiased") {
    const double truth = true_pooled_uplift(w, rct);
    CHECK(truth > 0.0);
    CHECK(std::abs(naive_gap(rct) - truth) < 0.015);
  }
  SUBCASE("observational difference in means is biased downward") {
    const auto obs = generate_dataset(w, n, Provenance::kObservational);
    CHECK(validate_dataset(obs).ok());
    const double truth = true_pooled_uplift(w, obs);
    CHECK(truth > 0.0);
    CHECK(naive_gap(obs) < 0.0);
    CHECK(naive_gap(obs) < truth - 0.05);
  }
  CHECK(generate_dataset(w, 50, Provenance::kObservational, 4) ==
        generate_dataset(w, 50, Provenance::kObservational, 4));
}
