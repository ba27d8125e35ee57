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
#include <map>
#include <numeric>

#include "doctest.h"
#include "subsidy/mpc.hpp"
#include "test_util.hpp"

using namespace subsidy;
using subsidy::testing::code_of;

namespace {

World small_world(std::uint64_t seed = 3) {
  auto p = WorldParams::defaults();
  p.seed = seed;
  p.daily_query_volume = 2500;
  return gen_world(p);
}

// Amount depends on the origin zone; every key of the world is covered.
AllocationDictionary zone_dictionary(const World& w, const Coarsening& coarse, int subsidized_zone = -1) {
  AllocationDictionary d;
  d.coarsening = coarse;
  const int buckets = coarse.apply({0, 0, w.params().n_time_buckets - 1}).time_bucket + 1;
  for (const auto& s : w.params().services) {
    for (int o = 0; o < w.params().n_zones; ++o) {
      for (int dz = 0; dz < w.params().n_zones; ++dz) {
        for (int t = 0; t < buckets; ++t) {
          double amount = w.grid().amount(static_cast<std::size_t>(o) % w.grid().size());
          if (subsidized_zone >= 0) amount = o == subsidized_zone ? w.grid().amount(2) : 0.0;
          d.entries.push_back({s.id, {o, dz, t}, amount});
        }
      }
    }
  }
  return d;
}

DayResult history_day(int day, std::map<ClusterKey, std::pair<double, std::vector<double>>> clusters) {
  DayResult r;
  r.day = day;
  for (auto& [key, v] : clusters) {
    ClusterDayStats c;
    c.queries = v.first;
    c.curve_sum = {v.first * v.second[0], v.first * v.second[1]};
    c.quote_sum = {v.first * 20.0, v.first * 30.0};
    r.clusters[key] = c;
  }
  return r;
}

const std::vector<ServiceClass> kServices = {{0, 0.6}, {1, 0.3}};

}  // namespace

TEST_CASE("forecast") {
  SUBCASE("constant history forecasts the constant") {
    std::vector<DayResult> hist;
    for (int d = 0; d < 14; ++d) hist.push_back(history_day(d, {{{0, 1, 2}, {40.0, {0.2, 0.3}}}}));
    const auto fc = forecast(hist, 14, kServices);
    REQUIRE(fc.size() == 1);
    CHECK(fc[0].n_hat == doctest::Approx(40.0));
    CHECK(fc[0].p_hat[0] == doctest::Approx(0.2));
    CHECK(fc[0].p_hat[1] == doctest::Approx(0.3));
    CHECK(fc[0].pr_hat == std::vector<double>{20.0, 30.0});
    CHECK(fc[0].gamma == std::vector<double>{0.6, 0.3});
  }
  SUBCASE("unseen keys receive the global mean") {
    std::vector<DayResult> hist;
    for (int d = 0; d < 7; ++d) {
      hist.push_back(history_day(d, {{{0, 0, 0}, {10.0, {0.1, 0.2}}}, {{1, 1, 1}, {30.0, {0.3, 0.4}}}}));
    }
    const std::vector<ClusterKey> extra = {{5, 5, 5}};
    const auto fc = forecast(hist, 7, kServices, extra);
    REQUIRE(fc.size() == 3);
    const auto& imputed = fc.back();
    CHECK(imputed.key == ClusterKey{5, 5, 5});
    CHECK(imputed.n_hat == doctest::Approx(20.0));
    CHECK(imputed.p_hat[0] == doctest::Approx((10 * 0.1 + 30 * 0.3) / 40));
    CHECK(imputed.p_hat[1] == doctest::Approx((10 * 0.2 + 30 * 0.4) / 40));
  }
  SUBCASE("weekday matching beats the plain mean on weekly traffic") {
    const auto w = small_world();
    std::vector<DayResult> hist;
    for (int d = 0; d < 14; ++d) {
      hist.push_back(history_day(d, {{{0, 0, 0}, {static_cast<double>(w.daily_volume(d)), {0.2, 0.3}}}}));
    }
    double plain = 0;
    for (const auto& h : hist) plain += h.clusters.begin()->second.queries / 14.0;
    double mape_dow = 0, mape_plain = 0;
    for (int d = 14; d < 21; ++d) {
      const double actual = static_cast<double>(w.daily_volume(d));
      mape_dow += std::abs(forecast(hist, d, kServices)[0].n_hat - actual) / actual;
      mape_plain += std::abs(plain - actual) / actual;
    }
    CHECK(mape_dow < mape_plain);
  }
  CHECK(code_of([] { forecast({}, 0, kServices); }) == ErrorCode::kEmptyInput);
}

TEST_CASE("budget_from_rate") {
  CHECK(budget_from_rate(1000.0, 0.0) == 0.0);
  CHECK(budget_from_rate(1000.0, 0.05) == doctest::Approx(50.0));
  CHECK(budget_from_rate(2000.0, 0.05) == doctest::Approx(2.0 * budget_from_rate(1000.0, 0.05)));
  CHECK(code_of([] { budget_from_rate(10.0, 1.5); }) == ErrorCode::kConfig);
}

TEST_CASE("run_day") {
  const auto w = small_world();
  const Coarsening coarse{1, 3, 24};
  const auto queries = sample_queries(w, 2, 100000, 40);

  SUBCASE("empty dictionary pays nothing") {
    const auto r = run_day(w, 2, queries, LookupTable(), coarse);
    CHECK(r.spend == 0.0);
    CHECK(r.orders <= r.queries);
    CHECK(r.queries == queries.size());
  }
  SUBCASE("spend matches the conversion-weighted payout") {
    const auto dict = zone_dictionary(w, coarse);
    const LookupTable table(dict);
    const auto r = run_day(w, 2, queries, table, coarse);
    CHECK(r.orders <= r.queries);
    double expected = 0, var = 0, expected_orders = 0;
    for (const auto& q : queries) {
      const ClusterKey raw{q.origin_zone, q.dest_zone, q.time_bucket};
      double payout = 0, own = 0;
      for (const auto& s : w.params().services) {
        const double a = table.lookup(s.id, raw).amount;
        payout += s.gamma * a;
        if (s.id == q.service_class) own = a;
      }
      const double p = true_elasticity(w, q).p[treatment_index(w.grid(), own)];
      expected += p * payout;
      var += p * (1 - p) * payout * payout;
      expected_orders += p;
    }
    CHECK(std::abs(r.spend - expected) < 4.0 * std::sqrt(var));
    const double per_order = r.spend / static_cast<double>(r.orders);
    CHECK(per_order == doctest::Approx(expected / expected_orders).epsilon(0.02));
    double cluster_spend = 0;
    for (const auto& [k, c] : r.clusters) cluster_spend += c.spend;
    CHECK(cluster_spend == doctest::Approx(r.spend));
  }
  SUBCASE("a cap bounds the spend") {
    const auto r = run_day(w, 2, queries, LookupTable(zone_dictionary(w, coarse)), coarse, 500.0);
    CHECK(r.spend <= 500.0);
    CHECK(r.spend > 400.0);
  }
  SUBCASE("unsubsidized clusters match the counterfactual exactly") {
    const auto subsidized = run_day(w, 2, queries, LookupTable(zone_dictionary(w, coarse, 4)), coarse);
    const auto baseline = run_day(w, 2, queries, LookupTable(), coarse);
    REQUIRE(subsidized.clusters.size() == baseline.clusters.size());
    for (const auto& [key, c] : subsidized.clusters) {
      const auto& b = baseline.clusters.at(key);
      if (key.origin_zone == 4) {
        CHECK(c.orders >= b.orders);
      } else {
        CHECK(c.orders == b.orders);
        CHECK(c.revenue == b.revenue);
      }
    }
    CHECK(subsidized.orders > baseline.orders);
  }
}

TEST_CASE("report arithmetic") {
  DayResult main_day, cf_day;
  main_day.revenue = 112.0;
  main_day.orders = 11;
  main_day.spend = 10.0;
  cf_day.revenue = 100.0;
  cf_day.orders = 10;
  const auto r = report("model", 10.0, {main_day}, {cf_day});
  CHECK(*r.roi == doctest::Approx(1.2));
  CHECK(r.subsidy_rate == doctest::Approx(10.0 / 112.0));
  CHECK(r.normalized_revenue == doctest::Approx(1.12));
  CHECK(r.normalized_orders == doctest::Approx(1.1));

  const auto same = report("model", 0.0, {cf_day}, {cf_day});
  CHECK(same.normalized_revenue == 1.0);
  CHECK(same.normalized_orders == 1.0);
  CHECK_FALSE(same.roi.has_value());
  CHECK(same.to_json()["roi"].is_null());
}

TEST_CASE("mpc loop") {
  const auto w = small_world();
  HorizonConfig cfg;

  SUBCASE("zero target reproduces the counterfactual") {
    cfg.target_subsidy_rate = 0.0;
    const auto r = mpc_loop(w, Strategy::kOracle, {}, cfg);
    CHECK(r.spend == 0.0);
    CHECK_FALSE(r.roi.has_value());
    REQUIRE(r.days.size() == r.counterfactual.size());
    for (std::size_t d = 0; d < r.days.size(); ++d) {
      CHECK(r.days[d].orders == r.counterfactual[d].orders);
      CHECK(r.days[d].revenue == r.counterfactual[d].revenue);
    }
  }
  SUBCASE("accounting, pacing and determinism") {
    for (auto strategy : {Strategy::kOracle, Strategy::kUniform}) {
      CAPTURE(strategy_name(strategy));
      const auto r = mpc_loop(w, strategy, oracle_curves(w), cfg);
      CHECK(r.days.size() == 7);
      CHECK(r.dictionaries.size() == 7);
      CHECK(r.budget_total > 0.0);
      CHECK(r.spend > 0.0);
      CHECK(r.spend <= r.budget_total + 1e-9);
      double prev = r.budget_total;
      for (const auto& d : r.days) {
        CHECK(d.budget_remaining >= 0.0);
        CHECK(d.budget_remaining <= prev + 1e-9);
        prev = d.budget_remaining;
        CHECK(d.orders <= d.queries);
      }
      // Clusters that paid nothing saw no subsidized conversion, so common
      // random numbers make them identical to the counterfactual.
      for (std::size_t d = 0; d < r.days.size(); ++d) {
        for (const auto& [key, c] : r.days[d].clusters) {
          if (c.spend == 0.0) CHECK(c.orders == r.counterfactual[d].clusters.at(key).orders);
        }
      }
      CHECK(r.revenue >= r.cf_revenue);
      const auto again = mpc_loop(w, strategy, oracle_curves(w), cfg);
      CHECK(again.to_json().dump() == r.to_json().dump());
      CHECK(again.dictionaries.back().serialize() == r.dictionaries.back().serialize());
    }
  }
  SUBCASE("budget override fixes the horizon budget") {
    cfg.budget_override = 1234.5;
    const auto r = mpc_loop(w, Strategy::kOracle, {}, cfg);
    CHECK(r.budget_total == 1234.5);
    CHECK(r.spend <= 1234.5);
  }
  SUBCASE("the traffic seed selects an independent sample") {
    HorizonConfig other = cfg;
    other.seed = 1;
    CHECK(mpc_loop(w, Strategy::kOracle, {}, other).revenue != mpc_loop(w, Strategy::kOracle, {}, cfg).revenue);
  }
  SUBCASE("config validation and serialization") {
    cfg.horizon_days = 3;
    cfg.coarsening = {2, 6, 24};
    CHECK(HorizonConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    HorizonConfig bad = cfg;
    bad.horizon_days = 0;
    CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kConfig);
    CHECK(code_of([&] { mpc_loop(w, Strategy::kModel, {}, cfg); }) == ErrorCode::kConfig);
    CHECK(parse_strategy("uniform") == Strategy::kUniform);
  }
}

TEST_CASE("report files") {
  const auto w = small_world();
  HorizonConfig cfg;
  cfg.history_days = 7;
  cfg.horizon_days = 2;
  const auto r = mpc_loop(w, Strategy::kOracle, {}, cfg);
  const auto csv = r.trajectory_csv();
  CHECK(csv.rfind("day,queries,orders,revenue,spend", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  const auto j = r.to_json();
  for (const char* key : {"strategy", "budget_total", "subsidy_rate", "roi", "normalized", "days"}) {
    CHECK(j.contains(key));
  }
}
