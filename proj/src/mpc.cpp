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

#include "subsidy/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "subsidy/multenet.hpp"

namespace subsidy {

using nlohmann::json;

namespace {

int weekday(int day) { return ((day % 7) + 7) % 7; }

std::uint32_t traffic_stream(std::uint64_t seed) {
  return kSimulationStream + 16u * static_cast<std::uint32_t>(seed);
}

ClusterKey raw_key(const Query& q) { return {q.origin_zone, q.dest_zone, q.time_bucket}; }

void add_curves(DayResult& day, std::span<const Query> queries, std::span<const ElasticityCurve> curves,
                const Coarsening& coarsening) {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto& c = day.clusters[coarsening.apply(raw_key(queries[i]))];
    if (c.curve_sum.empty()) c.curve_sum.assign(curves[i].p.size(), 0.0);
    for (std::size_t j = 0; j < curves[i].p.size(); ++j) c.curve_sum[j] += curves[i].p[j];
  }
}

struct DayPlan {
  AllocationProblem problem;
  std::vector<int> assignment;
  double planned_value = 0.0;
  double planned_cost = 0.0;
  double lambda = 0.0;
  double gap_bound = 0.0;
  bool fallback = false;
};

DayPlan plan_day(std::span<const ClusterForecast> fc, const TreatmentGrid& grid, Strategy strategy, double slice,
                 const HorizonConfig& cfg) {
  DayPlan plan;
  plan.problem = problem_from_forecast(fc, grid, std::max(0.0, slice), cfg.u_lo, cfg.u_hi);
  const auto& p = plan.problem;
  const std::size_t n = p.clusters.size();
  if (strategy == Strategy::kUniform) {
    // One amount for everyone: the cheapest level whose cost covers the slice.
    std::size_t level = grid.size() - 1;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i) cost += p.cost(i, j);
      if (cost >= slice) {
        level = j;
        break;
      }
    }
    plan.assignment.assign(n, static_cast<int>(level));
  } else {
    try {
      const auto s = solve_lagrangian(p);
      plan.assignment = s.assignment;
      plan.lambda = s.dual_lambda;
      plan.gap_bound = s.optimality_gap_bound;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasible) throw;
      plan.assignment.assign(n, 0);
      plan.fallback = true;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(plan.assignment[i]);
    plan.planned_value += p.value(i, j);
    plan.planned_cost += p.cost(i, j);
  }
  return plan;
}

json day_json(const DayResult& d) {
  return {{"day", d.day},
          {"queries", d.queries},
          {"orders", d.orders},
          {"revenue", d.revenue},
          {"spend", d.spend},
          {"budget_remaining", d.budget_remaining},
          {"day_budget", d.day_budget},
          {"planned_cost", d.planned_cost},
          {"fallback", d.fallback}};
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kModel: return "model";
    case Strategy::kOracle: return "oracle";
    case Strategy::kUniform: return "uniform";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "model") return Strategy::kModel;
  if (name == "oracle") return Strategy::kOracle;
  if (name == "uniform") return Strategy::kUniform;
  throw Error(ErrorCode::kConfig, "unknown strategy '" + std::string(name) + "' (model|oracle|uniform)");
}

void HorizonConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, "horizon config: " + what); };
  if (history_days < 1 || horizon_days < 1 || resolve_interval_days < 1) fail("day counts must be positive");
  if (!(target_subsidy_rate >= 0.0 && target_subsidy_rate < 1.0)) fail("target_subsidy_rate must be in [0,1)");
  if (seed >= 4000) fail("seed must be < 4000");
  if (!(u_lo >= 0.0 && u_lo <= u_hi)) fail("bounds must satisfy 0 <= u_lo <= u_hi");
  if (budget_rounds < 0) fail("budget_rounds must be >= 0");
  coarsening.validate();
}

json HorizonConfig::to_json() const {
  return {{"history_days", history_days},
          {"horizon_days", horizon_days},
          {"target_subsidy_rate", target_subsidy_rate},
          {"resolve_interval_days", resolve_interval_days},
          {"seed", seed},
          {"coarsening",
           {{"zone_block", coarsening.zone_block},
            {"time_block", coarsening.time_block},
            {"time_period", coarsening.time_period}}},
          {"u_lo", u_lo},
          {"u_hi", std::isinf(u_hi) ? json(nullptr) : json(u_hi)},
          {"budget_rounds", budget_rounds},
          {"budget_override", budget_override < 0 ? json(nullptr) : json(budget_override)}};
}

HorizonConfig HorizonConfig::from_json(const json& j) {
  HorizonConfig c;
  try {
    c.history_days = j.value("history_days", c.history_days);
    c.horizon_days = j.value("horizon_days", c.horizon_days);
    c.target_subsidy_rate = j.value("target_subsidy_rate", c.target_subsidy_rate);
    c.resolve_interval_days = j.value("resolve_interval_days", c.resolve_interval_days);
    c.seed = j.value("seed", c.seed);
    if (j.contains("coarsening")) {
      const auto& cj = j.at("coarsening");
      c.coarsening.zone_block = cj.value("zone_block", c.coarsening.zone_block);
      c.coarsening.time_block = cj.value("time_block", c.coarsening.time_block);
      c.coarsening.time_period = cj.value("time_period", c.coarsening.time_period);
    }
    c.u_lo = j.value("u_lo", c.u_lo);
    if (j.contains("u_hi") && !j.at("u_hi").is_null()) c.u_hi = j.at("u_hi").get<double>();
    c.budget_rounds = j.value("budget_rounds", c.budget_rounds);
    if (j.contains("budget_override") && !j.at("budget_override").is_null()) {
      c.budget_override = j.at("budget_override").get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("horizon config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<Query> simulation_traffic(const World& world, int day) {
  return sample_queries(world, day, world.daily_volume(day), kSimulationStream);
}

DayResult run_day(const World& world, int day, std::span<const Query> queries, const LookupTable& table,
                  const Coarsening& coarsening, double cap) {
  const auto& services = world.params().services;
  DayResult r;
  r.day = day;
  r.queries = queries.size();
  for (const auto& q : queries) {
    const ClusterKey raw = raw_key(q);
    double payout = 0.0;
    double own_amount = 0.0;
    for (const auto& s : services) {
      const double amount = table.lookup(s.id, raw).amount;
      payout += s.gamma * amount;
      if (s.id == q.service_class) own_amount = amount;
    }
    std::size_t level = treatment_index(world.grid(), own_amount);
    if (r.spend + payout > cap) {
      level = 0;
      payout = 0.0;
    }
    const auto outcome = realize_outcome(world, q, static_cast<int>(level));
    auto& c = r.clusters[coarsening.apply(raw)];
    if (c.quote_sum.empty()) c.quote_sum.assign(services.size(), 0.0);
    c.queries += 1.0;
    for (std::size_t k = 0; k < services.size(); ++k) c.quote_sum[k] += world.service_revenue(q, k);
    if (outcome.converted) {
      ++r.orders;
      r.revenue += outcome.revenue_if_converted;
      r.spend += payout;
      c.orders += 1.0;
      c.revenue += outcome.revenue_if_converted;
      c.spend += payout;
    }
  }
  return r;
}

DayResult run_day(const World& world, int day, const AllocationDictionary& dictionary, double cap) {
  const auto queries = simulation_traffic(world, day);
  return run_day(world, day, queries, LookupTable(dictionary), dictionary.coarsening, cap);
}

std::vector<ClusterForecast> forecast(std::span<const DayResult> history, int target_day,
                                      std::span<const ServiceClass> services, std::span<const ClusterKey> extra) {
  if (history.empty()) throw Error(ErrorCode::kEmptyInput, "forecast needs at least one history day");
  const int dow = weekday(target_day);
  std::size_t matched_days = 0;
  for (const auto& d : history) matched_days += weekday(d.day) == dow;
  const bool use_dow = matched_days > 0;
  const double n_days = static_cast<double>(use_dow ? matched_days : history.size());

  struct Acc {
    double volume = 0.0;  // over weekday-matched (or all) days
    double queries = 0.0;
    std::vector<double> quote_sum;
    std::vector<double> curve_sum;
  };
  std::map<ClusterKey, Acc> acc;
  std::size_t levels = 0;
  for (const auto& d : history) {
    const bool counts = !use_dow || weekday(d.day) == dow;
    for (const auto& [key, c] : d.clusters) {
      auto& a = acc[key];
      if (a.quote_sum.empty()) a.quote_sum.assign(services.size(), 0.0);
      if (a.curve_sum.empty() && !c.curve_sum.empty()) a.curve_sum.assign(c.curve_sum.size(), 0.0);
      if (counts) a.volume += c.queries;
      a.queries += c.queries;
      for (std::size_t k = 0; k < std::min(a.quote_sum.size(), c.quote_sum.size()); ++k) a.quote_sum[k] += c.quote_sum[k];
      for (std::size_t j = 0; j < std::min(a.curve_sum.size(), c.curve_sum.size()); ++j) a.curve_sum[j] += c.curve_sum[j];
      levels = std::max(levels, c.curve_sum.size());
    }
  }
  if (levels == 0) throw Error(ErrorCode::kData, "forecast needs elasticity curves in the history");

  std::vector<double> gamma;
  for (const auto& s : services) gamma.push_back(s.gamma);

  std::vector<ClusterForecast> out;
  double total_queries = 0.0, total_volume = 0.0;
  std::vector<double> total_quotes(services.size(), 0.0), total_curve(levels, 0.0);
  for (const auto& [key, a] : acc) {
    if (a.queries <= 0.0 || a.curve_sum.size() != levels) continue;
    ClusterForecast f;
    f.key = key;
    f.n_hat = a.volume / n_days;
    for (double s : a.curve_sum) f.p_hat.push_back(s / a.queries);
    for (double s : a.quote_sum) f.pr_hat.push_back(s / a.queries);
    f.gamma = gamma;
    total_queries += a.queries;
    total_volume += f.n_hat;
    for (std::size_t k = 0; k < services.size(); ++k) total_quotes[k] += a.quote_sum[k];
    for (std::size_t j = 0; j < levels; ++j) total_curve[j] += a.curve_sum[j];
    out.push_back(std::move(f));
  }
  const std::size_t known = out.size();
  for (const auto& key : extra) {
    if (acc.count(key) || known == 0) continue;
    ClusterForecast f;
    f.key = key;
    f.n_hat = total_volume / static_cast<double>(known);
    for (double s : total_curve) f.p_hat.push_back(s / total_queries);
    for (double s : total_quotes) f.pr_hat.push_back(s / total_queries);
    f.gamma = gamma;
    out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  for (auto& f : out) {
    for (std::size_t j = 1; j < f.p_hat.size(); ++j) f.p_hat[j] = std::max(f.p_hat[j], f.p_hat[j - 1]);
  }
  return out;
}

double forecast_revenue(std::span<const ClusterForecast> fc, std::span<const int> levels) {
  double total = 0.0;
  for (std::size_t i = 0; i < fc.size(); ++i) {
    const auto j = levels.empty() ? 0 : static_cast<std::size_t>(levels[i]);
    for (std::size_t k = 0; k < fc[i].gamma.size(); ++k) {
      total += fc[i].gamma[k] * fc[i].n_hat * fc[i].pr_hat[k] * fc[i].p_hat[j];
    }
  }
  return total;
}

double budget_from_rate(double forecast_revenue, double target_rate) {
  if (!(target_rate >= 0.0 && target_rate < 1.0)) throw Error(ErrorCode::kConfig, "target rate must be in [0,1)");
  return target_rate * forecast_revenue;
}

AllocationProblem problem_from_forecast(std::span<const ClusterForecast> fc, const TreatmentGrid& grid,
                                        double budget, double u_lo, double u_hi) {
  AllocationProblem p;
  p.budget = budget;
  p.u_lo = u_lo;
  p.u_hi = u_hi;
  for (const auto& f : fc) {
    if (f.p_hat.size() != grid.size()) throw Error(ErrorCode::kShape, "forecast curve length differs from grid");
    ClusterStats c;
    c.key = f.key;
    c.n_hat = f.n_hat;
    c.p_hat = f.p_hat;
    c.pr_hat = f.pr_hat;
    c.gamma = f.gamma;
    c.cost.assign(f.gamma.size(), grid.levels());
    p.clusters.push_back(std::move(c));
  }
  return p;
}

CurveSource model_curves(const MulTeNetParams& params) {
  return [&params](std::span<const Query> q) { return infer_batch(params, q); };
}

CurveSource oracle_curves(const World& world) {
  return [&world](std::span<const Query> qs) {
    std::vector<ElasticityCurve> out;
    out.reserve(qs.size());
    for (const auto& q : qs) out.push_back(true_elasticity(world, q));
    return out;
  };
}

json SimulationReport::to_json() const {
  json traj = json::array();
  for (std::size_t i = 0; i < days.size(); ++i) {
    json d = day_json(days[i]);
    if (i < counterfactual.size()) {
      d["cf_revenue"] = counterfactual[i].revenue;
      d["cf_orders"] = counterfactual[i].orders;
    }
    traj.push_back(std::move(d));
  }
  return {{"strategy", strategy},
          {"budget_total", budget_total},
          {"revenue", revenue},
          {"orders", orders},
          {"spend", spend},
          {"counterfactual", {{"revenue", cf_revenue}, {"orders", cf_orders}}},
          {"subsidy_rate", subsidy_rate},
          {"roi", roi ? json(*roi) : json(nullptr)},
          {"normalized", {{"revenue", normalized_revenue}, {"orders", normalized_orders}}},
          {"days", traj},
          {"notes", notes}};
}

std::string SimulationReport::trajectory_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "day,queries,orders,revenue,spend,budget_remaining,day_budget,planned_cost,cf_revenue,cf_orders\n";
  for (std::size_t i = 0; i < days.size(); ++i) {
    const auto& d = days[i];
    out << d.day << ',' << d.queries << ',' << d.orders << ',' << d.revenue << ',' << d.spend << ','
        << d.budget_remaining << ',' << d.day_budget << ',' << d.planned_cost << ',';
    if (i < counterfactual.size()) out << counterfactual[i].revenue << ',' << counterfactual[i].orders;
    else out << ',';
    out << '\n';
  }
  return out.str();
}

SimulationReport report(std::string strategy, double budget_total, std::vector<DayResult> days,
                        std::vector<DayResult> counterfactual) {
  SimulationReport r;
  r.strategy = std::move(strategy);
  r.budget_total = budget_total;
  for (const auto& d : days) {
    r.revenue += d.revenue;
    r.orders += static_cast<double>(d.orders);
    r.spend += d.spend;
  }
  for (const auto& d : counterfactual) {
    r.cf_revenue += d.revenue;
    r.cf_orders += static_cast<double>(d.orders);
  }
  r.subsidy_rate = r.revenue > 0 ? r.spend / r.revenue : 0.0;
  if (r.spend > 0) r.roi = (r.revenue - r.cf_revenue) / r.spend;
  r.normalized_revenue = r.cf_revenue > 0 ? r.revenue / r.cf_revenue : 1.0;
  r.normalized_orders = r.cf_orders > 0 ? r.orders / r.cf_orders : 1.0;
  r.days = std::move(days);
  r.counterfactual = std::move(counterfactual);
  return r;
}

SimulationReport mpc_loop(const World& world, Strategy strategy, const CurveSource& curves,
                          const HorizonConfig& cfg) {
  cfg.validate();
  const auto& services = world.params().services;
  const auto& grid = world.grid();
  const CurveSource source = strategy == Strategy::kOracle ? oracle_curves(world) : curves;
  if (!source) throw Error(ErrorCode::kConfig, "strategy needs an elasticity source");
  const LookupTable no_subsidy;
  const std::uint32_t stream = traffic_stream(cfg.seed);
  auto traffic = [&](int day) { return sample_queries(world, day, world.daily_volume(day), stream); };

  std::vector<DayResult> history;
  for (int d = 0; d < cfg.history_days; ++d) {
    const auto q = traffic(d);
    auto r = run_day(world, d, q, no_subsidy, cfg.coarsening);
    add_curves(r, q, source(q), cfg.coarsening);
    history.push_back(std::move(r));
  }
  auto window = [&] {
    const auto n = static_cast<std::size_t>(cfg.history_days);
    return std::span<const DayResult>(history).last(std::min(n, history.size()));
  };

  // Size the budget against the revenue the plan itself is forecast to earn.
  const int first = cfg.history_days;
  const int horizon = cfg.horizon_days;
  std::vector<std::vector<ClusterForecast>> initial;
  double base_revenue = 0.0;
  for (int h = 0; h < horizon; ++h) {
    initial.push_back(forecast(window(), first + h, services));
    base_revenue += forecast_revenue(initial.back());
  }
  double budget_total = budget_from_rate(base_revenue, cfg.target_subsidy_rate);
  for (int round = 0; round < cfg.budget_rounds && budget_total > 0 && cfg.budget_override < 0; ++round) {
    double planned = 0.0;
    for (const auto& fc : initial) planned += plan_day(fc, grid, strategy, budget_total / horizon, cfg).planned_value;
    budget_total = budget_from_rate(planned, cfg.target_subsidy_rate);
  }

  if (cfg.budget_override >= 0) budget_total = cfg.budget_override;

  std::vector<DayResult> days, counterfactual;
  std::vector<std::string> notes;
  std::vector<AllocationDictionary> dictionaries;
  double spent = 0.0;
  AllocationDictionary dict;
  dict.coarsening = cfg.coarsening;
  for (int h = 0; h < horizon; ++h) {
    const int day = first + h;
    const auto queries = traffic(day);
    const double remaining = std::max(0.0, budget_total - spent);
    const double slice = remaining / static_cast<double>(horizon - h);

    DayPlan plan;
    if (h % cfg.resolve_interval_days == 0) {
      const auto fc = forecast(window(), day, services);
      plan = plan_day(fc, grid, strategy, slice, cfg);
      AllocationSolution s;
      s.assignment = plan.assignment;
      s.dual_lambda = plan.lambda;
      s.optimality_gap_bound = plan.gap_bound;
      dict = emit_dictionary(s, plan.problem.clusters, grid, services, cfg.coarsening, day);
      dict.budget = slice;
      if (plan.fallback) notes.push_back("day " + std::to_string(day) + ": allocation infeasible, all-control plan");
    }
    const double cap = strategy == Strategy::kUniform ? std::min(slice, remaining) : remaining;
    auto r = run_day(world, day, queries, LookupTable(dict), cfg.coarsening, cap);
    r.budget_remaining = remaining;
    r.day_budget = slice;
    r.planned_cost = plan.planned_cost;
    r.fallback = plan.fallback;
    spent += r.spend;

    auto cf = run_day(world, day, queries, no_subsidy, cfg.coarsening);
    counterfactual.push_back(std::move(cf));

    add_curves(r, queries, source(queries), cfg.coarsening);
    history.push_back(r);
    days.push_back(std::move(r));
    dictionaries.push_back(dict);
  }

  auto out = report(std::string(strategy_name(strategy)), budget_total, std::move(days), std::move(counterfactual));
  out.dictionaries = std::move(dictionaries);
  out.notes = std::move(notes);
  return out;
}

SimulationReport mpc_loop(const World& world, const MulTeNetParams& params, const HorizonConfig& cfg) {
  return mpc_loop(world, Strategy::kModel, model_curves(params), cfg);
}

}  // namespace subsidy
