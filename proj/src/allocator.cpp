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

#include "subsidy/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

namespace subsidy {

using nlohmann::json;

namespace {

constexpr std::string_view kDictionaryFormat = "subsidy-dictionary/1";
constexpr std::string_view kProblemFormat = "subsidy-problem/1";
constexpr int kBisectionIterations = 48;

struct Accumulator {
  double count = 0.0;
  std::vector<double> p_sum;
  std::vector<double> quote_sum;
  std::vector<ClusterKey> aliases;
};

void merge_into(Accumulator& dst, const ClusterKey& src_key, const Accumulator& src) {
  dst.count += src.count;
  for (std::size_t j = 0; j < dst.p_sum.size(); ++j) dst.p_sum[j] += src.p_sum[j];
  for (std::size_t k = 0; k < dst.quote_sum.size(); ++k) dst.quote_sum[k] += src.quote_sum[k];
  dst.aliases.push_back(src_key);
  dst.aliases.insert(dst.aliases.end(), src.aliases.begin(), src.aliases.end());
}

// Nearest time bucket sharing origin/dest, else the canonical neighbor.
std::map<ClusterKey, Accumulator>::iterator merge_target(std::map<ClusterKey, Accumulator>& groups,
                                                         std::map<ClusterKey, Accumulator>::iterator src) {
  const ClusterKey& k = src->first;
  auto best = groups.end();
  int best_gap = 0;
  for (auto it = groups.begin(); it != groups.end(); ++it) {
    if (it == src || it->first.origin_zone != k.origin_zone || it->first.dest_zone != k.dest_zone) continue;
    const int gap = std::abs(it->first.time_bucket - k.time_bucket);
    if (best == groups.end() || gap < best_gap) {
      best = it;
      best_gap = gap;
    }
  }
  if (best != groups.end()) return best;
  auto next = std::next(src);
  return next != groups.end() ? next : std::prev(src);
}

struct LevelOption {
  std::size_t level;
  double value;
  double cost;
};

// Per-cluster feasible options, precomputed once per solve.
std::vector<std::vector<LevelOption>> options_of(const AllocationProblem& p) {
  std::vector<std::vector<LevelOption>> out;
  out.reserve(p.clusters.size());
  for (std::size_t i = 0; i < p.clusters.size(); ++i) {
    std::vector<LevelOption> opts;
    for (auto j : feasible_levels(p.clusters[i], p.u_lo, p.u_hi)) opts.push_back({j, p.value(i, j), p.cost(i, j)});
    out.push_back(std::move(opts));
  }
  return out;
}

// Index into opts maximizing value - lambda * cost; ties to lower cost, then
// lower level.
std::size_t best_option(const std::vector<LevelOption>& opts, double lambda) {
  std::size_t best = 0;
  double best_score = opts[0].value - lambda * opts[0].cost;
  for (std::size_t o = 1; o < opts.size(); ++o) {
    const double score = opts[o].value - lambda * opts[o].cost;
    if (score > best_score || (score == best_score && opts[o].cost < opts[best].cost)) {
      best = o;
      best_score = score;
    }
  }
  return best;
}

struct Pick {
  std::vector<std::size_t> choice;  // option index per cluster
  double value = 0.0;
  double cost = 0.0;
  double lagrangian = 0.0;          // sum_i max_j (v - lambda c)
};

Pick pick_at(const std::vector<std::vector<LevelOption>>& options, double lambda) {
  Pick pk;
  pk.choice.reserve(options.size());
  for (const auto& opts : options) {
    const auto o = best_option(opts, lambda);
    pk.choice.push_back(o);
    pk.value += opts[o].value;
    pk.cost += opts[o].cost;
    pk.lagrangian += opts[o].value - lambda * opts[o].cost;
  }
  return pk;
}

double slack_tolerance(double budget) { return 1e-9 * std::max(1.0, std::abs(budget)); }

AllocationSolution to_solution(const std::vector<std::vector<LevelOption>>& options,
                               const std::vector<std::size_t>& choice) {
  AllocationSolution s;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const auto& o = options[i][choice[i]];
    s.assignment.push_back(static_cast<int>(o.level));
    s.objective += o.value;
    s.total_cost += o.cost;
  }
  return s;
}

struct Candidate {
  std::vector<std::size_t> choice;
  double cost = 0.0;
};

double objective_of(const std::vector<std::vector<LevelOption>>& options, const std::vector<std::size_t>& choice) {
  double v = 0.0;
  for (std::size_t i = 0; i < options.size(); ++i) v += options[i][choice[i]].value;
  return v;
}

// Downgrades the cheapest loss per unit saved until within budget.
Candidate repair(const std::vector<std::vector<LevelOption>>& options, Candidate c, double budget, double tol) {
  while (c.cost > budget + tol) {
    double best_ratio = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bo = 0;
    for (std::size_t i = 0; i < options.size(); ++i) {
      const auto& cur = options[i][c.choice[i]];
      for (std::size_t o = 0; o < options[i].size(); ++o) {
        const double saved = cur.cost - options[i][o].cost;
        if (saved <= 0) continue;
        const double ratio = (cur.value - options[i][o].value) / saved;
        if (ratio < best_ratio) {
          best_ratio = ratio;
          bi = i;
          bo = o;
        }
      }
    }
    if (!std::isfinite(best_ratio)) throw Error(ErrorCode::kInfeasible, "repair could not reach the budget");
    c.cost += options[bi][bo].cost - options[bi][c.choice[bi]].cost;
    c.choice[bi] = bo;
  }
  return c;
}

enum class FillRule { kRatio, kGain };

// Spends leftover budget on affordable upgrades, best value per cost first
// (kRatio) or largest value gain first (kGain).
Candidate fill(const std::vector<std::vector<LevelOption>>& options, Candidate c, double budget, double tol,
               FillRule rule) {
  for (;;) {
    double best_score = 0.0;
    bool found = false;
    std::size_t bi = 0, bo = 0;
    const double remaining = budget - c.cost;
    for (std::size_t i = 0; i < options.size(); ++i) {
      const auto& cur = options[i][c.choice[i]];
      for (std::size_t o = 0; o < options[i].size(); ++o) {
        const double gain = options[i][o].value - cur.value;
        const double extra = options[i][o].cost - cur.cost;
        if (gain <= 0 || extra > remaining + tol) continue;
        double score = gain;
        if (rule == FillRule::kRatio) score = extra > 0 ? gain / extra : std::numeric_limits<double>::infinity();
        if (!found || score > best_score) {
          found = true;
          best_score = score;
          bi = i;
          bo = o;
        }
      }
    }
    if (!found) break;
    c.cost += options[bi][bo].cost - options[bi][c.choice[bi]].cost;
    c.choice[bi] = bo;
  }
  return c;
}

// Best of both fill rules; ties keep the cheaper plan.
Candidate polish(const std::vector<std::vector<LevelOption>>& options, const Candidate& c, double budget,
                 double tol) {
  Candidate a = fill(options, c, budget, tol, FillRule::kRatio);
  Candidate b = fill(options, c, budget, tol, FillRule::kGain);
  const double va = objective_of(options, a.choice), vb = objective_of(options, b.choice);
  return vb > va || (vb == va && b.cost < a.cost) ? b : a;
}

json key_json(const ClusterKey& k) {
  return {{"origin", k.origin_zone}, {"dest", k.dest_zone}, {"time_bucket", k.time_bucket}};
}

ClusterKey key_from(const json& j) {
  return {j.at("origin").get<int>(), j.at("dest").get<int>(), j.at("time_bucket").get<int>()};
}

}  // namespace

ClusterKey Coarsening::apply(const ClusterKey& raw) const {
  const int t = time_period > 0 ? raw.time_bucket % time_period : raw.time_bucket;
  return {raw.origin_zone / zone_block, raw.dest_zone / zone_block, t / time_block};
}

void Coarsening::validate() const {
  if (zone_block < 1 || time_block < 1 || time_period < 0) {
    throw Error(ErrorCode::kConfig, "coarsening blocks must be >= 1 and period >= 0");
  }
}

std::vector<ClusterStats> build_clusters(std::span<const Query> queries, std::span<const ElasticityCurve> curves,
                                         std::span<const std::vector<double>> quotes,
                                         std::span<const ServiceClass> services, const TreatmentGrid& grid,
                                         const ClusteringConfig& cfg) {
  if (queries.empty()) throw Error(ErrorCode::kEmptyInput, "no queries to cluster");
  if (curves.size() != queries.size() || quotes.size() != queries.size()) {
    throw Error(ErrorCode::kShape, "queries, curves and quotes must align one-to-one");
  }
  cfg.coarsening.validate();
  const std::size_t levels = grid.size();
  const std::size_t n_services = services.size();
  if (!cfg.service_cost_scale.empty() && cfg.service_cost_scale.size() != n_services) {
    throw Error(ErrorCode::kConfig, "service_cost_scale needs one entry per service");
  }

  std::map<ClusterKey, Accumulator> groups;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    if (curves[i].p.size() != levels) throw Error(ErrorCode::kShape, "curve length differs from the grid");
    if (quotes[i].size() != n_services) throw Error(ErrorCode::kShape, "quote count differs from services");
    auto& acc = groups[cfg.coarsening.apply({q.origin_zone, q.dest_zone, q.time_bucket})];
    if (acc.p_sum.empty()) {
      acc.p_sum.assign(levels, 0.0);
      acc.quote_sum.assign(n_services, 0.0);
    }
    acc.count += 1.0;
    for (std::size_t j = 0; j < levels; ++j) acc.p_sum[j] += curves[i].p[j];
    for (std::size_t k = 0; k < n_services; ++k) acc.quote_sum[k] += quotes[i][k];
  }

  while (groups.size() > 1) {
    auto smallest = groups.end();
    for (auto it = groups.begin(); it != groups.end(); ++it) {
      if (it->second.count < static_cast<double>(cfg.min_size) &&
          (smallest == groups.end() || it->second.count < smallest->second.count)) {
        smallest = it;
      }
    }
    if (smallest == groups.end()) break;
    auto target = merge_target(groups, smallest);
    merge_into(target->second, smallest->first, smallest->second);
    groups.erase(smallest);
  }

  std::vector<ClusterStats> out;
  out.reserve(groups.size());
  for (auto& [key, acc] : groups) {
    ClusterStats c;
    c.key = key;
    c.aliases = acc.aliases;
    std::sort(c.aliases.begin(), c.aliases.end());
    c.n_hat = acc.count * cfg.volume_scale;
    for (std::size_t j = 0; j < levels; ++j) c.p_hat.push_back(acc.p_sum[j] / acc.count);
    // Rounding in the mean may break ties between equal levels.
    for (std::size_t j = 1; j < levels; ++j) c.p_hat[j] = std::max(c.p_hat[j], c.p_hat[j - 1]);
    for (std::size_t k = 0; k < n_services; ++k) {
      c.pr_hat.push_back(acc.quote_sum[k] / acc.count);
      c.gamma.push_back(services[k].gamma);
      const double scale = cfg.service_cost_scale.empty() ? 1.0 : cfg.service_cost_scale[k];
      std::vector<double> row;
      for (std::size_t j = 0; j < levels; ++j) row.push_back(grid.amount(j) * scale);
      c.cost.push_back(std::move(row));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<std::size_t> feasible_levels(const ClusterStats& c, double u_lo, double u_hi) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < c.p_hat.size(); ++j) {
    bool ok = true;
    for (const auto& row : c.cost) {
      const double expected = c.p_hat[j] * row[j];
      if (expected < u_lo || expected > u_hi) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(j);
  }
  if (out.empty()) {
    throw Error(ErrorCode::kInfeasible, "no level of cluster (" + std::to_string(c.key.origin_zone) + "," +
                                            std::to_string(c.key.dest_zone) + "," +
                                            std::to_string(c.key.time_bucket) + ") satisfies the subsidy bounds");
  }
  return out;
}

double AllocationProblem::value(std::size_t i, std::size_t j) const {
  const auto& c = clusters[i];
  double v = 0.0;
  for (std::size_t k = 0; k < c.gamma.size(); ++k) v += c.gamma[k] * c.n_hat * c.pr_hat[k] * c.p_hat[j];
  return v;
}

double AllocationProblem::cost(std::size_t i, std::size_t j) const {
  const auto& c = clusters[i];
  double v = 0.0;
  for (std::size_t k = 0; k < c.gamma.size(); ++k) v += c.gamma[k] * c.n_hat * c.p_hat[j] * c.cost[k][j];
  return v;
}

void AllocationProblem::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, "allocation problem: " + what); };
  if (!(budget >= 0) || !std::isfinite(budget)) fail("budget must be finite and >= 0");
  if (!(u_lo >= 0) || !(u_lo <= u_hi)) fail("bounds must satisfy 0 <= u_lo <= u_hi");
  const std::size_t levels = this->levels();
  for (const auto& c : clusters) {
    if (c.p_hat.size() != levels || levels < 2) fail("every cluster needs the same number of levels (>= 2)");
    if (c.pr_hat.size() != c.gamma.size() || c.cost.size() != c.gamma.size()) fail("per-service arrays disagree");
    if (!(c.n_hat >= 0)) fail("n_hat must be >= 0");
    for (std::size_t j = 0; j < levels; ++j) {
      if (!(c.p_hat[j] >= 0 && c.p_hat[j] <= 1)) fail("p_hat outside [0,1]");
      if (j > 0 && c.p_hat[j] < c.p_hat[j - 1]) fail("p_hat must be nondecreasing");
    }
    for (const auto& row : c.cost) {
      if (row.size() != levels) fail("cost row length differs from levels");
      for (std::size_t j = 0; j < levels; ++j) {
        if (!(row[j] >= 0) || (j > 0 && row[j] < row[j - 1])) fail("costs must be nonnegative and nondecreasing");
      }
    }
  }
}

json AllocationProblem::to_json() const {
  json cl = json::array();
  for (const auto& c : clusters) {
    json aliases = json::array();
    for (const auto& a : c.aliases) aliases.push_back(key_json(a));
    cl.push_back({{"key", key_json(c.key)},
                  {"aliases", aliases},
                  {"n_hat", c.n_hat},
                  {"p_hat", c.p_hat},
                  {"pr_hat", c.pr_hat},
                  {"gamma", c.gamma},
                  {"cost", c.cost}});
  }
  return {{"format", kProblemFormat},
          {"budget", budget},
          {"u_lo", u_lo},
          {"u_hi", std::isinf(u_hi) ? json(nullptr) : json(u_hi)},
          {"clusters", cl}};
}

AllocationProblem AllocationProblem::from_json(const json& j) {
  AllocationProblem p;
  try {
    if (j.value("format", std::string()) != kProblemFormat) throw Error(ErrorCode::kParse, "unrecognized problem format");
    p.budget = j.at("budget").get<double>();
    p.u_lo = j.value("u_lo", 0.0);
    p.u_hi = j.contains("u_hi") && !j.at("u_hi").is_null() ? j.at("u_hi").get<double>() : kUnbounded;
    for (const auto& cj : j.at("clusters")) {
      ClusterStats c;
      c.key = key_from(cj.at("key"));
      for (const auto& a : cj.value("aliases", json::array())) c.aliases.push_back(key_from(a));
      c.n_hat = cj.at("n_hat").get<double>();
      c.p_hat = cj.at("p_hat").get<std::vector<double>>();
      c.pr_hat = cj.at("pr_hat").get<std::vector<double>>();
      c.gamma = cj.at("gamma").get<std::vector<double>>();
      c.cost = cj.at("cost").get<std::vector<std::vector<double>>>();
      p.clusters.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("allocation problem: ") + e.what());
  }
  p.validate();
  return p;
}

void check_solution(const AllocationProblem& p, const AllocationSolution& s) {
  if (s.assignment.size() != p.clusters.size()) throw Error(ErrorCode::kInfeasible, "one level per cluster required");
  double total = 0.0;
  for (std::size_t i = 0; i < p.clusters.size(); ++i) {
    const int j = s.assignment[i];
    if (j < 0 || static_cast<std::size_t>(j) >= p.levels()) throw Error(ErrorCode::kInfeasible, "level out of range");
    const auto feasible = feasible_levels(p.clusters[i], p.u_lo, p.u_hi);
    if (std::find(feasible.begin(), feasible.end(), static_cast<std::size_t>(j)) == feasible.end()) {
      throw Error(ErrorCode::kInfeasible, "cluster " + std::to_string(i) + " assigned a bound-infeasible level");
    }
    total += p.cost(i, static_cast<std::size_t>(j));
  }
  if (total > p.budget + slack_tolerance(p.budget)) {
    throw Error(ErrorCode::kInfeasible, "total cost exceeds the budget");
  }
}

AllocationSolution solve_lagrangian(const AllocationProblem& p) {
  p.validate();
  const auto options = options_of(p);
  const double budget = p.budget;
  const double tol = slack_tolerance(budget);

  // Above lambda_max every cluster sits on its cheapest level.
  double lambda_max = 0.0;
  for (const auto& opts : options) {
    const LevelOption* cheapest = &opts[0];
    for (const auto& o : opts) {
      if (o.cost < cheapest->cost || (o.cost == cheapest->cost && o.value > cheapest->value)) cheapest = &o;
    }
    for (const auto& o : opts) {
      if (o.cost > cheapest->cost) {
        lambda_max = std::max(lambda_max, (o.value - cheapest->value) / (o.cost - cheapest->cost));
      }
    }
  }
  lambda_max = 2.0 * lambda_max + 1.0;

  double lo = 0.0;
  double hi = lambda_max;
  Pick at_lo = pick_at(options, lo);
  Pick at_hi = at_lo;
  if (at_lo.cost > budget + tol) {
    at_hi = pick_at(options, hi);
    if (at_hi.cost > budget + tol) {
      throw Error(ErrorCode::kInfeasible, "cheapest feasible assignment exceeds the budget");
    }
    for (int it = 0; it < kBisectionIterations; ++it) {
      if (at_lo.cost - at_hi.cost < 1e-9 * budget) break;
      const double mid = 0.5 * (lo + hi);
      Pick m = pick_at(options, mid);
      if (m.cost <= budget + tol) {
        hi = mid;
        at_hi = std::move(m);
      } else {
        lo = mid;
        at_lo = std::move(m);
      }
    }
  } else {
    hi = 0.0;
  }

  // Two primal candidates: the feasible side of the bracket, and the
  // infeasible side repaired back under the budget.
  Candidate best = polish(options, {at_hi.choice, at_hi.cost}, budget, tol);
  if (at_lo.cost > budget + tol) {
    Candidate repaired = polish(options, repair(options, {at_lo.choice, at_lo.cost}, budget, tol), budget, tol);
    const double gain = objective_of(options, repaired.choice) - objective_of(options, best.choice);
    if (gain > 0) best = std::move(repaired);
  }
  const auto& choice = best.choice;

  AllocationSolution s = to_solution(options, choice);
  s.dual_lambda = hi;
  // Any lambda >= 0 bounds the optimum from above.
  double bound = std::numeric_limits<double>::infinity();
  for (double lam : {0.0, lo, hi}) bound = std::min(bound, lam * budget + pick_at(options, lam).lagrangian);
  s.dual_bound = bound;
  s.optimality_gap_bound = std::max(0.0, bound - s.objective);
  check_solution(p, s);
  return s;
}

AllocationSolution solve_exact(const AllocationProblem& p, double cost_scale) {
  p.validate();
  if (!(cost_scale > 0)) throw Error(ErrorCode::kConfig, "cost_scale must be positive");
  const double scaled_budget = std::floor(p.budget * cost_scale + 1e-9);
  if (scaled_budget > 1e6) throw Error(ErrorCode::kInstanceTooLarge, "scaled budget exceeds 10^6 units");
  const auto width = static_cast<std::size_t>(scaled_budget) + 1;
  const auto options = options_of(p);
  const std::size_t n = options.size();
  if (n * width > 200'000'000) throw Error(ErrorCode::kInstanceTooLarge, "DP table too large");

  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> prev(width, 0.0), next(width);
  std::vector<std::uint8_t> choice(n * width, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(next.begin(), next.end(), kNone);
    for (std::size_t o = 0; o < options[i].size(); ++o) {
      const auto w = static_cast<std::size_t>(std::llround(options[i][o].cost * cost_scale));
      if (w >= width) continue;
      const double v = options[i][o].value;
      for (std::size_t cap = w; cap < width; ++cap) {
        if (prev[cap - w] == kNone) continue;
        const double cand = prev[cap - w] + v;
        if (cand > next[cap]) {
          next[cap] = cand;
          choice[i * width + cap] = static_cast<std::uint8_t>(o);
        }
      }
    }
    std::swap(prev, next);
  }
  if (prev[width - 1] == kNone) throw Error(ErrorCode::kInfeasible, "no assignment fits the budget");

  std::vector<std::size_t> picked(n);
  std::size_t cap = width - 1;
  for (std::size_t i = n; i-- > 0;) {
    const std::size_t o = choice[i * width + cap];
    picked[i] = o;
    cap -= static_cast<std::size_t>(std::llround(options[i][o].cost * cost_scale));
  }
  AllocationSolution s = to_solution(options, picked);
  s.dual_bound = s.objective;
  return s;
}

std::string AllocationDictionary::serialize() const {
  json entries_j = json::array();
  for (const auto& e : entries) {
    entries_j.push_back({{"k", e.k},
                         {"origin", e.key.origin_zone},
                         {"dest", e.key.dest_zone},
                         {"time_bucket", e.key.time_bucket},
                         {"amount", e.amount}});
  }
  json meta = {{"format", kDictionaryFormat},
               {"solved_at", solved_at},
               {"budget", budget},
               {"lambda", lambda},
               {"gap_bound", gap_bound},
               {"coarsening",
                {{"zone_block", coarsening.zone_block},
                 {"time_block", coarsening.time_block},
                 {"time_period", coarsening.time_period}}}};
  json doc = {{"meta", meta}, {"entries", entries_j}};
  return doc.dump() + "\n";
}

AllocationDictionary AllocationDictionary::parse(std::string_view text) {
  AllocationDictionary d;
  try {
    const json doc = json::parse(text);
    const auto& meta = doc.at("meta");
    if (meta.value("format", std::string()) != kDictionaryFormat) {
      throw Error(ErrorCode::kParse, "unrecognized dictionary format");
    }
    d.solved_at = meta.value("solved_at", 0LL);
    d.budget = meta.value("budget", 0.0);
    d.lambda = meta.value("lambda", 0.0);
    d.gap_bound = meta.value("gap_bound", 0.0);
    if (meta.contains("coarsening")) {
      const auto& c = meta.at("coarsening");
      d.coarsening.zone_block = c.value("zone_block", 1);
      d.coarsening.time_block = c.value("time_block", 1);
      d.coarsening.time_period = c.value("time_period", 0);
    }
    d.coarsening.validate();
    for (const auto& e : doc.at("entries")) {
      d.entries.push_back({e.at("k").get<int>(),
                           {e.at("origin").get<int>(), e.at("dest").get<int>(), e.at("time_bucket").get<int>()},
                           e.at("amount").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("dictionary: ") + e.what());
  }
  return d;
}

void AllocationDictionary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << serialize();
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

AllocationDictionary AllocationDictionary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open dictionary " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

AllocationDictionary emit_dictionary(const AllocationSolution& s, std::span<const ClusterStats> clusters,
                                     const TreatmentGrid& grid, std::span<const ServiceClass> services,
                                     const Coarsening& coarsening, long long solved_at) {
  if (s.assignment.size() != clusters.size()) throw Error(ErrorCode::kShape, "solution does not match clusters");
  AllocationDictionary d;
  d.solved_at = solved_at;
  d.lambda = s.dual_lambda;
  d.gap_bound = s.optimality_gap_bound;
  d.coarsening = coarsening;
  for (const auto& svc : services) {
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      const double amount = grid.amount(static_cast<std::size_t>(s.assignment[i]));
      d.entries.push_back({svc.id, clusters[i].key, amount});
      for (const auto& alias : clusters[i].aliases) d.entries.push_back({svc.id, alias, amount});
    }
  }
  std::sort(d.entries.begin(), d.entries.end(), [](const DictionaryEntry& a, const DictionaryEntry& b) {
    return a.k != b.k ? a.k < b.k : a.key < b.key;
  });
  return d;
}

}  // namespace subsidy
