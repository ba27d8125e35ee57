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

#include "subsidy/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "subsidy/random.hpp"

namespace subsidy {

using nlohmann::json;

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Cheap URBG for keyed draws; seeding an mt19937_64 per query costs more than
// the draw itself.
class SplitMixEngine {
 public:
  using result_type = std::uint64_t;
  explicit SplitMixEngine(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix64(state_);
  }

 private:
  std::uint64_t state_;
};

double beta_draw(std::mt19937_64& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kConfig, "world config: " + what);
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::uint64_t query_id(std::uint32_t stream, int day, std::size_t i) {
  return (static_cast<std::uint64_t>(stream) << 48) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(day) & 0xFFFFFFu) << 24) |
         static_cast<std::uint64_t>(i);
}

int sample_level(const std::vector<double>& probs, double u) {
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::vector<double> propensities(const World& world, const Query& q, double strength) {
  const std::size_t levels = world.grid().size();
  const double a = q.features[kFeatureActivity];
  std::vector<double> logits(levels);
  for (std::size_t j = 0; j < levels; ++j) {
    logits[j] = strength * (0.5 - a) * 2.0 * static_cast<double>(j) / static_cast<double>(levels - 1);
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    sum += l;
  }
  for (auto& l : logits) l /= sum;
  return logits;
}

int assign_level(const World& world, const Query& q, double strength) {
  const auto probs = propensities(world, q, strength);
  const double u = unit_uniform(hash_keys({world.params().seed, static_cast<std::uint64_t>(Stream::kLogging), q.id}));
  return sample_level(probs, u);
}

}  // namespace

WorldParams WorldParams::defaults() {
  WorldParams p;
  p.fill_default_coefficients();
  return p;
}

void WorldParams::fill_default_coefficients() {
  if (base_rate_coeffs.empty()) {
    base_rate_coeffs.assign(feature_dim + 1, 0.0);
    base_rate_coeffs[0] = -1.7;
    if (feature_dim >= kMinFeatureDim) {
      base_rate_coeffs[1 + kFeatureActivity] = 2.8;
      base_rate_coeffs[1 + kFeatureDistance] = -0.6;
      base_rate_coeffs[1 + kFeatureOffPeak] = -0.3;
      base_rate_coeffs[1 + kFeatureCentrality] = 0.4;
    }
  }
  if (uplift_coeffs.empty() && levels.size() >= 2) {
    // Per-currency sensitivity with diminishing returns at higher levels.
    for (std::size_t m = 1; m < levels.size(); ++m) {
      const double step = levels[m] - levels[m - 1];
      const double scale = step * std::pow(0.75, static_cast<double>(m - 1));
      std::vector<double> row(feature_dim + 2, 0.0);
      row[0] = 0.01 * scale;
      row[1] = 0.10 * scale;
      if (feature_dim >= kMinFeatureDim) {
        row[2 + kFeatureDistance] = 0.05 * scale;
        row[2 + kFeatureOffPeak] = 0.14 * scale;
        row[2 + kFeatureCentrality] = 0.14 * scale;
      }
      uplift_coeffs.push_back(std::move(row));
    }
  }
  if (revenue_log_mean.empty()) {
    for (std::size_t k = 0; k < services.size(); ++k) {
      revenue_log_mean.push_back(std::log(20.0) + 0.6 * static_cast<double>(k));
    }
  }
}

void WorldParams::validate() const {
  require(n_zones >= 1, "n_zones must be >= 1");
  require(n_time_buckets >= 1 && n_time_buckets <= 168, "n_time_buckets must be in [1,168]");
  require(feature_dim >= kMinFeatureDim, "feature_dim must be >= 4");
  require(activity_alpha > 0 && activity_beta > 0 && std::isfinite(activity_alpha) && std::isfinite(activity_beta),
          "activity mix parameters must be positive");
  (void)TreatmentGrid(levels);
  require(base_rate_coeffs.size() == feature_dim + 1 && all_finite(base_rate_coeffs),
          "base_rate_coeffs must hold feature_dim + 1 finite values");
  require(uplift_coeffs.size() + 1 == levels.size(), "uplift_coeffs needs one row per nonzero level");
  for (const auto& row : uplift_coeffs) {
    require(row.size() == feature_dim + 2 && all_finite(row), "uplift row must hold feature_dim + 2 finite values");
    for (double c : row) require(c >= 0.0, "uplift coefficients must be nonnegative");
  }
  require(std::isfinite(base_interaction), "base_interaction must be finite");
  require(logging_policy_strength >= 0.0 && std::isfinite(logging_policy_strength),
          "logging_policy_strength must be >= 0");
  require(!services.empty(), "at least one service class");
  for (const auto& s : services) require(s.gamma >= 0.0 && s.gamma <= 1.0, "service gamma must be in [0,1]");
  require(revenue_log_mean.size() == services.size() && all_finite(revenue_log_mean),
          "revenue_log_mean needs one entry per service");
  require(revenue_log_sd >= 0 && revenue_zone_sd >= 0 && zone_intensity_sd >= 0 &&
              std::isfinite(revenue_distance_coef),
          "revenue/intensity spreads must be >= 0");
  require(daily_query_volume >= 0 && std::isfinite(daily_query_volume), "daily_query_volume must be >= 0");
  for (double w : weekly_pattern) require(w >= 0 && std::isfinite(w), "weekly_pattern entries must be >= 0");
}

json WorldParams::to_json() const {
  json services_j = json::array();
  for (const auto& s : services) services_j.push_back({{"id", s.id}, {"gamma", s.gamma}});
  return {{"seed", seed},
          {"n_zones", n_zones},
          {"n_time_buckets", n_time_buckets},
          {"feature_dim", feature_dim},
          {"activity_alpha", activity_alpha},
          {"activity_beta", activity_beta},
          {"levels", levels},
          {"base_rate_coeffs", base_rate_coeffs},
          {"uplift_coeffs", uplift_coeffs},
          {"misspecified", misspecified},
          {"base_interaction", base_interaction},
          {"logging_policy_strength", logging_policy_strength},
          {"services", services_j},
          {"revenue_log_mean", revenue_log_mean},
          {"revenue_log_sd", revenue_log_sd},
          {"revenue_distance_coef", revenue_distance_coef},
          {"revenue_zone_sd", revenue_zone_sd},
          {"zone_intensity_sd", zone_intensity_sd},
          {"daily_query_volume", daily_query_volume},
          {"weekly_pattern", weekly_pattern}};
}

WorldParams WorldParams::from_json(const json& j) {
  WorldParams p;
  try {
    p.seed = j.value("seed", p.seed);
    p.n_zones = j.value("n_zones", p.n_zones);
    p.n_time_buckets = j.value("n_time_buckets", p.n_time_buckets);
    p.feature_dim = j.value("feature_dim", p.feature_dim);
    p.activity_alpha = j.value("activity_alpha", p.activity_alpha);
    p.activity_beta = j.value("activity_beta", p.activity_beta);
    p.levels = j.value("levels", p.levels);
    p.base_rate_coeffs = j.value("base_rate_coeffs", p.base_rate_coeffs);
    p.uplift_coeffs = j.value("uplift_coeffs", p.uplift_coeffs);
    p.misspecified = j.value("misspecified", p.misspecified);
    p.base_interaction = j.value("base_interaction", p.base_interaction);
    p.logging_policy_strength = j.value("logging_policy_strength", p.logging_policy_strength);
    if (j.contains("services")) {
      p.services.clear();
      for (const auto& s : j.at("services")) p.services.push_back({s.at("id").get<int>(), s.at("gamma").get<double>()});
    }
    p.revenue_log_mean = j.value("revenue_log_mean", p.revenue_log_mean);
    p.revenue_log_sd = j.value("revenue_log_sd", p.revenue_log_sd);
    p.revenue_distance_coef = j.value("revenue_distance_coef", p.revenue_distance_coef);
    p.revenue_zone_sd = j.value("revenue_zone_sd", p.revenue_zone_sd);
    p.zone_intensity_sd = j.value("zone_intensity_sd", p.zone_intensity_sd);
    p.daily_query_volume = j.value("daily_query_volume", p.daily_query_volume);
    p.weekly_pattern = j.value("weekly_pattern", p.weekly_pattern);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("world config: ") + e.what());
  }
  p.fill_default_coefficients();
  p.validate();
  return p;
}

WorldParams WorldParams::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open world config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "world config " + path + ": " + e.what());
  }
  return from_json(j);
}

World::World(WorldParams params) : params_(std::move(params)) {
  params_.fill_default_coefficients();
  params_.validate();
  grid_ = TreatmentGrid(params_.levels);

  auto rng = keyed_engine({params_.seed, static_cast<std::uint64_t>(Stream::kWorld)});
  const int n = params_.n_zones;
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const double center = (side - 1) / 2.0;
  const double max_radius = std::max(std::hypot(center, center), 1e-9);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int z = 0; z < n; ++z) {
    const double x = z % side;
    const double y = z / side;
    zone_xy_.push_back({x, y});
    const double centrality = n == 1 ? 1.0 : 1.0 - std::hypot(x - center, y - center) / max_radius;
    zone_centrality_.push_back(centrality);
    zone_intensity_.push_back((0.5 + centrality) * std::exp(params_.zone_intensity_sd * normal(rng)));
    zone_revenue_effect_.push_back(params_.revenue_zone_sd * normal(rng));
  }
  const double total = std::accumulate(zone_intensity_.begin(), zone_intensity_.end(), 0.0);
  for (auto& w : zone_intensity_) w /= total;
  max_distance_ = std::max(std::hypot(side - 1.0, side - 1.0), 1.0);

  // Two commute peaks on a flat floor.
  for (int h = 0; h < 24; ++h) {
    const double am = std::exp(-0.5 * std::pow((h - 8.0) / 1.5, 2));
    const double pm = std::exp(-0.5 * std::pow((h - 18.0) / 2.0, 2));
    hourly_intensity_.push_back(0.25 + am + pm);
  }
}

std::size_t World::daily_volume(int day) const {
  const int dow = ((day % 7) + 7) % 7;
  return static_cast<std::size_t>(std::llround(params_.daily_query_volume * params_.weekly_pattern[dow]));
}

double World::service_revenue(const Query& q, std::size_t service_index) const {
  SplitMixEngine eng(hash_keys({params_.seed, static_cast<std::uint64_t>(Stream::kRevenue), q.id, service_index}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = q.features[kFeatureDistance];
  const double zone = zone_revenue_effect_[static_cast<std::size_t>(q.origin_zone)];
  return std::exp(params_.revenue_log_mean[service_index] + zone + params_.revenue_distance_coef * d +
                  params_.revenue_log_sd * normal(eng));
}

std::string World::serialize() const {
  json j = params_.to_json();
  j["derived"] = {{"zone_intensity", zone_intensity_},
                  {"zone_centrality", zone_centrality_},
                  {"zone_revenue_effect", zone_revenue_effect_},
                  {"hourly_intensity", hourly_intensity_}};
  return j.dump();
}

double World::base_logit(const std::vector<double>& x) const {
  const auto& c = params_.base_rate_coeffs;
  double z = c[0];
  for (std::size_t f = 0; f < params_.feature_dim; ++f) z += c[f + 1] * x[f];
  if (params_.misspecified) z += params_.base_interaction * x[kFeatureActivity] * x[kFeatureDistance];
  return z;
}

double World::uplift_increment(const std::vector<double>& x, std::size_t level) const {
  const auto& row = params_.uplift_coeffs.at(level - 1);
  double delta = row[0] + row[1] * (1.0 - x[kFeatureActivity]);
  for (std::size_t f = 0; f < params_.feature_dim; ++f) delta += row[f + 2] * x[f];
  return delta;
}

World gen_world(const WorldParams& params) { return World(params); }

std::vector<Query> sample_queries(const World& world, int day, std::size_t n, std::uint32_t stream) {
  if (n >= (std::size_t{1} << 24)) throw Error(ErrorCode::kConfig, "at most 2^24 queries per (day, stream)");
  const auto& p = world.params();
  auto rng = keyed_engine({p.seed, static_cast<std::uint64_t>(Stream::kQueries), stream,
                           static_cast<std::uint64_t>(static_cast<std::uint32_t>(day))});
  std::discrete_distribution<int> zone_dist(world.zone_intensity().begin(), world.zone_intensity().end());
  std::discrete_distribution<int> hour_dist(world.hourly_intensity().begin(), world.hourly_intensity().end());
  std::vector<double> service_w;
  for (const auto& s : p.services) service_w.push_back(std::max(s.gamma, 1e-9));
  std::discrete_distribution<int> service_dist(service_w.begin(), service_w.end());
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto& hourly = world.hourly_intensity();
  const double peak = *std::max_element(hourly.begin(), hourly.end());
  const double floor = *std::min_element(hourly.begin(), hourly.end());
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p.n_zones))));
  const double max_dist = std::max(std::hypot(side - 1.0, side - 1.0), 1.0);
  const int dow = ((day % 7) + 7) % 7;

  std::vector<Query> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Query q;
    q.id = query_id(stream, day, i);
    q.origin_zone = zone_dist(rng);
    q.dest_zone = zone_dist(rng);
    const int hour = hour_dist(rng);
    const int hour_of_week = dow * 24 + hour;
    q.time_bucket = hour_of_week * p.n_time_buckets / 168;
    q.service_class = service_dist(rng);

    q.features.assign(p.feature_dim, 0.0);
    q.features[kFeatureActivity] = beta_draw(rng, p.activity_alpha, p.activity_beta);
    const double dx = (q.origin_zone % side) - (q.dest_zone % side);
    const double dy = (q.origin_zone / side) - (q.dest_zone / side);
    const double grid_dist = std::hypot(dx, dy) / max_dist;
    q.features[kFeatureDistance] = std::clamp(0.85 * grid_dist + 0.15 * unif(rng), 0.0, 1.0);
    q.features[kFeatureOffPeak] = peak > floor ? (peak - hourly[static_cast<std::size_t>(hour)]) / (peak - floor) : 0.0;
    q.features[kFeatureCentrality] = world.zone_centrality()[static_cast<std::size_t>(q.origin_zone)];
    for (std::size_t f = kMinFeatureDim; f < p.feature_dim; ++f) q.features[f] = unif(rng);
    out.push_back(std::move(q));
  }
  return out;
}

ElasticityCurve true_elasticity(const World& world, const Query& q) {
  const std::size_t levels = world.grid().size();
  ElasticityCurve c;
  c.p.resize(levels);
  double z = world.base_logit(q.features);
  c.p[0] = sigmoid(z);
  for (std::size_t j = 1; j < levels; ++j) {
    z += world.uplift_increment(q.features, j);
    c.p[j] = sigmoid(z);
  }
  return c;
}

std::vector<double> logging_propensities(const World& world, const Query& q) {
  return propensities(world, q, world.params().logging_policy_strength);
}

int logging_policy(const World& world, const Query& q) {
  return assign_level(world, q, world.params().logging_policy_strength);
}

OutcomeRecord realize_outcome(const World& world, const Query& q, int treatment_idx) {
  if (treatment_idx < 0 || static_cast<std::size_t>(treatment_idx) >= world.grid().size()) {
    throw Error(ErrorCode::kNotOnGrid, "treatment index out of range");
  }
  const auto curve = true_elasticity(world, q);
  const double u = unit_uniform(hash_keys({world.params().seed, static_cast<std::uint64_t>(Stream::kOutcome), q.id}));
  OutcomeRecord r;
  r.query = q;
  r.treatment_idx = treatment_idx;
  r.converted = u < curve.p[static_cast<std::size_t>(treatment_idx)] ? 1 : 0;
  double revenue = 0.0;
  const auto& services = world.params().services;
  for (std::size_t k = 0; k < services.size(); ++k) revenue += services[k].gamma * world.service_revenue(q, k);
  r.revenue_if_converted = revenue;
  return r;
}

Dataset generate_dataset(const World& world, std::size_t n, Provenance policy, std::uint32_t stream) {
  if (n == 0) throw Error(ErrorCode::kConfig, "dataset size must be positive");
  Dataset d;
  d.grid = world.grid();
  d.services = world.params().services;
  d.feature_dim = world.params().feature_dim;
  d.provenance = policy;
  d.records.reserve(n);
  const double strength = policy == Provenance::kRct ? 0.0 : world.params().logging_policy_strength;
  for (int day = 0; day < 7; ++day) {
    const std::size_t count = n / 7 + (static_cast<std::size_t>(day) < n % 7 ? 1 : 0);
    for (const auto& q : sample_queries(world, day, count, stream)) {
      d.records.push_back(realize_outcome(world, q, assign_level(world, q, strength)));
    }
  }
  return d;
}

}  // namespace subsidy
