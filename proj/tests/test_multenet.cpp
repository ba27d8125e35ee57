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
#include <numeric>
#include <random>

#include "doctest.h"
#include "subsidy/multenet.hpp"
#include "subsidy/synthworld.hpp"
#include "test_util.hpp"

using namespace subsidy;
using subsidy::testing::code_of;

namespace {

Architecture tiny_arch() {
  Architecture a;
  a.feature_hidden = {5};
  a.head_hidden = 4;
  return a;
}

void zero(nn::Mlp& mlp) {
  for (auto block : mlp.parameters()) std::fill(block.begin(), block.end(), 0.0);
}

// Nonzero biases everywhere so gradient checks exercise them.
void perturb(MulTeNetParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto* mlp : {&p.feature_net, &p.gps_head, &p.y0_head, &p.monotone_head}) {
    for (auto& l : mlp->layers) {
      for (auto& b : l.bias) b = n(rng);
    }
  }
}

Batch random_batch(std::size_t n, std::size_t dim, int levels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  b.x = nn::Matrix(n, dim);
  for (auto& v : b.x.data()) v = u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    b.t.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(levels)));
    b.y.push_back(u(rng) < 0.4 ? 1.0 : 0.0);
  }
  return b;
}

}  // namespace

TEST_CASE("zeroed heads give a uniform propensity and ln 2 increments") {
  auto p = MulTeNetParams::create(4, 3, tiny_arch(), 1);
  zero(p.gps_head);
  zero(p.y0_head);
  zero(p.monotone_head);
  const std::vector<double> x = {0.2, 0.4, 0.6, 0.8};
  const auto pred = predict(p, x);
  for (double v : pred.pi) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(pred.y0_logit == 0.0);
  for (double v : pred.increments) CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const auto curve = elasticity(p, x);
  REQUIRE(curve.p.size() == 3);
  CHECK(curve.p[0] == 0.5);
  CHECK(curve.p[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(curve.p[2] == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("structural invariants over random parameters and inputs") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int bad_curves = 0;
  for (int t = 0; t < 100; ++t) {
    auto p = MulTeNetParams::create(4, 5, tiny_arch(), rng());
    perturb(p, rng());
    for (int k = 0; k < 100; ++k) {
      const std::vector<double> x = {u(rng), u(rng), u(rng), u(rng)};
      const auto pred = predict(p, x);
      CHECK(std::abs(std::accumulate(pred.pi.begin(), pred.pi.end(), 0.0) - 1.0) <= 1e-12);
      bad_curves += elasticity(p, x).valid() ? 0 : 1;
    }
  }
  CHECK(bad_curves == 0);

  auto p = MulTeNetParams::create(4, 5, tiny_arch(), 1);
  CHECK(code_of([&] { predict(p, std::vector<double>{1.0}); }) == ErrorCode::kShape);
  p.y0_head = p.gps_head;
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::kShape);
}

TEST_CASE("loss components match an independent computation") {
  auto p = MulTeNetParams::create(3, 4, tiny_arch(), 5);
  perturb(p, 6);
  const auto batch = random_batch(32, 3, 4, 7);
  const double alpha = 0.7, beta = 2.5;
  const auto lb = loss(p, batch, alpha, beta);

  double bce = 0, ce = 0;
  std::vector<double> v(4, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto pred = predict(p, batch.x.row(i));
    const auto t = static_cast<std::size_t>(batch.t[i]);
    double z = pred.y0_logit;
    for (std::size_t m = 0; m < t; ++m) z += pred.increments[m];
    const double pt = 1.0 / (1.0 + std::exp(-z));
    bce += -(batch.y[i] * std::log(pt) + (1 - batch.y[i]) * std::log(1 - pt));
    ce += -std::log(pred.pi[t]);
    for (std::size_t j = 0; j < 4; ++j) v[j] += (batch.y[i] - pt) * ((j == t ? 1.0 : 0.0) - pred.pi[j]);
  }
  const double n = static_cast<double>(batch.size());
  double ortho = 0;
  for (double vj : v) ortho += (vj / n) * (vj / n);
  CHECK(lb.outcome_bce == doctest::Approx(bce / n).epsilon(1e-12));
  CHECK(lb.propensity_ce == doctest::Approx(ce / n).epsilon(1e-12));
  CHECK(lb.ortho_penalty == doctest::Approx(ortho).epsilon(1e-10));
  CHECK(std::abs(lb.total - (lb.outcome_bce + alpha * lb.propensity_ce + beta * lb.ortho_penalty)) <= 1e-12);

  const auto plain = loss(p, batch, 0.0, 0.0);
  CHECK(plain.total == plain.outcome_bce);

  Batch empty;
  empty.x = nn::Matrix(0, 3);
  CHECK(code_of([&] { loss(p, empty, 1.0, 1.0); }) == ErrorCode::kEmptyBatch);
}

TEST_CASE("zero residuals put the loss at its floor") {
  auto p = MulTeNetParams::create(3, 4, tiny_arch(), 8);
  perturb(p, 9);
  auto batch = random_batch(16, 3, 4, 10);
  double entropy = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double pt = elasticity(p, batch.x.row(i)).p[static_cast<std::size_t>(batch.t[i])];
    batch.y[i] = pt;
    entropy += -(pt * std::log(pt) + (1 - pt) * std::log(1 - pt));
  }
  const auto lb = loss(p, batch, 1.0, 1.0);
  CHECK(lb.ortho_penalty < 1e-28);
  CHECK(lb.outcome_bce == doctest::Approx(entropy / batch.size()).epsilon(1e-12));
}

TEST_CASE("analytic loss gradient matches finite differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = MulTeNetParams::create(3, 4, tiny_arch(), seed);
    perturb(p, seed + 10);
    const auto batch = random_batch(12, 3, 4, seed + 20);
    ModelGradients g;
    loss(p, batch, 0.8, 3.0, &g);
    auto params = p.parameters();
    const auto analytic = g.parameters();
    const auto report =
        nn::grad_check_params(params, analytic, [&] { return loss(p, batch, 0.8, 3.0).total; }, 1e-4);
    CAPTURE(report.max_relative_error);
    CHECK(report.passed);
    CHECK(report.checked == std::accumulate(params.begin(), params.end(), std::size_t{0},
                                            [](std::size_t acc, auto s) { return acc + s.size(); }));
  }
}

TEST_CASE("training") {
  auto wp = WorldParams::defaults();
  wp.feature_dim = 4;
  wp.base_rate_coeffs.clear();
  wp.uplift_coeffs.clear();
  wp.fill_default_coefficients();
  const auto world = gen_world(wp);
  const auto data = generate_dataset(world, 4000, Provenance::kObservational);

  TrainConfig cfg;
  cfg.arch = tiny_arch();
  cfg.epochs = 6;
  cfg.lr = 5e-3;
  cfg.seed = 3;

  SUBCASE("epochs = 0 returns the initialization") {
    auto c = cfg;
    c.epochs = 0;
    const auto r = train(data, c);
    CHECK(r.log.empty());
    CHECK(r.params == MulTeNetParams::create(4, 5, c.arch, c.seed));
  }
  SUBCASE("validation loss decreases and runs are reproducible") {
    const auto a = train(data, cfg);
    const auto b = train(data, cfg);
    CHECK(a.params == b.params);
    REQUIRE(a.log.size() == 6);
    double best = a.log.front().val_bce;
    for (const auto& e : a.log) best = std::min(best, e.val_bce);
    CHECK(best < a.log.front().val_bce);
    CHECK(checkpoint_json(a.params, cfg).dump() == checkpoint_json(b.params, cfg).dump());
    CHECK(training_log_csv(a.log).find("epoch") == 0);
  }
  SUBCASE("a split with an empty arm is rejected") {
    auto d = data;
    for (auto& r : d.records) {
      if (r.treatment_idx == 4) r.treatment_idx = 3;
    }
    CHECK(code_of([&] { train(d, cfg); }) == ErrorCode::kData);
  }
}

TEST_CASE("batched inference") {
  const auto world = gen_world(WorldParams::defaults());
  auto p = MulTeNetParams::create(world.params().feature_dim, 5, tiny_arch(), 12);
  perturb(p, 13);
  CHECK(infer_batch(p, std::span<const Query>{}).empty());
  const auto qs = sample_queries(world, 0, 10000);
  const auto curves = infer_batch(p, qs);
  REQUIRE(curves.size() == qs.size());
  for (std::size_t i = 0; i < qs.size(); ++i) CHECK(curves[i].valid());
  for (std::size_t i = 0; i < 50; ++i) {
    const auto one = infer_batch(p, std::span<const Query>(&qs[i], 1));
    CHECK(one[0] == elasticity(p, qs[i].features));
    CHECK(curves[i] == one[0]);
  }
}

TEST_CASE("checkpoint round-trip") {
  auto p = MulTeNetParams::create(6, 5, Architecture{}, 4);
  TrainConfig cfg;
  const auto j = nlohmann::json::parse(checkpoint_json(p, cfg).dump());
  CHECK(params_from_checkpoint(j) == p);
  auto broken = j;
  broken["format"] = "nope";
  CHECK(code_of([&] { params_from_checkpoint(broken); }) == ErrorCode::kParse);
  CHECK(code_of([] { load_checkpoint("/nonexistent/model.json"); }) == ErrorCode::kIo);
}
