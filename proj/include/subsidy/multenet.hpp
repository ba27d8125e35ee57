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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "subsidy/domain.hpp"
#include "subsidy/neuralnet.hpp"

namespace subsidy {

struct Architecture {
  std::vector<std::size_t> feature_hidden = {64, 64};
  std::size_t head_hidden = 32;
};

/// Shared feature net feeding three heads:
///   gps_head      -> softmax over J levels (propensity of each treatment)
///   y0_head       -> base conversion logit at the control level
///   monotone_head -> J-1 softplus increments, so the curve is
///                    p[j] = sigmoid(y0 + sum_{m<=j} inc[m]).
/// The treatment never enters the feature net.
struct MulTeNetParams {
  nn::Mlp feature_net;
  nn::Mlp gps_head;
  nn::Mlp y0_head;
  nn::Mlp monotone_head;

  static MulTeNetParams create(std::size_t feature_dim, std::size_t levels, const Architecture& arch,
                               std::uint64_t seed);

  std::size_t feature_dim() const { return feature_net.input_dim(); }
  std::size_t representation_dim() const { return feature_net.output_dim(); }
  std::size_t levels() const { return gps_head.output_dim(); }

  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  /// Throws kShape on any head/trunk mismatch.
  void validate() const;

  friend bool operator==(const MulTeNetParams&, const MulTeNetParams&) = default;
};

struct Prediction {
  std::vector<double> pi;
  double y0_logit = 0.0;
  std::vector<double> increments;
};

Prediction predict(const MulTeNetParams& params, std::span<const double> x);
ElasticityCurve elasticity(const MulTeNetParams& params, std::span<const double> x);
std::vector<ElasticityCurve> infer_batch(const MulTeNetParams& params, std::span<const Query> queries);

struct TrainConfig {
  std::size_t batch_size = 256;
  int epochs = 30;
  double lr = 1e-3;
  double alpha = 1.0;  // propensity cross-entropy weight
  double beta = 1.0;   // orthogonal penalty weight
  double validation_fraction = 0.2;
  int patience = 5;
  std::uint64_t seed = 1;
  Architecture arch;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossBreakdown {
  double total = 0.0;
  double outcome_bce = 0.0;
  double propensity_ce = 0.0;
  double ortho_penalty = 0.0;
};

struct ModelGradients {
  nn::Gradients feature_net;
  nn::Gradients gps_head;
  nn::Gradients y0_head;
  nn::Gradients monotone_head;

  std::vector<std::span<const double>> parameters() const;
};

/// Feature rows with their logged treatment and outcome.
struct Batch {
  nn::Matrix x;
  std::vector<int> t;
  std::vector<double> y;

  static Batch from_records(std::span<const OutcomeRecord> records);
  std::size_t size() const { return t.size(); }
};

/// total = outcome_bce + alpha * propensity_ce + beta * ortho_penalty where
/// ortho_penalty = |v|^2, v = mean_i (y_i - p_i[t_i]) (onehot(t_i) - pi_i).
/// Fills `grads` when non-null. Throws kEmptyBatch on an empty batch.
LossBreakdown loss(const MulTeNetParams& params, const Batch& batch, double alpha, double beta,
                   ModelGradients* grads = nullptr);
LossBreakdown loss(const MulTeNetParams& params, std::span<const OutcomeRecord> batch, const TrainConfig& cfg,
                   ModelGradients* grads = nullptr);

struct EpochLog {
  int epoch = 0;
  LossBreakdown train;
  double val_bce = 0.0;
};

struct TrainResult {
  MulTeNetParams params;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

/// Deterministic in cfg.seed. Returns the parameters with the best
/// validation outcome BCE. Throws kData if the split leaves an arm empty.
TrainResult train(const Dataset& dataset, const TrainConfig& cfg);

std::string training_log_csv(const std::vector<EpochLog>& log);

// Checkpoint: {"format": "subsidy-multenet/1", levels, feature_dim, alpha,
// beta, seed, feature_net, gps_head, y0_head, monotone_head}.
nlohmann::json checkpoint_json(const MulTeNetParams& params, const TrainConfig& cfg);
MulTeNetParams params_from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const MulTeNetParams& params, const TrainConfig& cfg, const std::string& path);
MulTeNetParams load_checkpoint(const std::string& path);

}  // namespace subsidy
