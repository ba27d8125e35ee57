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
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "subsidy/error.hpp"

namespace subsidy::nn {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class Activation { kIdentity, kRelu, kSoftplus, kSigmoid, kSoftmax };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

// Numerically stable scalar primitives.
double softplus(double z);
double sigmoid(double z);
/// Binary cross-entropy of a logit against a 0/1 label.
double bce_with_logits(double logit, double label);
/// In-place row softmax with max subtraction.
void softmax_inplace(std::span<double> z);

struct DenseLayer {
  Matrix weights;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  std::size_t in() const { return weights.cols(); }
  std::size_t out() const { return weights.rows(); }
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct Mlp {
  std::vector<DenseLayer> layers;

  /// dims = {in, hidden..., out}. He-uniform init for relu layers,
  /// Glorot-uniform otherwise; zero biases.
  static Mlp create(std::span<const std::size_t> dims, Activation hidden, Activation output, std::mt19937_64& rng);

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out(); }
  std::size_t parameter_count() const;
  /// Weights then bias per layer, in layer order.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  /// Throws kShape when adjacent layers do not chain.
  void validate() const;

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// Cached activations of a batched forward pass.
struct Tape {
  std::vector<Matrix> inputs;  // input to layer l
  std::vector<Matrix> pre;     // pre-activation of layer l
  std::vector<Matrix> post;    // activation output of layer l
  std::size_t batch() const { return inputs.empty() ? 0 : inputs.front().rows(); }
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> bias;

  static Gradients zeros_like(const Mlp& mlp);
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  void add(const Gradients& other);
};

struct ForwardResult {
  std::vector<double> output;
  Tape tape;
};

ForwardResult forward(const Mlp& mlp, std::span<const double> x);
/// Rows of `x` are samples. `tape` may be null for inference.
Matrix forward_batch(const Mlp& mlp, const Matrix& x, Tape* tape);

/// Where the upstream gradient is taken: after the last activation, or at
/// the last pre-activation (lets callers fuse a loss with its output
/// activation, e.g. log-softmax cross-entropy).
enum class GradientAt { kOutput, kLastPreActivation };

struct BackwardResult {
  Gradients grads;
  Matrix input_grad;
};

BackwardResult backward(const Mlp& mlp, const Tape& tape, const Matrix& upstream,
                        GradientAt at = GradientAt::kOutput);
BackwardResult backward(const Mlp& mlp, const Tape& tape, std::span<const double> upstream);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long long step = 0;

  /// Accumulators shaped like `params`.
  static AdamState for_parameters(std::span<const std::span<double>> params, AdamConfig config);
};

/// Bias-corrected Adam update. Throws kShape when shapes disagree.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state);

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_block = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central-difference check of `analytic` against `loss` over every entry of
/// `params`. Relative error is |a - n| / max(|a|, |n|, 1e-5).
GradCheckReport grad_check_params(std::span<const std::span<double>> params,
                                  std::span<const std::span<const double>> analytic,
                                  const std::function<double()>& loss, double tolerance, double h = 1e-5);

/// Loss of the network output plus its gradient w.r.t. that output.
using LossFn = std::function<std::pair<double, std::vector<double>>(std::span<const double>)>;

/// Checks backward() against finite differences of loss(forward(x)).
/// `corrupt`, when set, edits the analytic gradients before comparison.
GradCheckReport grad_check(Mlp& mlp, const LossFn& loss_fn, std::span<const double> x, double tolerance,
                           double h = 1e-5, const std::function<void(Gradients&)>& corrupt = {});

// Checkpoint format: {"format": "subsidy-mlp/1", "layers": [{rows, cols,
// activation, weights, bias}]}.
nlohmann::json to_json(const Mlp& mlp);
Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace subsidy::nn
