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

#include "subsidy/multenet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "subsidy/random.hpp"

namespace subsidy {

using nlohmann::json;
using nn::Matrix;

namespace {

constexpr std::string_view kCheckpointFormat = "subsidy-multenet/1";
constexpr std::size_t kInferenceChunk = 4096;

void append(std::vector<std::span<double>>& out, nn::Mlp& mlp) {
  for (auto s : mlp.parameters()) out.push_back(s);
}

void append(std::vector<std::span<const double>>& out, const nn::Mlp& mlp) {
  for (auto s : mlp.parameters()) out.push_back(s);
}

void append(std::vector<std::span<const double>>& out, const nn::Gradients& g) {
  for (auto s : g.parameters()) out.push_back(s);
}

// Forward state of one batch through trunk and heads.
struct ModelTape {
  nn::Tape trunk, gps, y0, mono;
  Matrix pi;
  Matrix y0_logit;
  Matrix increments;
};

void forward_model(const MulTeNetParams& params, const Matrix& x, ModelTape* tape, Matrix& pi, Matrix& y0,
                   Matrix& inc) {
  Matrix rep = nn::forward_batch(params.feature_net, x, tape ? &tape->trunk : nullptr);
  pi = nn::forward_batch(params.gps_head, rep, tape ? &tape->gps : nullptr);
  y0 = nn::forward_batch(params.y0_head, rep, tape ? &tape->y0 : nullptr);
  inc = nn::forward_batch(params.monotone_head, rep, tape ? &tape->mono : nullptr);
}

// Log-softmax of the propensity logits at index t.
double log_propensity(std::span<const double> logits, int t) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  return logits[static_cast<std::size_t>(t)] - mx - std::log(sum);
}

double logit_at(const Matrix& y0, const Matrix& inc, std::size_t i, int t) {
  double z = y0(i, 0);
  for (int m = 0; m < t; ++m) z += inc(i, static_cast<std::size_t>(m));
  return z;
}

ElasticityCurve curve_from(double y0, std::span<const double> inc) {
  ElasticityCurve c;
  c.p.reserve(inc.size() + 1);
  double z = y0;
  c.p.push_back(nn::sigmoid(z));
  for (double d : inc) {
    z += d;
    c.p.push_back(nn::sigmoid(z));
  }
  return c;
}

// Chunked loss without gradients, for validation sets of any size.
LossBreakdown evaluate_loss(const MulTeNetParams& params, const Batch& data, std::span<const std::size_t> rows,
                            double alpha, double beta) {
  const std::size_t levels = params.levels();
  std::vector<double> v(levels, 0.0);
  double bce = 0.0;
  double ce = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += kInferenceChunk) {
    const std::size_t end = std::min(rows.size(), start + kInferenceChunk);
    Matrix x(end - start, data.x.cols());
    for (std::size_t r = start; r < end; ++r) {
      auto src = data.x.row(rows[r]);
      std::copy(src.begin(), src.end(), x.row(r - start).begin());
    }
    Matrix pi, y0, inc;
    Matrix rep = nn::forward_batch(params.feature_net, x, nullptr);
    nn::Tape gps_tape;
    pi = nn::forward_batch(params.gps_head, rep, &gps_tape);
    y0 = nn::forward_batch(params.y0_head, rep, nullptr);
    inc = nn::forward_batch(params.monotone_head, rep, nullptr);
    for (std::size_t r = start; r < end; ++r) {
      const std::size_t i = r - start;
      const int t = data.t[rows[r]];
      const double y = data.y[rows[r]];
      const double z = logit_at(y0, inc, i, t);
      bce += nn::bce_with_logits(z, y);
      ce -= log_propensity(gps_tape.pre.back().row(i), t);
      const double resid = y - nn::sigmoid(z);
      for (std::size_t j = 0; j < levels; ++j) {
        v[j] += resid * ((static_cast<int>(j) == t ? 1.0 : 0.0) - pi(i, j));
      }
    }
  }
  const double n = static_cast<double>(rows.size());
  LossBreakdown out;
  out.outcome_bce = bce / n;
  out.propensity_ce = ce / n;
  double norm = 0.0;
  for (double vj : v) norm += (vj / n) * (vj / n);
  out.ortho_penalty = norm;
  out.total = out.outcome_bce + alpha * out.propensity_ce + beta * out.ortho_penalty;
  return out;
}

Batch gather(const Batch& data, std::span<const std::size_t> rows) {
  Batch b;
  b.x = Matrix(rows.size(), data.x.cols());
  b.t.reserve(rows.size());
  b.y.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto src = data.x.row(rows[r]);
    std::copy(src.begin(), src.end(), b.x.row(r).begin());
    b.t.push_back(data.t[rows[r]]);
    b.y.push_back(data.y[rows[r]]);
  }
  return b;
}

}  // namespace

MulTeNetParams MulTeNetParams::create(std::size_t feature_dim, std::size_t levels, const Architecture& arch,
                                      std::uint64_t seed) {
  if (levels < 2) throw Error(ErrorCode::kShape, "need at least two treatment levels");
  if (arch.feature_hidden.empty()) throw Error(ErrorCode::kShape, "feature net needs at least one layer");
  auto rng = keyed_engine({seed, static_cast<std::uint64_t>(Stream::kTrain), 0});
  std::vector<std::size_t> trunk = {feature_dim};
  trunk.insert(trunk.end(), arch.feature_hidden.begin(), arch.feature_hidden.end());
  const std::size_t rep = trunk.back();
  MulTeNetParams p;
  p.feature_net = nn::Mlp::create(trunk, nn::Activation::kRelu, nn::Activation::kRelu, rng);
  const std::size_t gps_dims[] = {rep, arch.head_hidden, levels};
  const std::size_t y0_dims[] = {rep, arch.head_hidden, 1};
  const std::size_t mono_dims[] = {rep, arch.head_hidden, levels - 1};
  p.gps_head = nn::Mlp::create(gps_dims, nn::Activation::kRelu, nn::Activation::kSoftmax, rng);
  p.y0_head = nn::Mlp::create(y0_dims, nn::Activation::kRelu, nn::Activation::kIdentity, rng);
  p.monotone_head = nn::Mlp::create(mono_dims, nn::Activation::kRelu, nn::Activation::kSoftplus, rng);
  return p;
}

std::vector<std::span<double>> MulTeNetParams::parameters() {
  std::vector<std::span<double>> out;
  append(out, feature_net);
  append(out, gps_head);
  append(out, y0_head);
  append(out, monotone_head);
  return out;
}

std::vector<std::span<const double>> MulTeNetParams::parameters() const {
  std::vector<std::span<const double>> out;
  append(out, feature_net);
  append(out, gps_head);
  append(out, y0_head);
  append(out, monotone_head);
  return out;
}

void MulTeNetParams::validate() const {
  for (const auto* m : {&feature_net, &gps_head, &y0_head, &monotone_head}) {
    if (m->layers.empty()) throw Error(ErrorCode::kShape, "empty sub-network");
    m->validate();
  }
  const std::size_t rep = feature_net.output_dim();
  if (gps_head.input_dim() != rep || y0_head.input_dim() != rep || monotone_head.input_dim() != rep) {
    throw Error(ErrorCode::kShape, "head input dims must equal the representation dim");
  }
  if (gps_head.layers.back().activation != nn::Activation::kSoftmax ||
      monotone_head.layers.back().activation != nn::Activation::kSoftplus || y0_head.output_dim() != 1) {
    throw Error(ErrorCode::kShape, "head output activations do not match the model");
  }
  if (monotone_head.output_dim() + 1 != gps_head.output_dim()) {
    throw Error(ErrorCode::kShape, "monotone head must emit J-1 increments");
  }
}

Prediction predict(const MulTeNetParams& params, std::span<const double> x) {
  if (x.size() != params.feature_dim()) {
    throw Error(ErrorCode::kShape, "feature vector has length " + std::to_string(x.size()) + ", model expects " +
                                       std::to_string(params.feature_dim()));
  }
  Matrix in(1, x.size());
  std::copy(x.begin(), x.end(), in.data().begin());
  Matrix pi, y0, inc;
  forward_model(params, in, nullptr, pi, y0, inc);
  return {std::move(pi.data()), y0(0, 0), std::move(inc.data())};
}

ElasticityCurve elasticity(const MulTeNetParams& params, std::span<const double> x) {
  const auto pred = predict(params, x);
  return curve_from(pred.y0_logit, pred.increments);
}

std::vector<ElasticityCurve> infer_batch(const MulTeNetParams& params, std::span<const Query> queries) {
  std::vector<ElasticityCurve> out;
  out.reserve(queries.size());
  const std::size_t dim = params.feature_dim();
  for (std::size_t start = 0; start < queries.size(); start += kInferenceChunk) {
    const std::size_t end = std::min(queries.size(), start + kInferenceChunk);
    Matrix x(end - start, dim);
    for (std::size_t i = start; i < end; ++i) {
      const auto& f = queries[i].features;
      if (f.size() != dim) throw Error(ErrorCode::kShape, "query feature length does not match the model");
      std::copy(f.begin(), f.end(), x.row(i - start).begin());
    }
    Matrix rep = nn::forward_batch(params.feature_net, x, nullptr);
    Matrix y0 = nn::forward_batch(params.y0_head, rep, nullptr);
    Matrix inc = nn::forward_batch(params.monotone_head, rep, nullptr);
    for (std::size_t i = 0; i < end - start; ++i) out.push_back(curve_from(y0(i, 0), inc.row(i)));
  }
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfig, "train config: " + what); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(lr > 0) || !std::isfinite(lr)) fail("lr must be positive");
  if (!(alpha >= 0) || !(beta >= 0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    fail("alpha and beta must be >= 0");
  }
  if (!(validation_fraction > 0 && validation_fraction < 1)) fail("validation_fraction must be in (0,1)");
  if (patience < 1) fail("patience must be >= 1");
  if (arch.feature_hidden.empty() || arch.head_hidden == 0) fail("architecture widths must be positive");
  for (auto w : arch.feature_hidden)
    if (w == 0) fail("architecture widths must be positive");
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"epochs", epochs},
          {"lr", lr},
          {"alpha", alpha},
          {"beta", beta},
          {"validation_fraction", validation_fraction},
          {"patience", patience},
          {"seed", seed},
          {"feature_hidden", arch.feature_hidden},
          {"head_hidden", arch.head_hidden}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.arch.feature_hidden = j.value("feature_hidden", c.arch.feature_hidden);
    c.arch.head_hidden = j.value("head_hidden", c.arch.head_hidden);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::span<const double>> ModelGradients::parameters() const {
  std::vector<std::span<const double>> out;
  append(out, feature_net);
  append(out, gps_head);
  append(out, y0_head);
  append(out, monotone_head);
  return out;
}

Batch Batch::from_records(std::span<const OutcomeRecord> records) {
  Batch b;
  const std::size_t dim = records.empty() ? 0 : records.front().query.features.size();
  b.x = Matrix(records.size(), dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& f = records[i].query.features;
    if (f.size() != dim) throw Error(ErrorCode::kShape, "records disagree on feature length");
    std::copy(f.begin(), f.end(), b.x.row(i).begin());
    b.t.push_back(records[i].treatment_idx);
    b.y.push_back(static_cast<double>(records[i].converted));
  }
  return b;
}

LossBreakdown loss(const MulTeNetParams& params, const Batch& batch, double alpha, double beta,
                   ModelGradients* grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw Error(ErrorCode::kEmptyBatch, "loss of an empty batch");
  if (batch.x.cols() != params.feature_dim()) throw Error(ErrorCode::kShape, "batch feature length mismatch");
  const std::size_t levels = params.levels();
  for (int t : batch.t) {
    if (t < 0 || static_cast<std::size_t>(t) >= levels) throw Error(ErrorCode::kData, "treatment index out of range");
  }

  ModelTape tape;
  Matrix pi, y0, inc;
  forward_model(params, batch.x, &tape, pi, y0, inc);
  const Matrix& logits = tape.gps.pre.back();

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> z(n), p(n), resid(n);
  std::vector<double> v(levels, 0.0);
  double bce = 0.0;
  double ce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = batch.t[i];
    z[i] = logit_at(y0, inc, i, t);
    p[i] = nn::sigmoid(z[i]);
    resid[i] = batch.y[i] - p[i];
    bce += nn::bce_with_logits(z[i], batch.y[i]);
    ce -= log_propensity(logits.row(i), t);
    for (std::size_t j = 0; j < levels; ++j) {
      v[j] += resid[i] * ((static_cast<int>(j) == t ? 1.0 : 0.0) - pi(i, j));
    }
  }
  for (auto& vj : v) vj *= inv_n;

  LossBreakdown out;
  out.outcome_bce = bce * inv_n;
  out.propensity_ce = ce * inv_n;
  for (double vj : v) out.ortho_penalty += vj * vj;
  out.total = out.outcome_bce + alpha * out.propensity_ce + beta * out.ortho_penalty;
  if (!grads) return out;

  Matrix d_y0(n, 1);
  Matrix d_inc(n, levels - 1);
  Matrix d_logits(n, levels);
  std::vector<double> d_pi(levels);
  for (std::size_t i = 0; i < n; ++i) {
    const int t = batch.t[i];
    auto pi_i = pi.row(i);
    // d(penalty)/d(resid_i) = 2 v . (e_t - pi_i) / n; d(resid)/dz = -p(1-p).
    double v_dot_pi = 0.0;
    for (std::size_t j = 0; j < levels; ++j) v_dot_pi += v[j] * pi_i[j];
    const double d_resid = 2.0 * inv_n * (v[static_cast<std::size_t>(t)] - v_dot_pi);
    const double dz = (p[i] - batch.y[i]) * inv_n - beta * d_resid * p[i] * (1.0 - p[i]);
    d_y0(i, 0) = dz;
    for (int m = 0; m < t; ++m) d_inc(i, static_cast<std::size_t>(m)) = dz;

    // Ortho term reaches the logits through softmax; CE is fused as pi - e_t.
    double dpi_dot_pi = 0.0;
    for (std::size_t j = 0; j < levels; ++j) {
      d_pi[j] = -2.0 * beta * inv_n * resid[i] * v[j];
      dpi_dot_pi += d_pi[j] * pi_i[j];
    }
    for (std::size_t j = 0; j < levels; ++j) {
      const double onehot = static_cast<int>(j) == t ? 1.0 : 0.0;
      d_logits(i, j) = pi_i[j] * (d_pi[j] - dpi_dot_pi) + alpha * (pi_i[j] - onehot) * inv_n;
    }
  }

  auto gps_back = nn::backward(params.gps_head, tape.gps, d_logits, nn::GradientAt::kLastPreActivation);
  auto y0_back = nn::backward(params.y0_head, tape.y0, d_y0);
  auto mono_back = nn::backward(params.monotone_head, tape.mono, d_inc);
  Matrix d_rep = std::move(gps_back.input_grad);
  auto& dr = d_rep.data();
  const auto& a = y0_back.input_grad.data();
  const auto& b = mono_back.input_grad.data();
  for (std::size_t i = 0; i < dr.size(); ++i) dr[i] += a[i] + b[i];
  auto trunk_back = nn::backward(params.feature_net, tape.trunk, d_rep);

  grads->feature_net = std::move(trunk_back.grads);
  grads->gps_head = std::move(gps_back.grads);
  grads->y0_head = std::move(y0_back.grads);
  grads->monotone_head = std::move(mono_back.grads);
  return out;
}

LossBreakdown loss(const MulTeNetParams& params, std::span<const OutcomeRecord> batch, const TrainConfig& cfg,
                   ModelGradients* grads) {
  if (batch.empty()) throw Error(ErrorCode::kEmptyBatch, "loss of an empty batch");
  return loss(params, Batch::from_records(batch), cfg.alpha, cfg.beta, grads);
}

TrainResult train(const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  const auto report = validate_dataset(dataset);
  if (!report.ok()) {
    const auto& v = report.violations.front();
    throw Error(ErrorCode::kData, "dataset invalid: " + std::string(violation_kind_name(v.kind)) + " " + v.detail);
  }
  const std::size_t levels = dataset.grid.size();
  TrainResult result;
  result.params = MulTeNetParams::create(dataset.feature_dim, levels, cfg.arch, cfg.seed);
  if (cfg.epochs == 0) return result;

  const Batch all = Batch::from_records(dataset.records);
  const std::size_t n = all.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = keyed_engine({cfg.seed, static_cast<std::uint64_t>(Stream::kTrain), 1});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  for (const auto* split : {&tr, &val}) {
    std::vector<std::size_t> arms(levels, 0);
    for (auto i : *split) ++arms[static_cast<std::size_t>(all.t[i])];
    for (std::size_t j = 0; j < levels; ++j) {
      if (arms[j] == 0) {
        throw Error(ErrorCode::kData, std::string(split == &tr ? "training" : "validation") +
                                          " split has no records at level " + std::to_string(j));
      }
    }
  }

  MulTeNetParams params = result.params;
  auto adam = nn::AdamState::for_parameters(params.parameters(), {cfg.lr, 0.9, 0.999, 1e-8});
  double best_val = evaluate_loss(params, all, val, cfg.alpha, cfg.beta).outcome_bce;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(tr.begin(), tr.end(), rng);
    EpochLog entry;
    entry.epoch = epoch;
    double weight = 0.0;
    for (std::size_t start = 0; start < tr.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(tr.size(), start + cfg.batch_size);
      const Batch batch = gather(all, std::span(tr).subspan(start, end - start));
      ModelGradients grads;
      const auto parts = loss(params, batch, cfg.alpha, cfg.beta, &grads);
      nn::adam_step(params.parameters(), grads.parameters(), adam);
      const double w = static_cast<double>(end - start);
      entry.train.total += parts.total * w;
      entry.train.outcome_bce += parts.outcome_bce * w;
      entry.train.propensity_ce += parts.propensity_ce * w;
      entry.train.ortho_penalty += parts.ortho_penalty * w;
      weight += w;
    }
    entry.train.total /= weight;
    entry.train.outcome_bce /= weight;
    entry.train.propensity_ce /= weight;
    entry.train.ortho_penalty /= weight;
    entry.val_bce = evaluate_loss(params, all, val, cfg.alpha, cfg.beta).outcome_bce;
    result.log.push_back(entry);
    if (entry.val_bce < best_val) {
      best_val = entry.val_bce;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,outcome_bce,propensity_ce,ortho_penalty,val_bce\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.train.outcome_bce << ',' << e.train.propensity_ce << ',' << e.train.ortho_penalty
        << ',' << e.val_bce << '\n';
  }
  return out.str();
}

json checkpoint_json(const MulTeNetParams& params, const TrainConfig& cfg) {
  return {{"format", kCheckpointFormat},
          {"levels", params.levels()},
          {"feature_dim", params.feature_dim()},
          {"alpha", cfg.alpha},
          {"beta", cfg.beta},
          {"seed", cfg.seed},
          {"feature_net", nn::to_json(params.feature_net)},
          {"gps_head", nn::to_json(params.gps_head)},
          {"y0_head", nn::to_json(params.y0_head)},
          {"monotone_head", nn::to_json(params.monotone_head)}};
}

MulTeNetParams params_from_checkpoint(const json& j) {
  if (j.value("format", std::string()) != kCheckpointFormat) {
    throw Error(ErrorCode::kParse, "unrecognized checkpoint format");
  }
  MulTeNetParams p;
  try {
    p.feature_net = nn::mlp_from_json(j.at("feature_net"));
    p.gps_head = nn::mlp_from_json(j.at("gps_head"));
    p.y0_head = nn::mlp_from_json(j.at("y0_head"));
    p.monotone_head = nn::mlp_from_json(j.at("monotone_head"));
    p.validate();
    if (j.at("levels").get<std::size_t>() != p.levels() || j.at("feature_dim").get<std::size_t>() != p.feature_dim()) {
      throw Error(ErrorCode::kShape, "checkpoint header disagrees with its networks");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("checkpoint: ") + e.what());
  }
  return p;
}

void save_checkpoint(const MulTeNetParams& params, const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  out << checkpoint_json(params, cfg).dump() << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

MulTeNetParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open checkpoint " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "checkpoint " + path + ": " + e.what());
  }
  return params_from_checkpoint(j);
}

}  // namespace subsidy
