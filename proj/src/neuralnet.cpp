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

#include "subsidy/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace subsidy::nn {

using nlohmann::json;

namespace {

constexpr std::string_view kMlpFormat = "subsidy-mlp/1";

void apply_activation(Activation a, const Matrix& pre, Matrix& post) {
  post = pre;
  auto& d = post.data();
  switch (a) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (auto& v : d) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kSoftplus:
      for (auto& v : d) v = softplus(v);
      break;
    case Activation::kSigmoid:
      for (auto& v : d) v = sigmoid(v);
      break;
    case Activation::kSoftmax:
      for (std::size_t r = 0; r < post.rows(); ++r) softmax_inplace(post.row(r));
      break;
  }
}

// Turns dL/d(post) into dL/d(pre), in place.
void activation_backward(Activation a, const Matrix& pre, const Matrix& post, Matrix& grad) {
  auto& g = grad.data();
  const auto& z = pre.data();
  const auto& y = post.data();
  switch (a) {
    case Activation::kIdentity:
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = z[i] > 0.0 ? g[i] : 0.0;
      break;
    case Activation::kSoftplus:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= sigmoid(z[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
      break;
    case Activation::kSoftmax:
      for (std::size_t r = 0; r < grad.rows(); ++r) {
        auto gr = grad.row(r);
        auto yr = post.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < gr.size(); ++c) dot += gr[c] * yr[c];
        for (std::size_t c = 0; c < gr.size(); ++c) gr[c] = yr[c] * (gr[c] - dot);
      }
      break;
  }
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kSoftplus: return "softplus";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kSoftmax: return "softmax";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::kIdentity, Activation::kRelu, Activation::kSoftplus, Activation::kSigmoid,
                 Activation::kSoftmax}) {
    if (activation_name(a) == name) return a;
  }
  throw Error(ErrorCode::kParse, "unknown activation '" + std::string(name) + "'");
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logits(double logit, double label) { return softplus(logit) - label * logit; }

void softmax_inplace(std::span<double> z) {
  if (z.empty()) return;
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

Mlp Mlp::create(std::span<const std::size_t> dims, Activation hidden, Activation output, std::mt19937_64& rng) {
  if (dims.size() < 2) throw Error(ErrorCode::kShape, "an mlp needs input and output dims");
  Mlp mlp;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    DenseLayer layer;
    layer.activation = l + 2 == dims.size() ? output : hidden;
    layer.weights = Matrix(out, in);
    layer.bias.assign(out, 0.0);
    const double limit = layer.activation == Activation::kRelu
                             ? std::sqrt(6.0 / static_cast<double>(in))
                             : std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& w : layer.weights.data()) w = dist(rng);
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.data().size() + l.bias.size();
  return n;
}

std::vector<std::span<double>> Mlp::parameters() {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.emplace_back(l.weights.data());
    out.emplace_back(l.bias);
  }
  return out;
}

std::vector<std::span<const double>> Mlp::parameters() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weights.data());
    out.emplace_back(l.bias);
  }
  return out;
}

void Mlp::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.out() || layer.weights.data().size() != layer.in() * layer.out()) {
      throw Error(ErrorCode::kShape, "layer " + std::to_string(l) + " has inconsistent shapes");
    }
    if (l > 0 && layers[l - 1].out() != layer.in()) {
      throw Error(ErrorCode::kShape, "layer " + std::to_string(l) + " input does not match previous output");
    }
  }
}

Gradients Gradients::zeros_like(const Mlp& mlp) {
  Gradients g;
  for (const auto& l : mlp.layers) {
    g.weights.emplace_back(l.out(), l.in());
    g.bias.emplace_back(l.out(), 0.0);
  }
  return g;
}

std::vector<std::span<double>> Gradients::parameters() {
  std::vector<std::span<double>> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(weights[l].data());
    out.emplace_back(bias[l]);
  }
  return out;
}

std::vector<std::span<const double>> Gradients::parameters() const {
  std::vector<std::span<const double>> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(weights[l].data());
    out.emplace_back(bias[l]);
  }
  return out;
}

void Gradients::add(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l].data();
    const auto& ow = other.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
    for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += other.bias[l][i];
  }
}

Matrix forward_batch(const Mlp& mlp, const Matrix& x, Tape* tape) {
  if (mlp.layers.empty()) throw Error(ErrorCode::kShape, "empty network");
  if (x.cols() != mlp.input_dim()) {
    throw Error(ErrorCode::kShape, "input has " + std::to_string(x.cols()) + " columns, network expects " +
                                       std::to_string(mlp.input_dim()));
  }
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
    tape->post.clear();
  }
  Matrix current = x;
  std::vector<double> wt;
  for (const auto& layer : mlp.layers) {
    const std::size_t in = layer.in();
    const std::size_t out = layer.out();
    // Transposed copy so the inner loop is a contiguous axpy.
    wt.assign(in * out, 0.0);
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = layer.weights(o, i);
    Matrix pre(current.rows(), out);
    for (std::size_t r = 0; r < current.rows(); ++r) {
      double* y = pre.row(r).data();
      std::copy(layer.bias.begin(), layer.bias.end(), y);
      const double* xr = current.row(r).data();
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = xr[i];
        if (xi == 0.0) continue;
        const double* w = wt.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) y[o] += xi * w[o];
      }
    }
    Matrix post;
    apply_activation(layer.activation, pre, post);
    if (tape) {
      tape->inputs.push_back(std::move(current));
      tape->pre.push_back(std::move(pre));
      tape->post.push_back(post);
    }
    current = std::move(post);
  }
  return current;
}

ForwardResult forward(const Mlp& mlp, std::span<const double> x) {
  Matrix in(1, x.size());
  std::copy(x.begin(), x.end(), in.data().begin());
  ForwardResult result;
  Matrix out = forward_batch(mlp, in, &result.tape);
  result.output = std::move(out.data());
  return result;
}

BackwardResult backward(const Mlp& mlp, const Tape& tape, const Matrix& upstream, GradientAt at) {
  const std::size_t n_layers = mlp.layers.size();
  if (tape.inputs.size() != n_layers || tape.pre.size() != n_layers || tape.post.size() != n_layers) {
    throw Error(ErrorCode::kTape, "tape does not match network depth");
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (tape.pre[l].cols() != mlp.layers[l].out() || tape.inputs[l].cols() != mlp.layers[l].in()) {
      throw Error(ErrorCode::kTape, "tape shapes do not match layer " + std::to_string(l));
    }
  }
  if (upstream.rows() != tape.batch() || upstream.cols() != mlp.output_dim()) {
    throw Error(ErrorCode::kShape, "upstream gradient shape does not match network output");
  }
  BackwardResult result;
  result.grads = Gradients::zeros_like(mlp);
  Matrix grad = upstream;
  for (std::size_t li = n_layers; li-- > 0;) {
    const auto& layer = mlp.layers[li];
    if (!(li + 1 == n_layers && at == GradientAt::kLastPreActivation)) {
      activation_backward(layer.activation, tape.pre[li], tape.post[li], grad);
    }
    const Matrix& input = tape.inputs[li];
    auto& dw = result.grads.weights[li];
    auto& db = result.grads.bias[li];
    const std::size_t in = layer.in();
    const std::size_t out = layer.out();
    Matrix dx(input.rows(), in);
    for (std::size_t r = 0; r < input.rows(); ++r) {
      const double* g = grad.row(r).data();
      const double* xr = input.row(r).data();
      double* dxr = dx.row(r).data();
      for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        if (go == 0.0) continue;
        db[o] += go;
        double* dwo = dw.row(o).data();
        const double* wo = layer.weights.row(o).data();
        for (std::size_t i = 0; i < in; ++i) {
          dwo[i] += go * xr[i];
          dxr[i] += go * wo[i];
        }
      }
    }
    grad = std::move(dx);
  }
  result.input_grad = std::move(grad);
  return result;
}

BackwardResult backward(const Mlp& mlp, const Tape& tape, std::span<const double> upstream) {
  Matrix up(1, upstream.size());
  std::copy(upstream.begin(), upstream.end(), up.data().begin());
  return backward(mlp, tape, up);
}

AdamState AdamState::for_parameters(std::span<const std::span<double>> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.emplace_back(p.size(), 0.0);
    s.v.emplace_back(p.size(), 0.0);
  }
  return s;
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
               AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(ErrorCode::kShape, "adam: parameter/gradient/state block counts differ");
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& m = state.m[b];
    auto& v = state.v[b];
    if (p.size() != g.size() || p.size() != m.size()) throw Error(ErrorCode::kShape, "adam: block size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

GradCheckReport grad_check_params(std::span<const std::span<double>> params,
                                  std::span<const std::span<const double>> analytic,
                                  const std::function<double()>& loss, double tolerance, double h) {
  if (params.size() != analytic.size()) throw Error(ErrorCode::kShape, "grad_check: block counts differ");
  GradCheckReport report;
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    if (p.size() != analytic[b].size()) throw Error(ErrorCode::kShape, "grad_check: block size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double up = loss();
      p[i] = saved - h;
      const double down = loss();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[b][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-5});
      if (rel > report.max_relative_error || report.checked == 0) {
        report.max_relative_error = rel;
        report.worst_block = b;
        report.worst_index = i;
      }
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      ++report.checked;
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

GradCheckReport grad_check(Mlp& mlp, const LossFn& loss_fn, std::span<const double> x, double tolerance, double h,
                           const std::function<void(Gradients&)>& corrupt) {
  auto fwd = forward(mlp, x);
  const auto [loss0, dout] = loss_fn(fwd.output);
  (void)loss0;
  auto back = backward(mlp, fwd.tape, dout);
  if (corrupt) corrupt(back.grads);
  const auto analytic = std::as_const(back.grads).parameters();
  const auto params = mlp.parameters();
  return grad_check_params(params, analytic, [&] { return loss_fn(forward(mlp, x).output).first; }, tolerance, h);
}

json to_json(const Mlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers) {
    layers.push_back({{"rows", l.out()},
                      {"cols", l.in()},
                      {"activation", activation_name(l.activation)},
                      {"weights", l.weights.data()},
                      {"bias", l.bias}});
  }
  return {{"format", kMlpFormat}, {"layers", layers}};
}

Mlp mlp_from_json(const json& j) {
  Mlp mlp;
  try {
    if (j.value("format", std::string()) != kMlpFormat) throw Error(ErrorCode::kParse, "unrecognized mlp format");
    for (const auto& lj : j.at("layers")) {
      DenseLayer l;
      const auto rows = lj.at("rows").get<std::size_t>();
      const auto cols = lj.at("cols").get<std::size_t>();
      l.weights = Matrix(rows, cols);
      l.weights.data() = lj.at("weights").get<std::vector<double>>();
      l.bias = lj.at("bias").get<std::vector<double>>();
      l.activation = parse_activation(lj.at("activation").get<std::string>());
      if (l.weights.data().size() != rows * cols) throw Error(ErrorCode::kShape, "weight array length mismatch");
      mlp.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("mlp checkpoint: ") + e.what());
  }
  mlp.validate();
  return mlp;
}

}  // namespace subsidy::nn
