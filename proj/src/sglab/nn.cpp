/*
 * Copyright 2026 The SplitGuard Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "sglab/nn.hpp"

#include <algorithm>
#include <cmath>

#include "sglab/error.hpp"

namespace sglab {
namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kReLU:
      return z > 0.0 ? z : 0.0;
    case Activation::kTanh:
      return std::tanh(z);
    case Activation::kSigmoid:
      return 1.0 / (1.0 + std::exp(-z));
    case Activation::kIdentity:
      return z;
  }
  return z;
}

// Derivative expressed through the activation's output y.
double activation_slope(Activation a, double y) {
  switch (a) {
    case Activation::kReLU:
      return y > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh:
      return 1.0 - y * y;
    case Activation::kSigmoid:
      return y * (1.0 - y);
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

void check_layer_input(const DenseLayer& layer, const Tensor& input, std::size_t index) {
  if (input.rank() != 2 || input.cols() != layer.in_features()) {
    throw InvalidInput("layer " + std::to_string(index) + " expects input width " +
                       std::to_string(layer.in_features()) + ", got shape " +
                       shape_string(input.shape()));
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kReLU:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kReLU;
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "identity") return Activation::kIdentity;
  throw InvalidInput("unknown activation '" + s + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

void Model::validate() const {
  if (layers.empty()) throw InvalidInput("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weights.rank() != 2 || l.bias.rank() != 1 || l.bias.size() != l.weights.rows()) {
      throw InvalidInput("layer " + std::to_string(i) + " has inconsistent weight/bias shapes");
    }
    if (i > 0 && layers[i - 1].out_features() != l.in_features()) {
      throw InvalidInput("layer " + std::to_string(i) + " input width " +
                         std::to_string(l.in_features()) + " does not match previous output " +
                         std::to_string(layers[i - 1].out_features()));
    }
  }
}

bool operator==(const Model& a, const Model& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].activation != b.layers[i].activation ||
        a.layers[i].weights != b.layers[i].weights || a.layers[i].bias != b.layers[i].bias) {
      return false;
    }
  }
  return true;
}

DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer{Tensor::matrix(out, in), Tensor({out}), act};
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weights.values()) w = rng.uniform(-limit, limit);
  return layer;
}

Model make_mlp(const std::vector<std::size_t>& widths, Activation hidden, Activation output,
               Rng& rng) {
  if (widths.size() < 2) throw InvalidInput("an MLP needs at least an input and output width");
  Model m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    m.layers.push_back(make_dense(widths[i], widths[i + 1], last ? output : hidden, rng));
  }
  return m;
}

std::vector<double> Gradients::first_layer_flat() const {
  const auto& g = layers.front();
  std::vector<double> flat;
  flat.reserve(g.weights.size() + g.bias.size());
  flat.insert(flat.end(), g.weights.data().begin(), g.weights.data().end());
  flat.insert(flat.end(), g.bias.data().begin(), g.bias.data().end());
  return flat;
}

Tensor apply_layer(const DenseLayer& layer, const Tensor& input) {
  const std::size_t batch = input.rows();
  const std::size_t in = layer.in_features();
  const std::size_t out = layer.out_features();
  Tensor y = Tensor::matrix(batch, out);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* x = input.row(b).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = layer.weights.row(o).data();
      double z = layer.bias[o];
      for (std::size_t i = 0; i < in; ++i) z += w[i] * x[i];
      y.at(b, o) = activate(layer.activation, z);
    }
  }
  return y;
}

ForwardResult forward(const Model& model, const Tensor& input) {
  ForwardResult r;
  r.tape.revision = model.revision;
  r.tape.inputs.reserve(model.layers.size());
  r.tape.outputs.reserve(model.layers.size());
  const Tensor* current = &input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    check_layer_input(layer, *current, i);
    r.tape.layer_shapes.push_back(layer.weights.shape());
    r.tape.inputs.push_back(*current);
    r.tape.outputs.push_back(apply_layer(layer, *current));
    current = &r.tape.outputs.back();
  }
  r.output = r.tape.outputs.back();
  return r;
}

Tensor predict(const Model& model, const Tensor& input) {
  Tensor current = input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    check_layer_input(model.layers[i], current, i);
    current = apply_layer(model.layers[i], current);
  }
  return current;
}

Gradients backward(const Model& model, const Tape& tape, const Tensor& upstream) {
  if (tape.revision != model.revision || tape.layer_shapes.size() != model.layers.size()) {
    throw ContractViolation("forward tape does not belong to the current model state");
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (tape.layer_shapes[i] != model.layers[i].weights.shape()) {
      throw ContractViolation("forward tape layer shapes do not match the model");
    }
  }
  if (upstream.shape() != tape.outputs.back().shape()) {
    throw ContractViolation("upstream gradient shape " + shape_string(upstream.shape()) +
                            " does not match output shape " +
                            shape_string(tape.outputs.back().shape()));
  }

  Gradients g;
  g.layers.resize(model.layers.size());
  Tensor delta_out = upstream;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const auto& layer = model.layers[li];
    const Tensor& x = tape.inputs[li];
    const Tensor& y = tape.outputs[li];
    const std::size_t batch = x.rows();
    const std::size_t in = layer.in_features();
    const std::size_t out = layer.out_features();

    // Gradient w.r.t. the pre-activation.
    Tensor delta = delta_out;
    for (std::size_t k = 0; k < delta.size(); ++k) {
      delta[k] *= activation_slope(layer.activation, y[k]);
    }

    LayerGradient& lg = g.layers[li];
    lg.weights = Tensor::matrix(out, in);
    lg.bias = Tensor({out});
    Tensor dx = Tensor::matrix(batch, in);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xr = x.row(b).data();
      double* dxr = dx.row(b).data();
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta.at(b, o);
        if (d == 0.0) continue;
        lg.bias[o] += d;
        double* dw = lg.weights.row(o).data();
        const double* w = layer.weights.row(o).data();
        for (std::size_t i = 0; i < in; ++i) {
          dw[i] += d * xr[i];
          dxr[i] += d * w[i];
        }
      }
    }
    delta_out = std::move(dx);
  }
  g.input = std::move(delta_out);
  return g;
}

LossResult cross_entropy_loss(const Tensor& logits, std::span<const Label> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw InvalidInput("logits shape " + shape_string(logits.shape()) + " does not match " +
                       std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  LossResult r;
  r.gradient = Tensor::matrix(batch, classes);
  for (std::size_t b = 0; b < batch; ++b) {
    const Label y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InvalidInput("label " + std::to_string(y) + " outside [0, " +
                         std::to_string(classes) + ")");
    }
    auto z = logits.row(b);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    const double log_sum = std::log(sum);
    r.loss += -(z[y] - zmax - log_sum);
    auto g = r.gradient.row(b);
    for (std::size_t c = 0; c < classes; ++c) {
      g[c] = std::exp(z[c] - zmax - log_sum) / static_cast<double>(batch);
    }
    g[y] -= 1.0 / static_cast<double>(batch);
  }
  r.loss /= static_cast<double>(batch);
  return r;
}

LossResult mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw InvalidInput("prediction shape " + shape_string(prediction.shape()) +
                       " does not match target " + shape_string(target.shape()));
  }
  LossResult r;
  r.gradient = Tensor(prediction.shape());
  const double n = static_cast<double>(prediction.size());
  for (std::size_t k = 0; k < prediction.size(); ++k) {
    const double diff = prediction[k] - target[k];
    r.loss += diff * diff;
    r.gradient[k] = 2.0 * diff / n;
  }
  r.loss /= n;
  return r;
}

std::vector<Label> argmax_rows(const Tensor& scores) {
  std::vector<Label> out(scores.rows());
  for (std::size_t b = 0; b < scores.rows(); ++b) {
    auto r = scores.row(b);
    out[b] = static_cast<Label>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double accuracy(const Tensor& scores, std::span<const Label> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Optimizer::Optimizer(OptimizerConfig config, const Model& model) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw InvalidInput("learning rate must be non-negative");
  if (config_.kind == OptimizerKind::kAdam) {
    for (const auto& l : model.layers) {
      first_moment_.push_back({Tensor(l.weights.shape()), Tensor(l.bias.shape())});
      second_moment_.push_back({Tensor(l.weights.shape()), Tensor(l.bias.shape())});
    }
  }
}

void Optimizer::step(Model& model, const Gradients& grads) {
  if (grads.layers.size() != model.layers.size()) {
    throw InvalidInput("gradient layer count does not match the model");
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (grads.layers[i].weights.shape() != model.layers[i].weights.shape() ||
        grads.layers[i].bias.shape() != model.layers[i].bias.shape()) {
      throw InvalidInput("gradient shapes do not match layer " + std::to_string(i));
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      axpy(-lr, grads.layers[i].weights.values(), model.layers[i].weights.values());
      axpy(-lr, grads.layers[i].bias.values(), model.layers[i].bias.values());
    }
  } else {
    if (first_moment_.size() != model.layers.size()) {
      throw InvalidInput("optimizer state was built for a different model");
    }
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m,
                      std::span<double> v) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
        v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
        const double m_hat = m[k] / c1;
        const double v_hat = v[k] / c2;
        p[k] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      }
    };
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      update(model.layers[i].weights.values(), grads.layers[i].weights.values(),
             first_moment_[i].weights.values(), second_moment_[i].weights.values());
      update(model.layers[i].bias.values(), grads.layers[i].bias.values(),
             first_moment_[i].bias.values(), second_moment_[i].bias.values());
    }
  }
  ++model.revision;
}

}  // namespace sglab
