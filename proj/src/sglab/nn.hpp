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
#pragma once

// Minimal feedforward engine: dense layers, reverse-mode gradients, losses
// and optimizers. Everything is double precision and single-threaded.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sglab/rng.hpp"
#include "sglab/tensor.hpp"

namespace sglab {

using Label = std::int32_t;

enum class Activation { kReLU, kTanh, kSigmoid, kIdentity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Tensor weights;  // [out x in]
  Tensor bias;     // [out]
  Activation activation = Activation::kIdentity;

  std::size_t in_features() const { return weights.cols(); }
  std::size_t out_features() const { return weights.rows(); }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

struct Model {
  std::vector<DenseLayer> layers;
  // Bumped on every optimizer update; forward tapes remember it so that a
  // backward pass against updated parameters is caught.
  std::uint64_t revision = 0;

  std::size_t input_width() const { return layers.front().in_features(); }
  std::size_t output_width() const { return layers.back().out_features(); }
  std::size_t parameter_count() const;

  // Throws InvalidInput if adjacent layers disagree or shapes are inconsistent.
  void validate() const;

  friend bool operator==(const Model& a, const Model& b);
};

// Glorot-uniform weights in +-sqrt(6/(in+out)), zero bias.
DenseLayer make_dense(std::size_t in, std::size_t out, Activation act, Rng& rng);

// widths = {in, h1, ..., out}. Hidden layers use `hidden`, the last layer `output`.
Model make_mlp(const std::vector<std::size_t>& widths, Activation hidden, Activation output,
               Rng& rng);

// Activation cache recorded by forward() and consumed by backward().
struct Tape {
  std::uint64_t revision = 0;
  std::vector<Shape> layer_shapes;
  std::vector<Tensor> inputs;   // input to layer i
  std::vector<Tensor> outputs;  // post-activation output of layer i
};

struct ForwardResult {
  Tensor output;
  Tape tape;
};

struct LayerGradient {
  Tensor weights;
  Tensor bias;

  friend bool operator==(const LayerGradient&, const LayerGradient&) = default;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  Tensor input;  // d(loss)/d(model input)

  // First layer's weight gradient followed by its bias gradient, flattened.
  std::vector<double> first_layer_flat() const;
};

Tensor apply_layer(const DenseLayer& layer, const Tensor& input);

// input is [batch x in]. Throws InvalidInput on a width mismatch.
ForwardResult forward(const Model& model, const Tensor& input);

// Output only; skips building the tape.
Tensor predict(const Model& model, const Tensor& input);

// upstream is d(loss)/d(output). Throws ContractViolation when the tape does
// not belong to this model state or the upstream shape is wrong.
Gradients backward(const Model& model, const Tape& tape, const Tensor& upstream);

struct LossResult {
  double loss = 0.0;
  Tensor gradient;  // d(loss)/d(prediction)
};

// Mean negative log-softmax of the true class over the batch.
LossResult cross_entropy_loss(const Tensor& logits, std::span<const Label> labels);

// Mean over all elements of (prediction - target)^2.
LossResult mse_loss(const Tensor& prediction, const Tensor& target);

std::vector<Label> argmax_rows(const Tensor& scores);
double accuracy(const Tensor& scores, std::span<const Label> labels);

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Per-model optimizer state. Adam moments mirror the model's parameter tensors.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, const Model& model);

  void step(Model& model, const Gradients& grads);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  friend bool operator==(const Optimizer&, const Optimizer&) = default;

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<LayerGradient> first_moment_;
  std::vector<LayerGradient> second_moment_;
};

}  // namespace sglab
