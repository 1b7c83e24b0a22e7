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
#include "sglab/fsha.hpp"

#include <algorithm>
#include <cmath>

#include "sglab/error.hpp"

namespace sglab {
namespace {

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

Model make_decoder(const std::vector<std::size_t>& encoder_widths, Rng& rng) {
  std::vector<std::size_t> widths(encoder_widths.rbegin(), encoder_widths.rend());
  return make_mlp(widths, Activation::kReLU, Activation::kSigmoid, rng);
}

}  // namespace

std::string to_string(HijackLoss l) {
  return l == HijackLoss::kPrinted ? "printed" : "log-likelihood";
}

HijackLoss hijack_loss_from_string(const std::string& s) {
  if (s == "printed") return HijackLoss::kPrinted;
  if (s == "log-likelihood") return HijackLoss::kLogLikelihood;
  throw InvalidInput("unknown hijack loss '" + s + "' (expected printed or log-likelihood)");
}

double clamped_log(double p) { return std::log(clamp_probability(p)); }
double clamped_log1m(double p) { return std::log(1.0 - clamp_probability(p)); }

FshaServer::FshaServer(FshaConfig config, Dataset public_data, Topology topology)
    : config_(std::move(config)),
      public_(std::move(public_data)),
      topology_(topology),
      rng_(config_.seed) {
  if (public_.size() == 0) throw InvalidInput("FSHA needs a non-empty public dataset");
  if (config_.encoder_widths.size() < 2) throw InvalidInput("encoder needs at least one layer");
  if (config_.encoder_widths.front() != public_.dims()) {
    throw InvalidInput("encoder input width does not match the public data");
  }
  encoder_ = make_mlp(config_.encoder_widths, config_.encoder_activation,
                      config_.encoder_activation, rng_);
  if (config_.initial_encoder) {
    const Model& init = *config_.initial_encoder;
    init.validate();
    bool same_shape = init.layers.size() == encoder_.layers.size();
    for (std::size_t l = 0; same_shape && l < init.layers.size(); ++l) {
      same_shape = init.layers[l].weights.shape() == encoder_.layers[l].weights.shape() &&
                   init.layers[l].activation == encoder_.layers[l].activation;
    }
    if (!same_shape) throw InvalidInput("initial encoder does not match encoder_widths");
    encoder_ = init;
  }
  decoder_ = make_decoder(config_.encoder_widths, rng_);
  const std::size_t boundary = config_.encoder_widths.back();
  distinguisher_ = make_mlp({boundary, config_.distinguisher_hidden, 1},
                            config_.distinguisher_activation,
                            Activation::kSigmoid, rng_);
  facade_ = make_mlp({boundary, config_.facade_output}, Activation::kReLU, Activation::kReLU, rng_);
  encoder_optimizer_ = Optimizer(config_.autoencoder_optimizer, encoder_);
  decoder_optimizer_ = Optimizer(config_.autoencoder_optimizer, decoder_);
  distinguisher_optimizer_ = Optimizer(config_.distinguisher_optimizer, distinguisher_);
}

double FshaServer::setup_phase(std::size_t epochs) {
  BatchPlan plan;
  plan.batch_size = config_.setup_batch_size;
  plan.seed = rng_.fork();
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = epoch_order(public_.size(), plan, e);
    for (auto batch : make_batches(order, plan.batch_size)) {
      const Tensor x = public_.examples.gather_rows(batch);
      auto enc = forward(encoder_, x);
      auto dec = forward(decoder_, enc.output);
      auto loss = mse_loss(dec.output, x);
      auto dec_grads = backward(decoder_, dec.tape, loss.gradient);
      auto enc_grads = backward(encoder_, enc.tape, dec_grads.input);
      decoder_optimizer_.step(decoder_, dec_grads);
      encoder_optimizer_.step(encoder_, enc_grads);
    }
  }
  setup_done_ = true;
  return mse_loss(predict(decoder_, predict(encoder_, public_.examples)), public_.examples).loss;
}

Tensor FshaServer::sample_public_batch() {
  const std::size_t n = std::min(config_.attack_batch_size, public_.size());
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = rng_.below(public_.size());
  return public_.examples.gather_rows(idx);
}

AttackStepResult FshaServer::attack_step(const Tensor& activations, const Tensor& public_batch) {
  if (!setup_done_) throw StateError("FSHA attack step before the setup phase");
  if (activations.rank() != 2 || activations.cols() != distinguisher_.input_width()) {
    throw InvalidInput("activations " + shape_string(activations.shape()) +
                       " do not match the encoder output width");
  }
  AttackStepResult result;
  const Tensor encoded = predict(encoder_, public_batch);
  auto priv = forward(distinguisher_, activations);
  auto pub = forward(distinguisher_, encoded);
  const auto n_priv = static_cast<double>(activations.rows());
  const auto n_pub = static_cast<double>(encoded.rows());

  const bool printed = config_.loss == HijackLoss::kPrinted;

  // Client loss L_f, averaged over the batch.
  Tensor up_client(priv.output.shape());
  for (std::size_t i = 0; i < priv.output.size(); ++i) {
    const double p = clamp_probability(priv.output[i]);
    if (printed) {
      result.hijack_loss += clamped_log1m(p) / n_priv;
      up_client[i] = -1.0 / (1.0 - p) / n_priv;
    } else {
      result.hijack_loss -= clamped_log(p) / n_priv;
      up_client[i] = -1.0 / p / n_priv;
    }
  }
  result.client_gradient = backward(distinguisher_, priv.tape, up_client).input;

  // Distinguisher loss L_D: private term, then public term.
  Tensor up_priv(priv.output.shape());
  for (std::size_t i = 0; i < priv.output.size(); ++i) {
    const double p = clamp_probability(priv.output[i]);
    if (printed) {
      result.distinguisher_loss += clamped_log(p) / n_priv;
      up_priv[i] = 1.0 / p / n_priv;
    } else {
      result.distinguisher_loss -= clamped_log1m(p) / n_priv;
      up_priv[i] = 1.0 / (1.0 - p) / n_priv;
    }
  }
  Tensor up_pub(pub.output.shape());
  for (std::size_t i = 0; i < pub.output.size(); ++i) {
    const double p = clamp_probability(pub.output[i]);
    if (printed) {
      result.distinguisher_loss += clamped_log1m(p) / n_pub;
      up_pub[i] = -1.0 / (1.0 - p) / n_pub;
    } else {
      result.distinguisher_loss -= clamped_log(p) / n_pub;
      up_pub[i] = -1.0 / p / n_pub;
    }
  }
  Gradients g_priv = backward(distinguisher_, priv.tape, up_priv);
  const Gradients g_pub = backward(distinguisher_, pub.tape, up_pub);
  for (std::size_t l = 0; l < g_priv.layers.size(); ++l) {
    axpy(1.0, g_pub.layers[l].weights.values(), g_priv.layers[l].weights.values());
    axpy(1.0, g_pub.layers[l].bias.values(), g_priv.layers[l].bias.values());
  }
  distinguisher_optimizer_.step(distinguisher_, g_priv);
  return result;
}

SplitMessage FshaServer::on_forward(const SplitMessage& message) {
  if (surrogate_ && use_surrogate_ && use_surrogate_(message)) {
    pending_from_surrogate_ = true;
    pending_batch_ = message.batch_id;
    return surrogate_->on_forward(message);
  }
  pending_from_surrogate_ = false;
  // Received labels, if any, are ignored.
  AttackStepResult step = attack_step(message.payload, sample_public_batch());
  if (topology_ == Topology::kLabelSharing) {
    return SplitMessage{MessageKind::kBackwardGradients, message.batch_id,
                        std::move(step.client_gradient), std::nullopt};
  }
  pending_batch_ = message.batch_id;
  pending_gradient_ = std::move(step.client_gradient);
  return SplitMessage{MessageKind::kServerOutput, message.batch_id,
                      predict(facade_, message.payload), std::nullopt};
}

SplitMessage FshaServer::on_client_loss_gradients(const SplitMessage& message) {
  if (topology_ != Topology::kPrivateLabels) {
    throw ProtocolError("ClientLossGradients received in label-sharing mode");
  }
  if (!pending_batch_ || *pending_batch_ != message.batch_id) {
    throw ProtocolError("ClientLossGradients without a matching forward pass");
  }
  pending_batch_.reset();
  if (pending_from_surrogate_) return surrogate_->on_client_loss_gradients(message);
  // The client's gradients are discarded; the hijacking gradient goes back instead.
  return SplitMessage{MessageKind::kBackwardGradients, message.batch_id,
                      std::move(pending_gradient_), std::nullopt};
}

Tensor FshaServer::reconstruct(const Tensor& activations) const {
  if (!setup_done_) throw StateError("reconstruction before the setup phase");
  return predict(decoder_, activations);
}

double FshaServer::reconstruction_error(const Tensor& inputs) const {
  return mse_loss(predict(decoder_, predict(encoder_, inputs)), inputs).loss;
}

void FshaServer::set_distinguisher(Model d) {
  d.validate();
  if (d.input_width() != distinguisher_.input_width() || d.output_width() != 1) {
    throw InvalidInput("replacement distinguisher has the wrong shape");
  }
  distinguisher_ = std::move(d);
  distinguisher_optimizer_ = Optimizer(config_.distinguisher_optimizer, distinguisher_);
}

void FshaServer::set_surrogate(ServerBehavior* surrogate,
                               std::function<bool(const SplitMessage&)> use_surrogate) {
  surrogate_ = surrogate;
  use_surrogate_ = std::move(use_surrogate);
}

}  // namespace sglab
