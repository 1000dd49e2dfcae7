// Copyright 2026 The fairprune Authors.
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprune/data.hpp"
#include "fairprune/model.hpp"

namespace fairprune {

/// SGD with heavy-ball momentum and L2 weight decay added to the gradient.
struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("train: learning_rate must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("train: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  }
};

/// Training produced a non-finite loss or parameter. Carries the parameters
/// from before the failing step.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, ParamVector last_finite, int epoch)
      : std::runtime_error(what), last_finite_(std::move(last_finite)), epoch_(epoch) {}
  const ParamVector& last_finite() const { return last_finite_; }
  int epoch() const { return epoch_; }

 private:
  ParamVector last_finite_;
  int epoch_;
};

struct TrainResult {
  ParamVector params;
  std::vector<double> epoch_losses;  // mean per-sample loss seen during each epoch
};

/// Fills per-sample weights for one mini-batch from the batch's per-sample
/// losses. The batch gradient is sum_i weights[i] * grad(loss_i).
using BatchWeighting = std::function<void(std::span<const std::size_t> batch, std::span<const double> losses,
                                          std::span<double> weights)>;

inline void uniform_weighting(std::span<const std::size_t> batch, std::span<const double>,
                              std::span<double> weights) {
  const double w = 1.0 / static_cast<double>(batch.size());
  std::fill(weights.begin(), weights.end(), w);
}

/// Stateful mini-batch SGD driver. One instance runs one training job;
/// `plain_train` and the fair trainer share it so their trajectories agree
/// bit-for-bit when the fairness weights reduce to uniform.
class SgdTrainer {
 public:
  SgdTrainer(const ModelSpec& spec, ParamVector params, const Dataset& ds, const TrainConfig& cfg,
             std::optional<std::vector<bool>> keep_mask = std::nullopt)
      : spec_(spec), ds_(ds), cfg_(cfg), params_(std::move(params)), keep_(std::move(keep_mask)),
        velocity_(params_.size(), 0.0), grad_(params_.size(), 0.0), rng_(cfg.seed) {
    cfg_.validate();
    spec_.validate_for(ds_);
    params_.validate(spec_);
    if (ds_.size() == 0) throw std::invalid_argument("train: empty dataset");
    if (keep_ && keep_->size() != params_.size())
      throw std::invalid_argument("train: mask length differs from parameter count");
    apply_mask();
    order_.resize(ds_.size());
    std::iota(order_.begin(), order_.end(), 0);
  }

  const ParamVector& params() const { return params_; }
  int epochs_done() const { return epoch_; }

  /// One pass over the data; returns the mean per-sample loss observed.
  double run_epoch(const BatchWeighting& weighting = uniform_weighting) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    const std::size_t n = order_.size();
    const std::size_t B = std::min(cfg_.batch_size, n);
    double loss_total = 0.0;
    std::vector<ForwardTrace<double>> traces;
    std::vector<double> losses, weights;
    for (std::size_t start = 0; start < n; start += B) {
      const std::size_t end = std::min(start + B, n);
      std::span<const std::size_t> batch(order_.data() + start, end - start);
      traces.resize(batch.size());
      losses.resize(batch.size());
      weights.resize(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        forward<double>(spec_, params_.layout, params_.values, ds_.row(batch[b]), traces[b]);
        losses[b] = sample_loss(spec_, traces[b], ds_.labels[batch[b]]);
        loss_total += losses[b];
      }
      if (!std::isfinite(loss_total))
        throw DivergenceError("train: non-finite loss in epoch " + std::to_string(epoch_), params_, epoch_);
      weighting(batch, losses, weights);

      std::fill(grad_.begin(), grad_.end(), 0.0);
      for (std::size_t b = 0; b < batch.size(); ++b)
        backward<double>(spec_, params_.layout, params_.values, traces[b],
                         loss_logit_gradient(spec_, traces[b], ds_.labels[batch[b]]), weights[b], grad_);
      step();
    }
    ++epoch_;
    return loss_total / static_cast<double>(n);
  }

 private:
  void step() {
    previous_ = params_.values;
    const std::size_t k = params_.size();
    for (std::size_t i = 0; i < k; ++i) {
      double g = grad_[i] + cfg_.weight_decay * params_.values[i];
      if (keep_ && !(*keep_)[i]) g = 0.0;
      velocity_[i] = cfg_.momentum * velocity_[i] + g;
      params_.values[i] -= cfg_.learning_rate * velocity_[i];
    }
    apply_mask();
    for (double v : params_.values)
      if (!std::isfinite(v)) {
        params_.values = previous_;
        throw DivergenceError("train: non-finite parameter in epoch " + std::to_string(epoch_), params_, epoch_);
      }
  }

  void apply_mask() {
    if (!keep_) return;
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (!(*keep_)[i]) {
        params_.values[i] = 0.0;
        velocity_[i] = 0.0;
      }
  }

  ModelSpec spec_;
  const Dataset& ds_;
  TrainConfig cfg_;
  ParamVector params_;
  std::optional<std::vector<bool>> keep_;
  std::vector<double> velocity_;
  std::vector<double> grad_;
  std::vector<double> previous_;
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
};

/// Minimises J(theta; D) from `params`. With `keep_mask`, masked-out
/// coordinates are held at exactly zero after every step.
inline TrainResult train(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                         const TrainConfig& cfg, std::optional<std::vector<bool>> keep_mask = std::nullopt) {
  SgdTrainer trainer(spec, params, ds, cfg, std::move(keep_mask));
  TrainResult out;
  for (int e = 0; e < cfg.epochs; ++e) out.epoch_losses.push_back(trainer.run_epoch());
  out.params = trainer.params();
  return out;
}

}  // namespace fairprune
