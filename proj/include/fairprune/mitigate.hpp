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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprune/audit.hpp"
#include "fairprune/data.hpp"
#include "fairprune/model.hpp"
#include "fairprune/prune.hpp"
#include "fairprune/train.hpp"

namespace fairprune {

struct MitigationOptions {
  double lagrangian_step = 0.001;
  double multiplier_cap = 100.0;
  // Budget for retraining a pruned network: `retrain_epochs` if set, else
  // round(retrain_fraction * original epochs).
  double retrain_fraction = 0.25;
  std::optional<int> retrain_epochs;

  int retrain_budget(int original_epochs) const {
    if (retrain_epochs) return *retrain_epochs;
    return static_cast<int>(std::lround(retrain_fraction * original_epochs));
  }
};

/// Lagrange multipliers (one per group) and per-epoch |J_a - J| history.
struct MitigationState {
  std::vector<double> multipliers;
  double lagrangian_step = 0.001;
  std::vector<std::vector<double>> violation_history;
  std::vector<std::string> warnings;
};

/// |J(theta; D_a) - J(theta; D)| per group; 0 for absent groups.
inline std::vector<double> group_loss_gaps(const ModelSpec& spec, const ParamVector& params, const Dataset& ds) {
  const double total = empirical_risk(spec, params, ds);
  std::vector<double> gaps(static_cast<std::size_t>(ds.num_groups), 0.0);
  for (int g = 0; g < ds.num_groups; ++g)
    if (ds.has_group(g)) gaps[static_cast<std::size_t>(g)] = std::abs(group_risk(spec, params, ds, g) - total);
  return gaps;
}

/// Per-sample weights that make the batch gradient equal to the gradient of
///   J_B + sum_a lambda_a |J_{B,a} - J_B|
/// with the sign of each gap frozen at the batch's current losses.
class LagrangianWeighting {
 public:
  LagrangianWeighting(const Dataset& ds, const std::vector<double>& multipliers)
      : ds_(ds), lambda_(multipliers) {}

  void operator()(std::span<const std::size_t> batch, std::span<const double> losses, std::span<double> weights) const {
    const std::size_t m = lambda_.size();
    const double B = static_cast<double>(batch.size());
    std::vector<double> sum(m, 0.0);
    std::vector<std::size_t> count(m, 0);
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto g = static_cast<std::size_t>(ds_.groups[batch[b]]);
      sum[g] += losses[b];
      ++count[g];
      total += losses[b];
    }
    const double mean = total / B;
    std::vector<double> coeff(m, 0.0);  // lambda_a * sign(J_{B,a} - J_B)
    double coeff_sum = 0.0;
    for (std::size_t g = 0; g < m; ++g) {
      if (count[g] == 0) continue;
      const double gap = sum[g] / static_cast<double>(count[g]) - mean;
      const double sign = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
      coeff[g] = lambda_[g] * sign;
      coeff_sum += coeff[g];
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto g = static_cast<std::size_t>(ds_.groups[batch[b]]);
      weights[b] = 1.0 / B + coeff[g] / static_cast<double>(count[g]) - coeff_sum / B;
    }
  }

 private:
  const Dataset& ds_;
  const std::vector<double>& lambda_;
};

struct FairTrainResult {
  ParamVector params;
  MitigationState state;
  std::vector<double> epoch_losses;
};

/// Lagrangian-dual training of min J(theta; D) s.t. J(theta; D_a) = J(theta; D).
///
/// Each epoch runs primal SGD on the penalised objective, then updates
/// lambda_a <- min(cap, lambda_a + step * |J_a - J|) on the full data.
inline FairTrainResult fair_train(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                                  const TrainConfig& cfg, const MitigationOptions& opts = {},
                                  std::optional<std::vector<bool>> keep_mask = std::nullopt,
                                  std::optional<MitigationState> initial = std::nullopt) {
  int present = 0;
  for (int g = 0; g < ds.num_groups; ++g) present += ds.has_group(g) ? 1 : 0;
  if (present < 2) throw std::invalid_argument("fair_train: needs at least two groups");
  if (!(opts.lagrangian_step >= 0.0)) throw std::invalid_argument("fair_train: lagrangian_step must be >= 0");
  if (!(opts.multiplier_cap >= 0.0)) throw std::invalid_argument("fair_train: multiplier_cap must be >= 0");

  FairTrainResult out;
  out.state = initial.value_or(MitigationState{});
  out.state.lagrangian_step = opts.lagrangian_step;
  out.state.multipliers.resize(static_cast<std::size_t>(ds.num_groups), 0.0);

  SgdTrainer trainer(spec, params, ds, cfg, std::move(keep_mask));
  auto& lambda = out.state.multipliers;
  for (int e = 0; e < cfg.epochs; ++e) {
    LagrangianWeighting weighting(ds, lambda);
    out.epoch_losses.push_back(trainer.run_epoch(std::cref(weighting)));
    const auto gaps = group_loss_gaps(spec, trainer.params(), ds);
    for (std::size_t g = 0; g < lambda.size(); ++g) {
      lambda[g] += opts.lagrangian_step * gaps[g];
      if (!std::isfinite(lambda[g]) || lambda[g] > opts.multiplier_cap) {
        lambda[g] = opts.multiplier_cap;
        out.state.warnings.push_back("epoch " + std::to_string(e) + ": multiplier for group " + std::to_string(g) +
                                     " capped at " + std::to_string(opts.multiplier_cap));
      }
    }
    out.state.violation_history.push_back(gaps);
  }
  out.params = trainer.params();
  return out;
}

// ---------------------------------------------------------------------------
// Monitoring of the gradient-norm and curvature equalities (not optimised).

struct ConstraintRecord {
  int group = 0;
  double grad_norm = 0.0;
  double grad_gap = 0.0;  // | ||g_a|| - ||g|| |
  EigenResult max_eig;
  double eig_gap = 0.0;   // | lambda(H_a) - lambda(H) |
};

struct ConstraintMonitor {
  double full_grad_norm = 0.0;
  EigenResult full_max_eig;
  std::vector<ConstraintRecord> groups;
  std::vector<std::string> flags;

  double grad_norm_spread() const {
    if (groups.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(groups.begin(), groups.end(),
                                        [](const auto& a, const auto& b) { return a.grad_norm < b.grad_norm; });
    return hi->grad_norm - lo->grad_norm;
  }
  double max_eig_spread() const {
    if (groups.empty()) return 0.0;
    auto [lo, hi] = std::minmax_element(groups.begin(), groups.end(),
                                        [](const auto& a, const auto& b) { return a.max_eig.value < b.max_eig.value; });
    return hi->max_eig.value - lo->max_eig.value;
  }
};

inline ConstraintMonitor monitor_eq5_constraints(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                                          const EigenOptions& opts = {}) {
  ConstraintMonitor mon;
  mon.full_grad_norm = gradient(spec, params, ds, Scope::full()).norm();
  mon.full_max_eig = hessian_max_eig(spec, params, ds, Scope::full(), opts);
  if (!mon.full_max_eig.converged) mon.flags.push_back("eig_not_converged:full");
  for (int g = 0; g < ds.num_groups; ++g) {
    if (!ds.has_group(g)) continue;
    ConstraintRecord r;
    r.group = g;
    r.grad_norm = group_grad_norm(spec, params, ds, g);
    r.grad_gap = std::abs(r.grad_norm - mon.full_grad_norm);
    r.max_eig = group_hessian_max_eig(spec, params, ds, g, opts);
    r.eig_gap = std::abs(r.max_eig.value - mon.full_max_eig.value);
    if (!r.max_eig.converged) mon.flags.push_back("eig_not_converged:g" + std::to_string(g));
    mon.groups.push_back(r);
  }
  return mon;
}

// ---------------------------------------------------------------------------
// Train -> prune -> (retrain) pipelines

enum class Regime { kNoMitigation, kFairBefore, kFairAfter, kFairBoth };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::kNoMitigation: return "no_mitigation";
    case Regime::kFairBefore: return "fair_before";
    case Regime::kFairAfter: return "fair_after";
    case Regime::kFairBoth: return "fair_both";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "no_mitigation") return Regime::kNoMitigation;
  if (s == "fair_before") return Regime::kFairBefore;
  if (s == "fair_after") return Regime::kFairAfter;
  if (s == "fair_both") return Regime::kFairBoth;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

/// True when the original (unpruned) network is trained with mitigation.
inline bool fair_original(Regime r) { return r == Regime::kFairBefore || r == Regime::kFairBoth; }
/// True when the pruned network is retrained with mitigation.
inline bool fair_retrain(Regime r) { return r == Regime::kFairAfter || r == Regime::kFairBoth; }

struct RegimeConfig {
  TrainConfig train;
  MitigationOptions mitigation;
  PruneOptions prune;
  AuditOptions audit;
  std::uint64_t init_seed = 0;
};

/// The trained, unpruned network of a regime; shared by regimes with the
/// same prefix.
struct OriginalModel {
  ParamVector params;
  std::optional<MitigationState> state;
};

inline OriginalModel train_original(const ModelSpec& spec, const Dataset& ds, const RegimeConfig& cfg, bool fair) {
  const ParamVector init = init_model(spec, cfg.init_seed);
  if (fair) {
    auto r = fair_train(spec, init, ds, cfg.train, cfg.mitigation);
    return {std::move(r.params), std::move(r.state)};
  }
  return {train(spec, init, ds, cfg.train).params, std::nullopt};
}

struct RegimeResult {
  Regime regime = Regime::kNoMitigation;
  double rate = 0.0;
  ParamVector original;
  ParamVector final_params;
  PruneMask mask;
  std::optional<MitigationState> retrain_state;
  AuditReport audit;
};

/// Prunes `original` at `rate`, retrains with the mask frozen for the
/// fair-after regimes, and audits final vs original on `eval`.
inline RegimeResult finish_regime(const ModelSpec& spec, const Dataset& train_ds, const Dataset& eval,
                                  const RegimeConfig& cfg, Regime regime, double rate, const ParamVector& original) {
  RegimeResult res;
  res.regime = regime;
  res.rate = rate;
  res.original = original;
  auto pr = magnitude_prune(original, rate, cfg.prune);
  res.mask = pr.mask;
  res.final_params = std::move(pr.pruned);
  if (fair_retrain(regime)) {
    const int epochs = cfg.mitigation.retrain_budget(cfg.train.epochs);
    if (epochs > 0) {
      TrainConfig rc = cfg.train;
      rc.epochs = epochs;
      rc.seed = cfg.train.seed + 1;
      auto r = fair_train(spec, res.final_params, train_ds, rc, cfg.mitigation, res.mask.keep);
      res.final_params = std::move(r.params);
      res.retrain_state = std::move(r.state);
    }
  }
  res.audit = audit(spec, original, res.final_params, eval, cfg.audit);
  return res;
}

inline RegimeResult run_regime(const ModelSpec& spec, const Dataset& train_ds, const Dataset& eval,
                               const RegimeConfig& cfg, Regime regime, double rate) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("regime: rate must be in [0, 1]");
  const auto original = train_original(spec, train_ds, cfg, fair_original(regime));
  return finish_regime(spec, train_ds, eval, cfg, regime, rate, original.params);
}

inline RegimeResult run_regime(const ModelSpec& spec, const Dataset& ds, const RegimeConfig& cfg, Regime regime,
                               double rate) {
  return run_regime(spec, ds, ds, cfg, regime, rate);
}

}  // namespace fairprune
