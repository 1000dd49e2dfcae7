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

// Per-group fairness audit of a pruned model.
//
// Quantities, for group a with data D_a, original params theta and pruned
// params theta_bar, delta = theta_bar - theta:
//
//   excessive loss     R(a) = J(theta_bar; D_a) - J(theta; D_a)
//   loss violation     max_a R(a) - min_a R(a)
//   accuracy violation max_a acc_a - min_a acc_a   (pruned model)
//   Taylor bound       ||g_a|| ||delta|| + 1/2 lambda_max(H_a) ||delta||^2
//
// and the two curvature/gradient bounds evaluated per sample:
//
//   lambda_max(H_a) <= mean f(1-f) ||dz||^2 + |f - y| lambda_max(d2z)
//   ||g_a||         <= mean c ||f - y|| ||dz||          (c = 2 for MSE)
//
// where dz and d2z are the parameter Jacobian and Hessian of the output
// logits. With respect to the logits the loss gradient is exactly f - y
// (cross-entropy) and its curvature f(1-f) (binary cross-entropy).

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairprune/data.hpp"
#include "fairprune/diff.hpp"
#include "fairprune/model.hpp"
#include "fairprune/prune.hpp"
#include "fairprune/spectrum.hpp"

namespace fairprune {

inline void require_group(const Dataset& ds, int group) {
  if (group < 0 || group >= ds.num_groups || !ds.has_group(group))
    throw std::invalid_argument("audit: group " + std::to_string(group) + " not present");
}

/// R(a); negative when pruning helped the group.
inline double excessive_loss(const ModelSpec& spec, const ParamVector& orig, const ParamVector& pruned,
                             const Dataset& ds, int group) {
  require_group(ds, group);
  return group_risk(spec, pruned, ds, group) - group_risk(spec, orig, ds, group);
}

struct FairnessViolation {
  double loss_based = 0.0;
  double accuracy_based = 0.0;
  int loss_argmax = 0;  // group with the largest R(a)
  int loss_argmin = 0;
  int accuracy_argmax = 0;  // best-served group under the pruned model
  int accuracy_argmin = 0;
};

/// Groups absent from `ds` are skipped.
inline FairnessViolation fairness_violation(const ModelSpec& spec, const ParamVector& orig, const ParamVector& pruned,
                                            const Dataset& ds) {
  FairnessViolation v;
  double rmax = -std::numeric_limits<double>::infinity(), rmin = std::numeric_limits<double>::infinity();
  double amax = rmax, amin = rmin;
  for (int g = 0; g < ds.num_groups; ++g) {
    if (!ds.has_group(g)) continue;
    const double r = excessive_loss(spec, orig, pruned, ds, g);
    const double acc = group_accuracy(spec, pruned, ds, g);
    if (r > rmax) { rmax = r; v.loss_argmax = g; }
    if (r < rmin) { rmin = r; v.loss_argmin = g; }
    if (acc > amax) { amax = acc; v.accuracy_argmax = g; }
    if (acc < amin) { amin = acc; v.accuracy_argmin = g; }
  }
  if (std::isfinite(rmax)) {
    v.loss_based = rmax - rmin;
    v.accuracy_based = amax - amin;
  }
  return v;
}

inline double group_grad_norm(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group) {
  require_group(ds, group);
  return gradient(spec, params, ds, Scope::of_group(group)).norm();
}

inline EigenResult hessian_max_eig(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                                   const Scope& scope, const EigenOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw std::invalid_argument("eigen: tol must be > 0");
  HvpOperator op(spec, params, ds, scope);
  return max_eigenvalue([&](std::span<const double> v, std::span<double> out) { op.apply(v, out); }, op.dim(), opts);
}

/// lambda_max(H_a), the largest signed eigenvalue of the group Hessian.
inline EigenResult group_hessian_max_eig(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group,
                                         const EigenOptions& opts = {}) {
  require_group(ds, group);
  return hessian_max_eig(spec, params, ds, Scope::of_group(group), opts);
}

// ---------------------------------------------------------------------------
// Second-order expansion bound

struct TaylorBoundReport {
  int group = 0;
  double grad_norm = 0.0;      // ||g_a|| at the original params
  double max_eig = 0.0;        // lambda_max(H_a) at the original params
  bool eig_converged = true;
  double delta_norm = 0.0;
  double first_order = 0.0;    // ||g_a|| ||delta||
  double second_order = 0.0;   // 1/2 lambda ||delta||^2
  double bound_total = 0.0;
  double linear_term = 0.0;    // g_a . delta
  double quadratic_term = 0.0; // 1/2 delta^T H_a delta
  double actual = 0.0;         // R(a)
  double residual = 0.0;       // R(a) - linear_term - quadratic_term
  bool negative_curvature = false;
};

/// Evaluates the expansion bound for moving from `orig` to `perturbed` (a
/// pruned vector or any other point).
inline TaylorBoundReport taylor_bound(const ModelSpec& spec, const ParamVector& orig, const ParamVector& perturbed,
                                      const Dataset& ds, int group, const EigenOptions& opts = {}) {
  require_group(ds, group);
  if (orig.size() != perturbed.size()) throw std::invalid_argument("taylor: parameter counts differ");
  const Scope scope = Scope::of_group(group);
  std::vector<double> delta(orig.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = perturbed.values[i] - orig.values[i];

  TaylorBoundReport r;
  r.group = group;
  const auto g = gradient(spec, orig, ds, scope);
  HvpOperator op(spec, orig, ds, scope);
  const auto eig =
      max_eigenvalue([&](std::span<const double> v, std::span<double> out) { op.apply(v, out); }, op.dim(), opts);
  r.grad_norm = g.norm();
  r.max_eig = eig.value;
  r.eig_converged = eig.converged;
  r.negative_curvature = eig.value < 0.0;
  r.delta_norm = norm2(delta);
  r.first_order = r.grad_norm * r.delta_norm;
  r.second_order = 0.5 * r.max_eig * r.delta_norm * r.delta_norm;
  r.bound_total = r.first_order + r.second_order;
  r.linear_term = dot(g.values, delta);
  r.quadratic_term = 0.5 * dot(delta, op.apply(delta));
  r.actual = group_risk(spec, perturbed, ds, group) - group_risk(spec, orig, ds, group);
  r.residual = r.actual - r.linear_term - r.quadratic_term;
  return r;
}

struct BoundSequenceGroup {
  int group = 0;
  std::vector<double> bounds;       // bound_total per rate
  std::vector<double> delta_norms;  // ||delta|| per rate
  double grad_norm = 0.0;
  double max_eig = 0.0;
  bool negative_curvature = false;
  bool monotone = true;
};

struct BoundSequenceResult {
  bool holds = true;  // monotone for every group with lambda >= 0
  bool flagged = false;  // some group has lambda < 0
  std::vector<double> rates;
  std::vector<BoundSequenceGroup> groups;
};

/// Bound sequence over ascending pruning rates with g_a and lambda(H_a)
/// fixed at `orig`.
inline BoundSequenceResult corollary1_check(const ModelSpec& spec, const ParamVector& orig, const Dataset& ds,
                                         const std::vector<double>& rates, const PruneOptions& prune_opts = {},
                                         const EigenOptions& opts = {}) {
  for (std::size_t i = 1; i < rates.size(); ++i)
    if (!(rates[i] > rates[i - 1])) throw std::invalid_argument("bound sequence: rates must be strictly ascending");
  BoundSequenceResult out;
  out.rates = rates;
  std::vector<double> norms;
  for (double rate : rates) norms.push_back(prune_delta_norm(orig, magnitude_prune(orig, rate, prune_opts).pruned));
  for (int g = 0; g < ds.num_groups; ++g) {
    if (!ds.has_group(g)) continue;
    BoundSequenceGroup cg;
    cg.group = g;
    cg.grad_norm = group_grad_norm(spec, orig, ds, g);
    cg.max_eig = group_hessian_max_eig(spec, orig, ds, g, opts).value;
    cg.negative_curvature = cg.max_eig < 0.0;
    cg.delta_norms = norms;
    for (double d : norms) cg.bounds.push_back(cg.grad_norm * d + 0.5 * cg.max_eig * d * d);
    for (std::size_t i = 1; i < cg.bounds.size(); ++i)
      if (cg.bounds[i] < cg.bounds[i - 1]) cg.monotone = false;
    if (cg.negative_curvature) out.flagged = true;
    else if (!cg.monotone) out.holds = false;
    out.groups.push_back(std::move(cg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary term and per-sample bounds

/// f(x)(1 - f(x)) for a binary model, in [0, 1/4].
inline double boundary_term(const ModelSpec& spec, const ParamVector& params, std::span<const double> x) {
  if (!spec.is_binary()) throw std::invalid_argument("boundary term: requires a sigmoid-binary model");
  const double f = predict_soft(spec, params, x)[0];
  return f * (1.0 - f);
}

inline double mean_boundary_term(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group) {
  require_group(ds, group);
  const auto idx = ds.group_indices(group);
  double s = 0.0;
  for (std::size_t i : idx) s += boundary_term(spec, params, ds.row(i));
  return s / static_cast<double>(idx.size());
}

/// Mean ||f(x) - y|| over the group (the soft error factor of the bounds).
inline double mean_soft_error(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group) {
  require_group(ds, group);
  const auto idx = ds.group_indices(group);
  double s = 0.0;
  for (std::size_t i : idx) {
    const auto f = predict_soft(spec, params, ds.row(i));
    const auto t = target_vector(spec, ds.labels[i]);
    double e = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c) e += (f[c] - t[c]) * (f[c] - t[c]);
    s += std::sqrt(e);
  }
  return s / static_cast<double>(idx.size());
}

/// Operator 2-norm of a (short, wide) Jacobian.
inline double spectral_norm(const Eigen::MatrixXd& J) {
  if (J.rows() == 1) return J.norm();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J * J.transpose(), Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

struct HessianBoundTerms {
  double rhs = 0.0;
  double boundary_part = 0.0;  // mean f(1-f) ||dz||^2
  double error_part = 0.0;     // mean lambda_max((f-y) d2z)
};

inline HessianBoundTerms hessian_bound_terms(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                                             int group, std::size_t guard = kDenseGuard) {
  if (!spec.is_binary() || spec.loss != LossKind::kBinaryCrossEntropy)
    throw std::invalid_argument("hessian bound: requires a sigmoid-binary model with binary cross-entropy");
  require_group(ds, group);
  check_dense_guard(params.size(), guard);
  const auto idx = ds.group_indices(group);
  HessianBoundTerms t;
  for (std::size_t i : idx) {
    const auto x = ds.row(i);
    const double f = predict_soft(spec, params, x)[0];
    const double y = static_cast<double>(ds.labels[i]);
    const double grad_sq = output_jacobian(spec, params, x, OutputSpace::kLogit).squaredNorm();
    t.boundary_part += f * (1.0 - f) * grad_sq;
    const double err = f - y;
    if (err != 0.0) {
      // lambda_max((f - y) d2z); for f < y this is |f - y| times -lambda_min(d2z).
      const Eigen::MatrixXd H = output_hessian(spec, params, x, 0, OutputSpace::kLogit, guard);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
      t.error_part += err > 0.0 ? err * es.eigenvalues().maxCoeff() : -err * -es.eigenvalues().minCoeff();
    }
  }
  const double n = static_cast<double>(idx.size());
  t.boundary_part /= n;
  t.error_part /= n;
  t.rhs = t.boundary_part + t.error_part;
  return t;
}

/// Upper bound on lambda_max(H_a) for binary cross-entropy models.
inline double hessian_bound_rhs(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group,
                                std::size_t guard = kDenseGuard) {
  return hessian_bound_terms(spec, params, ds, group, guard).rhs;
}

/// Upper bound on ||g_a||: mean c ||f - y|| ||dz||, c = 2 for MSE, 1 for the
/// cross-entropies.
inline double grad_norm_bound_rhs(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group) {
  require_group(ds, group);
  const double factor = spec.loss == LossKind::kMse ? 2.0 : 1.0;
  const auto idx = ds.group_indices(group);
  double s = 0.0;
  for (std::size_t i : idx) {
    const auto x = ds.row(i);
    const auto f = predict_soft(spec, params, x);
    const auto t = target_vector(spec, ds.labels[i]);
    double e = 0.0;
    for (std::size_t c = 0; c < f.size(); ++c) e += (f[c] - t[c]) * (f[c] - t[c]);
    if (e == 0.0) continue;
    s += std::sqrt(e) * spectral_norm(output_jacobian(spec, params, x, OutputSpace::kLogit));
  }
  return factor * s / static_cast<double>(idx.size());
}

// ---------------------------------------------------------------------------
// Full audit

struct GroupAuditReport {
  int group = 0;
  std::string name;
  std::size_t size = 0;
  // Audited (pruned) model.
  double loss = 0.0;
  double accuracy = 0.0;
  double grad_norm = 0.0;
  std::optional<EigenResult> hess_max_eig;
  std::optional<double> mean_boundary_term;  // binary models only
  double mean_soft_error = 0.0;
  // Original model.
  double original_loss = 0.0;
  double original_accuracy = 0.0;
  double excessive_loss = 0.0;
};

struct AuditOptions {
  EigenOptions eigen;
  bool compute_hessian = true;  // lambda_max(H_a) of the audited model
  bool compute_taylor = true;   // expansion bound (needs lambda_max at orig)
};

struct AuditReport {
  std::vector<GroupAuditReport> groups;
  FairnessViolation violation;
  std::vector<TaylorBoundReport> taylor;
  std::vector<std::string> errors;  // metric failures; the audit itself continues
  std::vector<std::string> flags;   // e.g. "eig_not_converged:g2", "negative_curvature:g1"
};

inline AuditReport audit(const ModelSpec& spec, const ParamVector& orig, const ParamVector& pruned, const Dataset& ds,
                         const AuditOptions& opts = {}) {
  AuditReport rep;
  auto guarded = [&](const std::string& what, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      rep.errors.push_back(what + ": " + e.what());
    }
  };
  for (int g = 0; g < ds.num_groups; ++g) {
    if (!ds.has_group(g)) continue;
    GroupAuditReport gr;
    gr.group = g;
    gr.name = ds.group_names.empty() ? std::to_string(g) : ds.group_names[static_cast<std::size_t>(g)];
    gr.size = ds.group_indices(g).size();
    const std::string tag = ":g" + std::to_string(g);
    guarded("loss" + tag, [&] {
      gr.loss = group_risk(spec, pruned, ds, g);
      gr.original_loss = group_risk(spec, orig, ds, g);
      gr.excessive_loss = gr.loss - gr.original_loss;
    });
    guarded("accuracy" + tag, [&] {
      gr.accuracy = group_accuracy(spec, pruned, ds, g);
      gr.original_accuracy = group_accuracy(spec, orig, ds, g);
    });
    guarded("grad_norm" + tag, [&] { gr.grad_norm = group_grad_norm(spec, pruned, ds, g); });
    guarded("soft_error" + tag, [&] { gr.mean_soft_error = mean_soft_error(spec, pruned, ds, g); });
    if (spec.is_binary())
      guarded("boundary" + tag, [&] { gr.mean_boundary_term = mean_boundary_term(spec, pruned, ds, g); });
    if (opts.compute_hessian)
      guarded("hess_max_eig" + tag, [&] {
        gr.hess_max_eig = group_hessian_max_eig(spec, pruned, ds, g, opts.eigen);
        if (!gr.hess_max_eig->converged) rep.flags.push_back("eig_not_converged" + tag);
      });
    if (opts.compute_taylor)
      guarded("taylor" + tag, [&] {
        auto t = taylor_bound(spec, orig, pruned, ds, g, opts.eigen);
        if (!t.eig_converged) rep.flags.push_back("taylor_eig_not_converged" + tag);
        if (t.negative_curvature) rep.flags.push_back("negative_curvature" + tag);
        rep.taylor.push_back(t);
      });
    rep.groups.push_back(std::move(gr));
  }
  guarded("fairness_violation", [&] { rep.violation = fairness_violation(spec, orig, pruned, ds); });
  return rep;
}

}  // namespace fairprune
