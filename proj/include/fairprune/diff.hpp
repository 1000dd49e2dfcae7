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

// First- and second-order derivatives of the empirical risk and of the model
// outputs with respect to the flat parameter vector.
//
// Gradients are reverse mode. Hessian-vector products run the reverse pass
// on dual numbers (forward-over-reverse), so they are exact up to rounding.
// ReLU is treated as having zero second derivative; results on ReLU nets hold
// almost everywhere.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fairprune/data.hpp"
#include "fairprune/dual.hpp"
#include "fairprune/model.hpp"

namespace fairprune {

/// Which samples a risk term covers: the whole dataset or one group.
struct Scope {
  std::optional<int> group;

  static Scope full() { return {}; }
  static Scope of_group(int g) { return {g}; }
  bool is_full() const { return !group.has_value(); }
  std::string describe() const { return group ? "group " + std::to_string(*group) : "full"; }
};

inline std::vector<std::size_t> scope_indices(const Dataset& ds, const Scope& scope) {
  if (scope.is_full()) return all_indices(ds);
  auto idx = ds.group_indices(*scope.group);
  if (idx.empty()) throw std::invalid_argument("scope: group " + std::to_string(*scope.group) + " not present");
  return idx;
}

/// FNV-1a over the raw bytes of a double sequence.
inline std::uint64_t checksum(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct GradVector {
  std::vector<double> values;
  Scope scope;
  std::uint64_t params_checksum = 0;

  double norm() const { return norm2(values); }
};

/// Exact gradient of the scoped empirical risk.
inline GradVector gradient(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                           const Scope& scope = Scope::full()) {
  const auto idx = scope_indices(ds, scope);
  GradVector g{std::vector<double>(params.size(), 0.0), scope, checksum(params.values)};
  const double w = 1.0 / static_cast<double>(idx.size());
  ForwardTrace<double> trace;
  for (std::size_t i : idx) {
    forward<double>(spec, params.layout, params.values, ds.row(i), trace);
    backward<double>(spec, params.layout, params.values, trace, loss_logit_gradient(spec, trace, ds.labels[i]), w,
                     g.values);
  }
  return g;
}

/// v -> H v for the Hessian of the scoped empirical risk at fixed params.
///
/// Holds a copy of the parameters and a pointer to the dataset; the dataset
/// must outlive the operator. Stateless between calls.
class HvpOperator {
 public:
  HvpOperator(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, Scope scope = Scope::full())
      : spec_(spec), params_(params), ds_(&ds), scope_(scope), indices_(scope_indices(ds, scope)) {}

  std::size_t dim() const { return params_.size(); }
  const Scope& scope() const { return scope_; }

  void apply(std::span<const double> v, std::span<double> out) const {
    if (v.size() != dim() || out.size() != dim())
      throw std::invalid_argument("hvp: vector length " + std::to_string(v.size()) + " != parameter count " +
                                  std::to_string(dim()));
    std::vector<Dual> p(dim());
    for (std::size_t i = 0; i < dim(); ++i) p[i] = Dual(params_.values[i], v[i]);
    std::vector<Dual> g(dim());
    const Dual w(1.0 / static_cast<double>(indices_.size()));
    ForwardTrace<Dual> trace;
    for (std::size_t i : indices_) {
      forward<Dual>(spec_, params_.layout, p, ds_->row(i), trace);
      backward<Dual>(spec_, params_.layout, p, trace, loss_logit_gradient(spec_, trace, ds_->labels[i]), w, g);
    }
    for (std::size_t i = 0; i < dim(); ++i) out[i] = g[i].d;
  }

  std::vector<double> apply(std::span<const double> v) const {
    std::vector<double> out(dim());
    apply(v, out);
    return out;
  }

 private:
  ModelSpec spec_;
  ParamVector params_;
  const Dataset* ds_;
  Scope scope_;
  std::vector<std::size_t> indices_;
};

inline std::vector<double> hvp(const HvpOperator& op, std::span<const double> v) { return op.apply(v); }

/// Size guard for dense second-order oracles.
inline constexpr std::size_t kDenseGuard = 2000;

inline void check_dense_guard(std::size_t k, std::size_t guard) {
  if (k > guard)
    throw std::length_error("dense second-order path: k = " + std::to_string(k) + " exceeds guard " +
                            std::to_string(guard));
}

struct DenseHessian {
  Eigen::MatrixXd matrix;  // symmetrised
  double asymmetry = 0.0;  // max |H - H^T| before symmetrisation
};

/// Assembles any symmetric operator column by column.
template <class Op>
DenseHessian assemble_dense(const Op& op, std::size_t k) {
  Eigen::MatrixXd H(k, k);
  std::vector<double> e(k, 0.0), col(k);
  for (std::size_t j = 0; j < k; ++j) {
    e[j] = 1.0;
    op(std::span<const double>(e), std::span<double>(col));
    e[j] = 0.0;
    for (std::size_t i = 0; i < k; ++i) H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  DenseHessian out;
  out.asymmetry = k ? (H - H.transpose()).cwiseAbs().maxCoeff() : 0.0;
  out.matrix = 0.5 * (H + H.transpose());
  return out;
}

inline DenseHessian dense_hessian(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                                  const Scope& scope = Scope::full(), std::size_t guard = kDenseGuard) {
  check_dense_guard(params.size(), guard);
  HvpOperator op(spec, params, ds, scope);
  return assemble_dense([&](std::span<const double> v, std::span<double> out) { op.apply(v, out); },
                        params.size());
}

/// Differentiate the soft outputs f(x) or the pre-activation logits z(x).
/// For linear outputs the two coincide.
enum class OutputSpace { kSoft, kLogit };

template <class T>
std::vector<T> output_cotangent(const ModelSpec& spec, const ForwardTrace<T>& trace, std::size_t cls,
                                OutputSpace space) {
  std::vector<T> seed(spec.output_dim(), T(0.0));
  seed[cls] = T(1.0);
  if (space == OutputSpace::kLogit) return seed;
  return output_to_logit_cotangent<T>(spec, trace, seed);
}

/// Jacobian of the outputs, `C x k`.
inline Eigen::MatrixXd output_jacobian(const ModelSpec& spec, const ParamVector& params, std::span<const double> x,
                                       OutputSpace space = OutputSpace::kSoft) {
  if (x.size() != spec.input_dim()) throw std::invalid_argument("jacobian: input dimension mismatch");
  const std::size_t C = spec.output_dim();
  const std::size_t k = params.size();
  ForwardTrace<double> trace;
  forward<double>(spec, params.layout, params.values, x, trace);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(k));
  std::vector<double> row(k);
  for (std::size_t c = 0; c < C; ++c) {
    std::fill(row.begin(), row.end(), 0.0);
    backward<double>(spec, params.layout, params.values, trace, output_cotangent(spec, trace, c, space), 1.0, row);
    for (std::size_t j = 0; j < k; ++j) J(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) = row[j];
  }
  return J;
}

/// Hessian of output `cls` with respect to the parameters, `k x k`.
inline Eigen::MatrixXd output_hessian(const ModelSpec& spec, const ParamVector& params, std::span<const double> x,
                                      std::size_t cls, OutputSpace space = OutputSpace::kSoft,
                                      std::size_t guard = kDenseGuard) {
  if (x.size() != spec.input_dim()) throw std::invalid_argument("output hessian: input dimension mismatch");
  if (cls >= spec.output_dim()) throw std::invalid_argument("output hessian: class out of range");
  const std::size_t k = params.size();
  check_dense_guard(k, guard);
  std::vector<Dual> p(k);
  for (std::size_t i = 0; i < k; ++i) p[i] = Dual(params.values[i]);
  ForwardTrace<Dual> trace;
  std::vector<Dual> g(k);
  auto column = [&](std::span<const double> v, std::span<double> out) {
    for (std::size_t i = 0; i < k; ++i) p[i].d = v[i];
    std::fill(g.begin(), g.end(), Dual(0.0));
    forward<Dual>(spec, params.layout, p, x, trace);
    backward<Dual>(spec, params.layout, p, trace, output_cotangent(spec, trace, cls, space), Dual(1.0), g);
    for (std::size_t i = 0; i < k; ++i) out[i] = g[i].d;
  };
  return assemble_dense(column, k).matrix;
}

/// Central finite differences. Test oracles only; production paths never use
/// these.
namespace fd {

inline std::vector<double> gradient(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                                    const Scope& scope = Scope::full(), double h = 1e-5) {
  const auto idx = scope_indices(ds, scope);
  auto risk = [&](const ParamVector& p) {
    return evaluate_indices(spec, p, ds, idx).loss_sum / static_cast<double>(idx.size());
  };
  std::vector<double> g(params.size());
  ParamVector p = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double x0 = p.values[i];
    p.values[i] = x0 + h;
    const double up = risk(p);
    p.values[i] = x0 - h;
    const double down = risk(p);
    p.values[i] = x0;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// (grad(theta + h v) - grad(theta - h v)) / 2h.
inline std::vector<double> hvp(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                               const Scope& scope, std::span<const double> v, double h = 1e-4) {
  ParamVector up = params, down = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    up.values[i] += h * v[i];
    down.values[i] -= h * v[i];
  }
  const auto gu = fairprune::gradient(spec, up, ds, scope).values;
  const auto gd = fairprune::gradient(spec, down, ds, scope).values;
  std::vector<double> out(params.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (gu[i] - gd[i]) / (2.0 * h);
  return out;
}

}  // namespace fd

}  // namespace fairprune
