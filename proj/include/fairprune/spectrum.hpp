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
#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fairprune {

/// Anything callable as `op(v, out)` computing out = A v for a symmetric A.
template <class Op>
concept SymmetricOperator = requires(const Op& op, std::span<const double> v, std::span<double> out) {
  op(v, out);
};

struct EigenOptions {
  double tol = 1e-12;
  int max_iters = 20000;
  int restarts = 3;
  std::uint64_t seed = 0x5eed;
};

struct EigenResult {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline constexpr double kResidualTol = 1e-3;

struct PowerRun {
  double rayleigh = 0.0;   // eigenvalue estimate of (A + shift I), shift removed
  double growth = 0.0;     // last ||(A + shift I) v|| for unit v
  int iterations = 0;
  bool converged = false;
};

template <SymmetricOperator Op>
PowerRun power_run(const Op& op, std::vector<double> v, double shift, double tol, int max_iters) {
  const std::size_t k = v.size();
  std::vector<double> w(k);
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double xi : x) s += xi * xi;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& xi : x) xi /= s;
    return s;
  };
  normalize(v);
  PowerRun run;
  double previous = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    op(std::span<const double>(v), std::span<double>(w));
    double rq = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      w[i] += shift * v[i];
      rq += v[i] * w[i];
    }
    run.iterations = it;
    run.rayleigh = rq - shift;
    run.growth = normalize(w);
    if (run.growth == 0.0) {  // v in the null space of A + shift I
      run.converged = true;
      break;
    }
    // ||A v - rq v|| for unit v; rejects stalls on mixtures of +/- pairs.
    const double residual = std::sqrt(std::max(0.0, run.growth * run.growth - rq * rq));
    const double scale = 1.0 + std::abs(rq - shift);
    if (it > 1 && std::abs(rq - previous) < tol * scale && residual <= kResidualTol * (1.0 + std::abs(rq))) {
      run.converged = true;
      break;
    }
    previous = rq;
    v.swap(w);
  }
  return run;
}

}  // namespace detail

/// Largest signed eigenvalue of a symmetric operator by shifted power
/// iteration.
///
/// Stage 1 runs plain power iteration and reads out the dominant-magnitude
/// eigenvalue through the Rayleigh quotient. If that value is negative (or
/// stage 1 did not settle), stage 2 iterates on A + (rho + 1) I, whose
/// dominant eigenvalue is the shifted maximum, and removes the shift. Each of
/// `restarts` seeded unit starts is run independently; the largest estimate
/// wins.
template <SymmetricOperator Op>
EigenResult max_eigenvalue(const Op& op, std::size_t k, const EigenOptions& opts = {}) {
  EigenResult best;
  bool have = false;
  if (k == 0) return {0.0, 0, true};
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    std::mt19937_64 rng(opts.seed + static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v0(k);
    for (double& x : v0) x = normal(rng);

    auto stage1 = detail::power_run(op, v0, 0.0, opts.tol, opts.max_iters);
    EigenResult res{stage1.rayleigh, stage1.iterations, stage1.converged};
    if (stage1.rayleigh < 0.0 || !stage1.converged) {
      const double shift = std::max(std::abs(stage1.rayleigh), stage1.growth) + 1.0;
      auto stage2 = detail::power_run(op, v0, shift, opts.tol, opts.max_iters);
      res = {stage2.rayleigh, stage1.iterations + stage2.iterations, stage2.converged};
    }
    if (!have || res.value > best.value) {
      const int total = best.iterations + res.iterations;
      best = res;
      best.iterations = total;
      have = true;
    } else {
      best.iterations += res.iterations;
    }
  }
  return best;
}

}  // namespace fairprune
