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


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fairprune/audit.hpp"
#include "fairprune/train.hpp"
#include "test_util.hpp"

namespace fairprune {
namespace {

using testing::binary_spec;
using testing::make_spec;
using testing::random_dataset;
using testing::random_params;
using testing::scalar_dataset;

ModelSpec linear_1d() {
  return make_spec({1, 1}, Activation::kTanh, OutputKind::kLinear, LossKind::kMse, false);
}

double dense_max_eig_of(const ModelSpec& spec, const ParamVector& p, const Dataset& ds) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hessian(spec, p, ds, Scope::of_group(0)).matrix,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

ParamVector scalar_param(const ModelSpec& spec, double v) {
  auto p = zero_params(spec);
  p.values = {v};
  return p;
}

// Full-batch heavy-ball descent until ||grad J|| < tol.
ParamVector train_to_stationarity(const ModelSpec& spec, const Dataset& ds, double tol) {
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.0;
  cfg.batch_size = ds.size();
  SgdTrainer trainer(spec, init_model(spec, 1), ds, cfg);
  for (int e = 0; e < 20000 && gradient(spec, trainer.params(), ds).norm() >= tol; ++e) trainer.run_epoch();
  return trainer.params();
}

TEST(ExcessiveLoss, IdentityIsZero) {
  const auto spec = make_spec({3, 4, 3});
  const auto ds = random_dataset(30, 3, 3, 3, 1);
  const auto p = random_params(spec, 2);
  for (int g = 0; g < 3; ++g) EXPECT_EQ(excessive_loss(spec, p, p, ds, g), 0.0);
}

TEST(ExcessiveLoss, OneDimensionalClosedForm) {
  const auto spec = linear_1d();
  const auto ds = scalar_dataset({2.0}, {2}, 3);
  EXPECT_DOUBLE_EQ(excessive_loss(spec, scalar_param(spec, 1.0), scalar_param(spec, 0.0), ds, 0), 4.0);
  EXPECT_THROW(excessive_loss(spec, scalar_param(spec, 1.0), scalar_param(spec, 0.0), ds, 1), std::invalid_argument);
}

TEST(ExcessiveLoss, TwoGroupLogisticBruteForce) {
  const auto spec = binary_spec({1, 1});
  auto orig = zero_params(spec), pruned = zero_params(spec);
  orig.values = {1.1, 0.3};
  pruned.values = {1.1, 0.0};
  const std::vector<double> xs{0.4, -1.2, 2.2, 0.9, -0.1, 1.7};
  const std::vector<int> ys{1, 0, 1, 0, 0, 1};
  const std::vector<int> gs{0, 1, 0, 1, 1, 0};
  const auto ds = scalar_dataset(xs, ys, 2, gs);
  auto bce = [](double z, int y) {
    const double f = 1.0 / (1.0 + std::exp(-z));
    return -(y * std::log(f) + (1 - y) * std::log(1 - f));
  };
  for (int g = 0; g < 2; ++g) {
    double r = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (gs[i] != g) continue;
      r += bce(1.1 * xs[i], ys[i]) - bce(1.1 * xs[i] + 0.3, ys[i]);
      ++n;
    }
    EXPECT_NEAR(excessive_loss(spec, orig, pruned, ds, g), r / n, 1e-14);
  }
}

TEST(FairnessViolation, SingleGroupIsZero) {
  const auto spec = make_spec({2, 3, 2});
  const auto ds = random_dataset(20, 2, 1, 2, 3);
  const auto v = fairness_violation(spec, random_params(spec, 1), random_params(spec, 2), ds);
  EXPECT_EQ(v.loss_based, 0.0);
  EXPECT_EQ(v.accuracy_based, 0.0);
}

TEST(FairnessViolation, RateZeroIsZero) {
  const auto spec = make_spec({2, 3, 2});
  const auto ds = random_dataset(20, 2, 3, 2, 3);
  const auto p = random_params(spec, 1);
  EXPECT_EQ(fairness_violation(spec, p, magnitude_prune(p, 0.0).pruned, ds).loss_based, 0.0);
}

TEST(FairnessViolation, AllPairsOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = make_spec({3, 4, 3});
    const auto ds = random_dataset(45, 3, 3, 3, seed);
    const auto orig = random_params(spec, seed);
    const auto pruned = magnitude_prune(orig, 0.5).pruned;
    double best = 0.0, best_acc = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        best = std::max(best, std::abs(excessive_loss(spec, orig, pruned, ds, a) -
                                       excessive_loss(spec, orig, pruned, ds, b)));
        best_acc = std::max(best_acc, std::abs(group_accuracy(spec, pruned, ds, a) -
                                               group_accuracy(spec, pruned, ds, b)));
      }
    const auto v = fairness_violation(spec, orig, pruned, ds);
    EXPECT_NEAR(v.loss_based, best, 1e-15);
    EXPECT_NEAR(v.accuracy_based, best_acc, 1e-15);
    EXPECT_GE(v.loss_based, 0.0);
  }
}

TEST(FairnessViolation, InvariantUnderGroupRelabeling) {
  const auto spec = make_spec({3, 4, 2});
  const auto ds = random_dataset(40, 3, 4, 2, 8);
  const auto orig = random_params(spec, 3);
  const auto pruned = magnitude_prune(orig, 0.4).pruned;
  auto relabeled = ds;
  const int perm[4] = {2, 0, 3, 1};
  for (int& g : relabeled.groups) g = perm[g];
  const auto a = fairness_violation(spec, orig, pruned, ds);
  const auto b = fairness_violation(spec, orig, pruned, relabeled);
  EXPECT_EQ(a.loss_based, b.loss_based);
  EXPECT_EQ(a.accuracy_based, b.accuracy_based);
  EXPECT_EQ(perm[a.loss_argmax], b.loss_argmax);
}

TEST(GroupGradNorm, MatchesFiniteDifferenceNorm) {
  const auto spec = make_spec({3, 4, 2}, Activation::kSigmoid);
  const auto ds = random_dataset(24, 3, 2, 2, 5);
  const auto p = random_params(spec, 6);
  for (int g = 0; g < 2; ++g)
    EXPECT_NEAR(group_grad_norm(spec, p, ds, g), norm2(fd::gradient(spec, p, ds, Scope::of_group(g))), 1e-7);
  EXPECT_THROW(group_grad_norm(spec, p, ds, 2), std::invalid_argument);
}

TEST(GroupGradNorm, StationarySingleGroup) {
  const auto spec = binary_spec({2, 1});
  SynthSpec s;
  s.group_proportions = {1.0};
  s.separation = {1.0};
  s.n_total = 100;
  const auto ds = synth_gaussian_groups(s);
  const auto p = train_to_stationarity(spec, ds, 1e-9);
  EXPECT_LT(group_grad_norm(spec, p, ds, 0), 1e-9);
}

TEST(GroupGradNorm, TwoGroupStationaryRatio) {
  // |D_a| g_a + |D_b| g_b = 0 at a stationary point.
  const auto spec = binary_spec({2, 1});
  SynthSpec s;
  s.group_proportions = {0.8, 0.2};
  s.separation = {1.0, 3.0};
  s.n_total = 100;
  s.seed = 4;
  const auto ds = synth_gaussian_groups(s);
  const auto p = train_to_stationarity(spec, ds, 1e-5);
  ASSERT_LT(gradient(spec, p, ds).norm(), 1e-5);
  const double ratio = group_grad_norm(spec, p, ds, 0) / group_grad_norm(spec, p, ds, 1);
  EXPECT_NEAR(ratio, 0.25, 0.05 * 0.25);
}

TEST(GroupHessianMaxEig, MatchesDense) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto spec = make_spec({3, 5, 2});
    const auto ds = random_dataset(20, 3, 2, 2, seed);
    const auto p = random_params(spec, seed + 50, 1.5);
    const auto H = dense_hessian(spec, p, ds, Scope::of_group(1)).matrix;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const double ref = es.eigenvalues().maxCoeff();
    const auto r = group_hessian_max_eig(spec, p, ds, 1);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(std::abs(r.value - ref), 1e-6 * std::abs(ref));
  }
}

TEST(GroupHessianMaxEig, Errors) {
  const auto spec = make_spec({2, 2});
  const auto ds = random_dataset(4, 2, 1, 2, 1);
  EigenOptions bad;
  bad.tol = 0.0;
  EXPECT_THROW(group_hessian_max_eig(spec, zero_params(spec), ds, 0, bad), std::invalid_argument);
  EXPECT_THROW(group_hessian_max_eig(spec, zero_params(spec), ds, 1), std::invalid_argument);
}

TEST(TaylorBound, OneDimensionalClosedForm) {
  const auto spec = linear_1d();
  const auto ds = scalar_dataset({2.0}, {2}, 3);
  const auto t = taylor_bound(spec, scalar_param(spec, 1.0), scalar_param(spec, 0.0), ds, 0);
  EXPECT_NEAR(t.grad_norm, 0.0, 1e-15);
  EXPECT_NEAR(t.max_eig, 8.0, 1e-12);
  EXPECT_NEAR(t.bound_total, 4.0, 1e-12);
  EXPECT_NEAR(t.actual, 4.0, 1e-15);
  EXPECT_NEAR(t.residual, 0.0, 1e-12);
}

TEST(TaylorBound, QuadraticExactness) {
  std::mt19937_64 rng(3);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t d = 2 + rng() % 6;
    const auto spec = make_spec({d, 3}, Activation::kTanh, OutputKind::kLinear, LossKind::kMse);
    const auto ds = random_dataset(30, d, 3, 3, seed);
    const auto orig = random_params(spec, seed);
    const auto pruned = magnitude_prune(orig, 0.5).pruned;
    for (int g = 0; g < 3; ++g) {
      const auto t = taylor_bound(spec, orig, pruned, ds, g);
      EXPECT_LT(std::abs(t.residual), 1e-9);
      EXPECT_GE(t.bound_total, t.actual - 1e-9);
    }
  }
}

TEST(TaylorBound, DominatesExactExpansion) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = make_spec({3, 4, 2});
    const auto ds = random_dataset(20, 3, 2, 2, seed);
    const auto orig = random_params(spec, seed);
    const auto t = taylor_bound(spec, orig, magnitude_prune(orig, 0.3).pruned, ds, 0);
    EXPECT_GE(t.bound_total, t.linear_term + t.quadratic_term - 1e-9 * (1 + std::abs(t.bound_total)));
    EXPECT_EQ(t.negative_curvature, t.max_eig < 0.0);
  }
}

TEST(TaylorBound, CubicResidualScaling) {
  const auto spec = make_spec({3, 4, 2});
  const auto ds = random_dataset(20, 3, 2, 2, 4);
  const auto orig = random_params(spec, 4);
  const auto pruned = magnitude_prune(orig, 0.5).pruned;
  std::vector<double> lt, lr;
  for (double s : {0.2, 0.1, 0.05, 0.025}) {
    ParamVector p = orig;
    for (std::size_t i = 0; i < p.size(); ++i) p.values[i] += s * (pruned.values[i] - orig.values[i]);
    lt.push_back(std::log(s));
    lr.push_back(std::log(std::abs(taylor_bound(spec, orig, p, ds, 0).residual)));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    mx += lt[i] / 4;
    my += lr[i] / 4;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxy += (lt[i] - mx) * (lr[i] - my);
    sxx += (lt[i] - mx) * (lt[i] - mx);
  }
  EXPECT_GE(sxy / sxx, 2.5);
}

TEST(BoundSequence, FirstBoundZeroAndMonotone) {
  const auto spec = make_spec({3, 4, 3});
  const auto ds = random_dataset(30, 3, 3, 3, 2);
  const auto p = random_params(spec, 2);
  const auto r = corollary1_check(spec, p, ds, {0.0, 0.2, 0.5, 0.8});
  for (const auto& g : r.groups) {
    EXPECT_EQ(g.bounds.front(), 0.0);
    for (std::size_t i = 1; i < g.delta_norms.size(); ++i) EXPECT_GE(g.delta_norms[i], g.delta_norms[i - 1]);
    if (!g.negative_curvature) { EXPECT_TRUE(g.monotone); }
  }
  EXPECT_EQ(r.groups.size(), 3u);
  EXPECT_THROW(corollary1_check(spec, p, ds, {0.5, 0.2}), std::invalid_argument);
}

TEST(BoundSequence, FlagsFollowCurvatureSign) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = make_spec({3, 6, 2});
    const auto ds = random_dataset(12, 3, 2, 2, seed);
    const auto r = corollary1_check(spec, random_params(spec, seed, 4.0), ds, {0.1, 0.5, 0.9});
    bool any_negative = false;
    for (const auto& g : r.groups) {
      any_negative = any_negative || g.negative_curvature;
      EXPECT_EQ(g.negative_curvature, g.max_eig < 0.0);
      if (!g.negative_curvature) { EXPECT_TRUE(g.monotone); }
    }
    EXPECT_EQ(r.flagged, any_negative);
    EXPECT_TRUE(r.holds);
  }
}

TEST(BoundaryTerm, Extremes) {
  const auto spec = binary_spec({1, 1});
  auto p = zero_params(spec);
  EXPECT_DOUBLE_EQ(boundary_term(spec, p, std::vector<double>{3.0}), 0.25);
  p.values = {40.0, 0.0};
  EXPECT_LT(boundary_term(spec, p, std::vector<double>{1.0}), 1e-15);
  EXPECT_THROW(boundary_term(make_spec({1, 2}), zero_params(make_spec({1, 2})), std::vector<double>{1.0}),
               std::invalid_argument);
}

TEST(BoundaryTerm, MeanWithinRange) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto spec = binary_spec({3, 4, 1});
    const auto ds = random_dataset(25, 3, 2, 2, seed);
    const double b = mean_boundary_term(spec, random_params(spec, seed, 2.0), ds, 1);
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 0.25);
  }
}

TEST(HessianBound, SaturatedCorrectSampleContributesZero) {
  const auto spec = binary_spec({1, 1});
  auto p = zero_params(spec);
  p.values = {800.0, 0.0};
  const auto ds = scalar_dataset({1.0}, {1}, 2);
  const auto t = hessian_bound_terms(spec, p, ds, 0);
  EXPECT_EQ(t.rhs, 0.0);
}

TEST(HessianBound, OneParamLogisticClosedForm) {
  const auto spec = make_spec({1, 1}, Activation::kTanh, OutputKind::kSigmoidBinary, LossKind::kBinaryCrossEntropy,
                              false);
  const double theta = 0.6, x = 1.7;
  const auto ds = scalar_dataset({x}, {0}, 2);
  const double f = 1.0 / (1.0 + std::exp(-theta * x));
  const double rhs = hessian_bound_rhs(spec, scalar_param(spec, theta), ds, 0);
  EXPECT_NEAR(rhs, f * (1 - f) * x * x, 1e-15);
  EXPECT_NEAR(rhs, group_hessian_max_eig(spec, scalar_param(spec, theta), ds, 0).value, 1e-12);
}

TEST(HessianBound, DominatesMaxEigenvalue) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto spec = binary_spec({2, 3, 1});
    const auto ds = random_dataset(10, 2, 2, 2, seed);
    const auto p = random_params(spec, seed + 1000, 1.2);
    const auto H = dense_hessian(spec, p, ds, Scope::of_group(0)).matrix;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    EXPECT_GE(hessian_bound_rhs(spec, p, ds, 0) - es.eigenvalues().maxCoeff(), -1e-8) << "seed " << seed;
    const auto H1 = dense_hessian(spec, p, ds, Scope::of_group(1)).matrix;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(H1, Eigen::EigenvaluesOnly);
    EXPECT_GE(hessian_bound_rhs(spec, p, ds, 1) - es1.eigenvalues().maxCoeff(), -1e-8) << "seed " << seed;
  }
}

TEST(HessianBound, UnderPredictedSampleUsesNegatedCurvature) {
  // Single sample with y = 1 > f: the bound is tight and equals lambda_max of
  // f(1-f) dz dz^T - (1-f) d2z.
  const auto spec = binary_spec({2, 3, 1});
  auto ds = random_dataset(1, 2, 1, 2, 11);
  ds.labels = {1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_params(spec, seed, 1.5);
    const auto t = hessian_bound_terms(spec, p, ds, 0);
    const auto d2z = output_hessian(spec, p, ds.row(0), 0, OutputSpace::kLogit);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d2z, Eigen::EigenvaluesOnly);
    const double f = predict_soft(spec, p, ds.row(0))[0];
    EXPECT_NEAR(t.error_part, (1 - f) * -es.eigenvalues().minCoeff(), 1e-12);
    EXPECT_GE(t.rhs - dense_max_eig_of(spec, p, ds), -1e-8);
  }
}

TEST(HessianBound, RequiresBinaryModel) {
  const auto spec = make_spec({2, 2});
  EXPECT_THROW(hessian_bound_rhs(spec, zero_params(spec), random_dataset(4, 2, 1, 2, 1), 0), std::invalid_argument);
}

TEST(GradNormBound, HardCorrectPredictionsGiveZero) {
  const auto spec = binary_spec({1, 1});
  auto p = zero_params(spec);
  p.values = {800.0, 0.0};
  const auto ds = scalar_dataset({1.0, -1.0}, {1, 0}, 2);
  EXPECT_EQ(grad_norm_bound_rhs(spec, p, ds, 0), 0.0);
  EXPECT_EQ(group_grad_norm(spec, p, ds, 0), 0.0);
}

TEST(GradNormBound, DominatesGradientNorm) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (LossKind loss : {LossKind::kCrossEntropy, LossKind::kMse, LossKind::kBinaryCrossEntropy}) {
      ModelSpec spec;
      if (loss == LossKind::kCrossEntropy) spec = make_spec({3, 4, 3});
      else if (loss == LossKind::kMse) spec = make_spec({3, 4, 3}, Activation::kTanh, OutputKind::kLinear, loss);
      else spec = binary_spec({3, 4, 1});
      const auto ds = random_dataset(15, 3, 2, loss == LossKind::kBinaryCrossEntropy ? 2 : 3, seed);
      const auto p = random_params(spec, seed + 7);
      EXPECT_GE(grad_norm_bound_rhs(spec, p, ds, 1) - group_grad_norm(spec, p, ds, 1), -1e-8);
    }
  }
}

TEST(GradNormBound, SingleSampleTight) {
  const auto spec = binary_spec({2, 3, 1});
  const auto ds = random_dataset(1, 2, 1, 2, 3);
  const auto p = random_params(spec, 3);
  EXPECT_NEAR(grad_norm_bound_rhs(spec, p, ds, 0), group_grad_norm(spec, p, ds, 0), 1e-13);
  const auto mse = make_spec({2, 3, 1}, Activation::kTanh, OutputKind::kLinear, LossKind::kMse);
  EXPECT_NEAR(grad_norm_bound_rhs(mse, random_params(mse, 3), ds, 0), group_grad_norm(mse, random_params(mse, 3), ds, 0),
              1e-13);
}

TEST(Audit, RateZero) {
  const auto spec = make_spec({3, 4, 3});
  const auto ds = random_dataset(30, 3, 3, 3, 1);
  const auto p = random_params(spec, 1);
  const auto rep = audit(spec, p, magnitude_prune(p, 0.0).pruned, ds);
  ASSERT_EQ(rep.groups.size(), 3u);
  for (const auto& g : rep.groups) {
    EXPECT_EQ(g.excessive_loss, 0.0);
    EXPECT_FALSE(g.mean_boundary_term.has_value());
  }
  EXPECT_EQ(rep.violation.loss_based, 0.0);
  EXPECT_TRUE(rep.errors.empty());
}

TEST(Audit, MatchesIndependentMetrics) {
  const auto spec = binary_spec({3, 4, 1});
  const auto ds = random_dataset(30, 3, 2, 2, 2);
  const auto orig = random_params(spec, 2);
  const auto pruned = magnitude_prune(orig, 0.4).pruned;
  const auto rep = audit(spec, orig, pruned, ds);
  ASSERT_EQ(rep.groups.size(), 2u);
  ASSERT_EQ(rep.taylor.size(), 2u);
  for (const auto& g : rep.groups) {
    EXPECT_EQ(g.loss, group_risk(spec, pruned, ds, g.group));
    EXPECT_EQ(g.accuracy, group_accuracy(spec, pruned, ds, g.group));
    EXPECT_EQ(g.grad_norm, group_grad_norm(spec, pruned, ds, g.group));
    EXPECT_EQ(g.excessive_loss, excessive_loss(spec, orig, pruned, ds, g.group));
    EXPECT_EQ(g.hess_max_eig->value, group_hessian_max_eig(spec, pruned, ds, g.group).value);
    EXPECT_EQ(*g.mean_boundary_term, mean_boundary_term(spec, pruned, ds, g.group));
    EXPECT_EQ(g.size, ds.group_indices(g.group).size());
    EXPECT_EQ(rep.taylor[static_cast<std::size_t>(g.group)].bound_total,
              taylor_bound(spec, orig, pruned, ds, g.group).bound_total);
  }
  EXPECT_EQ(rep.violation.loss_based, fairness_violation(spec, orig, pruned, ds).loss_based);
}

TEST(Audit, MetricFailureDoesNotAbort) {
  const auto spec = make_spec({2, 3, 2});
  const auto ds = random_dataset(10, 2, 2, 2, 1);
  const auto p = random_params(spec, 1);
  AuditOptions opts;
  opts.eigen.tol = -1.0;
  const auto rep = audit(spec, p, p, ds, opts);
  EXPECT_EQ(rep.groups.size(), 2u);
  EXPECT_FALSE(rep.errors.empty());
  for (const auto& g : rep.groups) EXPECT_FALSE(g.hess_max_eig.has_value());
}

}  // namespace
}  // namespace fairprune
