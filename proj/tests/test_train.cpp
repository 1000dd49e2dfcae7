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

#include "fairprune/diff.hpp"
#include "fairprune/train.hpp"
#include "test_util.hpp"

namespace fairprune {
namespace {

using testing::make_spec;
using testing::random_dataset;
using testing::random_params;

// Overlapping classes so the logistic minimiser is finite.
Dataset logistic_data(std::uint64_t seed, std::size_t n = 200) {
  SynthSpec s;
  s.group_proportions = {0.5, 0.5};
  s.separation = {1.5};
  s.noise = {1.0};
  s.n_total = n;
  s.dims = 2;
  s.seed = seed;
  return synth_gaussian_groups(s);
}

TEST(Train, ZeroLearningRateKeepsParams) {
  const auto spec = make_spec({2, 4, 2});
  const auto ds = logistic_data(1, 50);
  const auto p = init_model(spec, 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  EXPECT_EQ(train(spec, p, ds, cfg).params, p);
}

TEST(Train, ConvexLogisticReachesStationarity) {
  const auto spec = testing::binary_spec({2, 1});
  const auto ds = logistic_data(2);
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.weight_decay = 0.0;
  cfg.epochs = 200;
  cfg.batch_size = ds.size();
  const auto r = train(spec, init_model(spec, 0), ds, cfg);
  EXPECT_LT(gradient(spec, r.params, ds).norm(), 1e-4);
}

TEST(Train, FullBatchQuadraticLossNonIncreasing) {
  const auto spec = make_spec({3, 1}, Activation::kTanh, OutputKind::kLinear, LossKind::kMse);
  const auto ds = random_dataset(60, 3, 2, 4, 9);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 100;
  cfg.batch_size = ds.size();
  const auto r = train(spec, random_params(spec, 1), ds, cfg);
  for (std::size_t e = 1; e < r.epoch_losses.size(); ++e) EXPECT_LE(r.epoch_losses[e], r.epoch_losses[e - 1]);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(Train, BitReproducible) {
  const auto spec = make_spec({2, 6, 2}, Activation::kRelu);
  const auto ds = logistic_data(4, 120);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 77;
  const auto a = train(spec, init_model(spec, 1), ds, cfg);
  const auto b = train(spec, init_model(spec, 1), ds, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  cfg.seed = 78;
  EXPECT_NE(train(spec, init_model(spec, 1), ds, cfg).params, a.params);
}

TEST(Train, MomentumAndWeightDecayUpdateRule) {
  const auto spec = make_spec({2, 3, 2});
  const auto ds = logistic_data(5, 30);
  const auto p0 = random_params(spec, 2);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  cfg.epochs = 1;
  cfg.batch_size = ds.size();
  SgdTrainer trainer(spec, p0, ds, cfg);
  trainer.run_epoch();
  trainer.run_epoch();
  // v1 = g0 + wd p0, p1 = p0 - lr v1; v2 = mu v1 + g1 + wd p1, p2 = p1 - lr v2.
  const auto g0 = gradient(spec, p0, ds).values;
  ParamVector p1 = p0;
  std::vector<double> v(p0.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = g0[i] + cfg.weight_decay * p0.values[i];
    p1.values[i] -= cfg.learning_rate * v[i];
  }
  const auto g1 = gradient(spec, p1, ds).values;
  ParamVector p2 = p1;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = cfg.momentum * v[i] + g1[i] + cfg.weight_decay * p1.values[i];
    p2.values[i] -= cfg.learning_rate * v[i];
  }
  EXPECT_LT(testing::max_abs_diff(trainer.params().values, p2.values), 1e-13);
}

TEST(Train, DivergenceCarriesLastFiniteState) {
  const auto spec = make_spec({3, 1}, Activation::kTanh, OutputKind::kLinear, LossKind::kMse);
  auto ds = random_dataset(20, 3, 1, 4, 1);
  for (double& x : ds.features) x *= 100.0;
  TrainConfig cfg;
  cfg.learning_rate = 10.0;
  cfg.epochs = 200;
  cfg.batch_size = 20;
  try {
    train(spec, random_params(spec, 1), ds, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    for (double v : e.last_finite().values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(e.epoch(), 0);
  }
}

TEST(Train, MaskedCoordinatesStayZeroEveryStep) {
  const auto spec = make_spec({2, 5, 2});
  const auto ds = logistic_data(6, 64);
  const auto p0 = random_params(spec, 3);
  std::vector<bool> keep(p0.size(), true);
  for (std::size_t i = 0; i < keep.size(); i += 3) keep[i] = false;
  TrainConfig cfg;
  cfg.batch_size = 8;
  SgdTrainer trainer(spec, p0, ds, cfg, keep);
  for (int e = 0; e < 5; ++e) {
    trainer.run_epoch();
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (!keep[i]) { ASSERT_EQ(trainer.params().values[i], 0.0); }
  }
  EXPECT_THROW(SgdTrainer(spec, p0, ds, cfg, std::vector<bool>(3, true)), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.weight_decay = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace fairprune
