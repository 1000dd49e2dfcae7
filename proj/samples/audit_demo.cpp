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


// Trains a small network on an imbalanced three-group dataset, prunes it at a
// few rates and prints the per-group audit.

#include <cstdio>

#include "fairprune/fairprune.hpp"

namespace fp = fairprune;

int main() {
  fp::SynthSpec s;
  s.group_proportions = {0.6, 0.3, 0.1};
  s.separation = {4.0};
  s.n_total = 1500;
  s.dims = 4;
  s.n_classes = 3;
  s.label_mode = fp::LabelMode::kGroupIsLabel;
  s.seed = 3;
  const auto sp = fp::split(fp::synth_gaussian_groups(s), 0.8, 0);

  fp::ModelSpec spec;
  spec.layer_sizes = {4, 32, 3};
  fp::TrainConfig cfg;
  cfg.epochs = 30;
  const auto orig = fp::train(spec, fp::init_model(spec, 0), sp.train, cfg).params;

  std::printf("%5s %5s %6s %8s %8s %9s %9s %9s\n", "rate", "group", "size", "acc", "dacc", "grad", "lambda",
              "excess");
  for (double rate : {0.0, 0.5, 0.8, 0.9}) {
    const auto pruned = fp::magnitude_prune(orig, rate).pruned;
    fp::AuditOptions opts;
    opts.compute_taylor = false;
    const auto rep = fp::audit(spec, orig, pruned, sp.test, opts);
    for (const auto& g : rep.groups)
      std::printf("%5.2f %5d %6zu %8.3f %8.3f %9.4f %9.4f %9.4f\n", rate, g.group, g.size, g.accuracy,
                  g.accuracy - g.original_accuracy, g.grad_norm, g.hess_max_eig ? g.hess_max_eig->value : 0.0,
                  g.excessive_loss);
    std::printf("      accuracy-based violation %.3f, loss-based %.4f\n", rep.violation.accuracy_based,
                rep.violation.loss_based);
  }
  return 0;
}
