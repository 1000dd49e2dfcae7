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


// fairprune command line.
//
// Every verb accepts --config <file.json> (the sweep schema documented in
// README.md); flags given on the command line override the file.
//
// Exit codes: 0 success, 1 configuration or input error, 2 partial failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairprune/fairprune.hpp"

namespace fp = fairprune;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kPartialFailure = 2;

struct Overrides {
  std::string config_path;
  std::string data_csv;
  std::vector<std::size_t> hidden_layers;
  std::string activation;
  std::optional<int> epochs;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  std::optional<double> lagrangian_step;
  std::vector<double> rates;
  std::vector<std::string> regimes;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string normalization;
  bool no_hessian = false;
  bool no_taylor = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_path, "JSON config file");
  cmd->add_option("--data", o.data_csv, "CSV dataset (overrides the configured source)");
  cmd->add_option("--hidden-layers", o.hidden_layers, "hidden layer widths");
  cmd->add_option("--activation", o.activation, "relu | tanh | sigmoid");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--lr", o.learning_rate);
  cmd->add_option("--batch-size", o.batch_size);
  cmd->add_option("--lagrangian-step", o.lagrangian_step);
  cmd->add_option("--seeds", o.seeds);
  cmd->add_option("-o,--out", o.out, "output path");
}

fp::ExperimentConfig load_config(const Overrides& o) {
  fp::json j = fp::json::object();
  if (!o.config_path.empty()) {
    try {
      j = fp::read_json_file(o.config_path);
    } catch (const std::exception& e) {
      throw fp::ConfigError(e.what());
    }
  }
  if (!o.data_csv.empty()) {
    if (j.contains("data") && j["data"].is_object()) j["data"].erase("synthetic");
    j["data"]["csv"] = o.data_csv;
  }
  if (!j.contains("data")) j["data"]["synthetic"] = {{"group_proportions", {0.5, 0.5}}};
  if (!o.hidden_layers.empty()) j["model"]["hidden_layers"] = o.hidden_layers;
  if (!o.activation.empty()) j["model"]["hidden"] = o.activation;
  if (o.epochs) j["train"]["epochs"] = *o.epochs;
  if (o.learning_rate) j["train"]["learning_rate"] = *o.learning_rate;
  if (o.batch_size) j["train"]["batch_size"] = *o.batch_size;
  if (o.lagrangian_step) j["mitigation"]["lagrangian_step"] = *o.lagrangian_step;
  if (!o.rates.empty()) j["rates"] = o.rates;
  if (!o.regimes.empty()) j["regimes"] = o.regimes;
  if (!o.seeds.empty()) j["seeds"] = o.seeds;
  if (!o.normalization.empty()) j["normalization"] = o.normalization;
  if (o.no_hessian) j["audit"]["compute_hessian"] = false;
  if (o.no_taylor) j["audit"]["compute_taylor"] = false;
  auto cfg = fp::experiment_config_from_json(j);
  if (!o.out.empty()) cfg.output_dir = o.out;
  return cfg;
}

// Training data of the first configured seed.
fp::SeedData first_seed_data(const fp::ExperimentConfig& cfg) {
  return fp::prepare_seed_data(cfg, cfg.seeds.front());
}

void print(const fp::json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairprune: pruning fairness audits and mitigation"};
  app.require_subcommand(1);
  Overrides o;

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "draw a synthetic group dataset and write CSV + manifest");
  add_common(gen, o);

  // train
  auto* trn = app.add_subcommand("train", "train an unpruned network");
  add_common(trn, o);

  // prune
  auto* prn = app.add_subcommand("prune", "magnitude-prune a trained network");
  std::string model_stem;
  double rate = 0.5;
  bool exempt_biases = false;
  prn->add_option("-m,--model", model_stem, "model stem (.params/.json)")->required();
  prn->add_option("-r,--rate", rate, "fraction of parameters to zero")->check(CLI::Range(0.0, 1.0));
  prn->add_flag("--exempt-biases", exempt_biases);
  prn->add_option("-o,--out", o.out, "output stem")->required();

  // audit
  auto* aud = app.add_subcommand("audit", "per-group audit of a pruned network against the original");
  std::string pruned_stem;
  add_common(aud, o);
  aud->add_option("-m,--model", model_stem, "original model stem")->required();
  aud->add_option("-p,--pruned", pruned_stem, "pruned model stem")->required();
  aud->add_flag("--no-hessian", o.no_hessian);
  aud->add_flag("--no-taylor", o.no_taylor);

  // mitigate
  auto* mit = app.add_subcommand("mitigate", "fair training, optionally retraining a pruned network");
  std::string mask_stem;
  add_common(mit, o);
  mit->add_option("-m,--model", model_stem, "start from this model instead of a fresh init");
  mit->add_option("--mask", mask_stem, "keep this mask frozen while training");

  // sweep
  auto* swp = app.add_subcommand("sweep", "rate x regime x seed sweep");
  add_common(swp, o);
  swp->add_option("--rates", o.rates);
  swp->add_option("--regimes", o.regimes);
  swp->add_option("--normalization", o.normalization, "none | minmax_per_sweep");
  swp->add_flag("--no-hessian", o.no_hessian);
  swp->add_flag("--no-taylor", o.no_taylor);

  // ablate-upsample
  auto* ups = app.add_subcommand("ablate-upsample", "group upsampling ablation");
  int group = -1;
  std::vector<int> factors{1, 5, 10, 20};
  add_common(ups, o);
  ups->add_option("-g,--group", group, "group to upsample (default: smallest)");
  ups->add_option("--factors", factors);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (gen->parsed()) {
      auto cfg = load_config(o);
      if (!cfg.data.synthetic) throw fp::ConfigError("generate-data: config has no synthetic data spec");
      const auto ds = fp::synth_gaussian_groups(*cfg.data.synthetic);
      const std::string path = o.out.empty() ? "data.csv" : o.out;
      fp::save_csv(path, ds);
      fp::write_json_file(path + ".manifest.json", fp::manifest_json(ds));
      print(fp::manifest_json(ds));
      return kOk;
    }
    if (trn->parsed()) {
      auto cfg = load_config(o);
      auto data = first_seed_data(cfg);
      const auto spec = fp::build_model(cfg.model, data.train);
      const auto rc = fp::regime_config(cfg, cfg.seeds.front());
      auto result = fp::train(spec, fp::init_model(spec, rc.init_seed), data.train, rc.train);
      const std::string stem = o.out.empty() ? "model" : o.out;
      fp::save_model(stem, spec, result.params,
                     {{"train", fp::to_json(rc.train)}, {"epoch_losses", result.epoch_losses},
                      {"config", fp::to_json(cfg)}});
      print({{"model", stem},
             {"train_loss", fp::empirical_risk(spec, result.params, data.train)},
             {"eval_accuracy", fp::accuracy(spec, result.params, data.eval)}});
      return kOk;
    }
    if (prn->parsed()) {
      const auto m = fp::load_model(model_stem);
      fp::PruneOptions po;
      po.exempt_biases = exempt_biases;
      const auto pr = fp::magnitude_prune(m.params, rate, po);
      fp::save_model(o.out, m.spec, pr.pruned, {{"source", model_stem}, {"rate", rate}});
      fp::save_mask(o.out, pr.mask);
      print(fp::to_json(pr.mask));
      return kOk;
    }
    if (aud->parsed()) {
      auto cfg = load_config(o);
      const auto orig = fp::load_model(model_stem);
      const auto pruned = fp::load_model(pruned_stem);
      if (!(orig.spec.layer_sizes == pruned.spec.layer_sizes)) throw fp::ConfigError("audit: architectures differ");
      auto data = first_seed_data(cfg);
      orig.spec.validate_for(data.eval);
      const auto rep = fp::audit(orig.spec, orig.params, pruned.params, data.eval, cfg.audit);
      fp::json out = fp::to_json(rep);
      out["config"] = fp::to_json(cfg);
      if (!o.out.empty()) fp::write_json_file(o.out, out);
      print(out);
      return rep.errors.empty() ? kOk : kPartialFailure;
    }
    if (mit->parsed()) {
      auto cfg = load_config(o);
      auto data = first_seed_data(cfg);
      auto rc = fp::regime_config(cfg, cfg.seeds.front());
      fp::ModelSpec spec;
      fp::ParamVector start;
      if (!model_stem.empty()) {
        auto m = fp::load_model(model_stem);
        spec = m.spec;
        start = m.params;
      } else {
        spec = fp::build_model(cfg.model, data.train);
        start = fp::init_model(spec, rc.init_seed);
      }
      std::optional<std::vector<bool>> keep;
      if (!mask_stem.empty()) {
        const auto mask = fp::load_mask(mask_stem);
        keep = mask.keep;
        start = fp::apply_mask(start, mask);
        rc.train.epochs = cfg.mitigation.retrain_budget(cfg.train.epochs);
        rc.train.seed += 1;
      }
      auto result = fp::fair_train(spec, start, data.train, rc.train, cfg.mitigation, keep);
      const std::string stem = o.out.empty() ? "fair_model" : o.out;
      fp::save_model(stem, spec, result.params, {{"config", fp::to_json(cfg)}});
      fp::write_json_file(stem + ".state.json", fp::to_json(result.state));
      print({{"model", stem},
             {"multipliers", result.state.multipliers},
             {"warnings", result.state.warnings},
             {"eval_accuracy", fp::accuracy(spec, result.params, data.eval)}});
      return kOk;
    }
    if (swp->parsed()) {
      auto cfg = load_config(o);
      const auto rep = fp::run_sweep(cfg);
      const std::string dir = o.out.empty() ? fp::resolve_output_dir(cfg) : o.out;
      for (const auto& path : fp::emit(rep, dir)) std::cout << path << '\n';
      for (const auto& f : rep.failures)
        std::cerr << "failed: seed " << f.seed << " rate " << f.rate << " " << f.regime << ": " << f.message << '\n';
      return rep.failures.empty() ? kOk : kPartialFailure;
    }
    if (ups->parsed()) {
      auto cfg = load_config(o);
      if (group < 0) {
        const auto sizes = first_seed_data(cfg).train.group_sizes();
        group = static_cast<int>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
      }
      const auto rep = fp::run_upsample_ablation(cfg, group, factors);
      const std::string dir = o.out.empty() ? fp::resolve_output_dir(cfg) : o.out;
      for (const auto& path : fp::emit(rep, dir)) std::cout << path << '\n';
      for (std::uint64_t s : cfg.seeds)
        std::cout << "seed " << s << ": argmin group at factor " << factors.back() << " = "
                  << rep.argmin_group(s, factors.back()) << '\n';
      return rep.failures.empty() ? kOk : kPartialFailure;
    }
  } catch (const fp::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const fp::CsvError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kPartialFailure;
  }
  return kOk;
}
