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


// Experiment sweeps, the upsampling ablation and report emission.
//
// sweep.csv columns, one row per seed x rate x regime x group:
//   seed, rate, regime, group, size, loss, accuracy, grad_norm, hess_max_eig,
//   boundary_term, excessive_loss, bound_first, bound_second, bound_total,
//   residual, xi_loss, xi_acc, flags
// Empty cells mean "not computed". `flags` is a ';'-joined list.

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fairprune/audit.hpp"
#include "fairprune/data.hpp"
#include "fairprune/io.hpp"
#include "fairprune/mitigate.hpp"
#include "fairprune/model.hpp"
#include "fairprune/stats.hpp"
#include "fairprune/train.hpp"

namespace fairprune {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<double> default_rate_grid() {
  return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
}

enum class Normalization { kNone, kMinMaxPerSweep };

struct DataSource {
  std::optional<SynthSpec> synthetic;
  std::string csv_path;
  CsvSchema schema;
  // Synthetic data is redrawn per seed with seed `synthetic->seed + seed`.
  bool resample_per_seed = true;
  // 1.0 evaluates on the training data.
  double train_fraction = 0.8;
};

/// Hidden widths; input and output widths come from the data unless
/// `layer_sizes` is given in full.
struct ModelConfig {
  std::vector<std::size_t> hidden_layers{16};
  std::vector<std::size_t> layer_sizes;
  Activation hidden = Activation::kTanh;
  OutputKind output = OutputKind::kSoftmax;
  LossKind loss = LossKind::kCrossEntropy;
  bool use_bias = true;
};

struct ExperimentConfig {
  DataSource data;
  ModelConfig model;
  TrainConfig train;
  MitigationOptions mitigation;
  PruneOptions prune;
  AuditOptions audit;
  std::vector<double> rates = default_rate_grid();
  std::vector<Regime> regimes{Regime::kNoMitigation, Regime::kFairBefore, Regime::kFairAfter, Regime::kFairBoth};
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir = "fairprune_out";
  Normalization normalization = Normalization::kNone;

  void validate() const {
    if (!data.synthetic && data.csv_path.empty()) throw ConfigError("config: data needs 'synthetic' or 'csv'");
    if (data.synthetic && !data.csv_path.empty()) throw ConfigError("config: data has both 'synthetic' and 'csv'");
    if (!(data.train_fraction > 0.0 && data.train_fraction <= 1.0))
      throw ConfigError("config: train_fraction must be in (0, 1]");
    if (rates.empty()) throw ConfigError("config: rates must not be empty");
    for (std::size_t i = 0; i < rates.size(); ++i) {
      if (!(rates[i] >= 0.0 && rates[i] <= 1.0)) throw ConfigError("config: rates must lie in [0, 1]");
      if (i > 0 && !(rates[i] > rates[i - 1])) throw ConfigError("config: rates must be strictly ascending");
    }
    if (regimes.empty()) throw ConfigError("config: regimes must not be empty");
    if (seeds.empty()) throw ConfigError("config: need at least one seed");
    try {
      train.validate();
      if (data.synthetic) data.synthetic->validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
};

// ---------------------------------------------------------------------------
// Config JSON

inline json to_json(const ExperimentConfig& c) {
  json data = {{"resample_per_seed", c.data.resample_per_seed}, {"train_fraction", c.data.train_fraction}};
  if (c.data.synthetic) data["synthetic"] = to_json(*c.data.synthetic);
  if (!c.data.csv_path.empty()) {
    data["csv"] = c.data.csv_path;
    data["group_column"] = c.data.schema.group_column;
    data["label_column"] = c.data.schema.label_column;
    data["feature_columns"] = c.data.schema.feature_columns;
  }
  json model = {{"hidden_layers", c.model.hidden_layers},
                {"hidden", to_string(c.model.hidden)},
                {"output", to_string(c.model.output)},
                {"loss", to_string(c.model.loss)},
                {"use_bias", c.model.use_bias}};
  if (!c.model.layer_sizes.empty()) model["layer_sizes"] = c.model.layer_sizes;
  std::vector<std::string> regimes;
  for (Regime r : c.regimes) regimes.emplace_back(to_string(r));
  return {{"data", data},
          {"model", model},
          {"train", to_json(c.train)},
          {"mitigation", to_json(c.mitigation)},
          {"prune", {{"exempt_biases", c.prune.exempt_biases}, {"exempt_indices", c.prune.exempt_indices}}},
          {"audit",
           {{"compute_hessian", c.audit.compute_hessian},
            {"compute_taylor", c.audit.compute_taylor},
            {"eigen", to_json(c.audit.eigen)}}},
          {"rates", c.rates},
          {"regimes", regimes},
          {"seeds", c.seeds},
          {"output_dir", c.output_dir},
          {"normalization", c.normalization == Normalization::kMinMaxPerSweep ? "minmax_per_sweep" : "none"}};
}

/// Missing keys keep their defaults. Throws ConfigError on malformed input.
inline ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("data")) {
      const json& d = j["data"];
      if (d.contains("synthetic")) c.data.synthetic = synth_spec_from_json(d["synthetic"]);
      if (d.contains("csv")) c.data.csv_path = d["csv"].get<std::string>();
      c.data.schema.group_column = d.value("group_column", c.data.schema.group_column);
      c.data.schema.label_column = d.value("label_column", c.data.schema.label_column);
      c.data.schema.feature_columns = d.value("feature_columns", c.data.schema.feature_columns);
      c.data.resample_per_seed = d.value("resample_per_seed", c.data.resample_per_seed);
      c.data.train_fraction = d.value("train_fraction", c.data.train_fraction);
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      c.model.hidden_layers = m.value("hidden_layers", c.model.hidden_layers);
      c.model.layer_sizes = m.value("layer_sizes", c.model.layer_sizes);
      c.model.hidden = parse_activation(m.value("hidden", std::string(to_string(c.model.hidden))));
      c.model.output = parse_output(m.value("output", std::string(to_string(c.model.output))));
      c.model.loss = parse_loss(m.value("loss", std::string(to_string(c.model.loss))));
      c.model.use_bias = m.value("use_bias", c.model.use_bias);
    }
    if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
    if (j.contains("mitigation")) c.mitigation = mitigation_from_json(j["mitigation"], c.mitigation);
    if (j.contains("prune")) {
      c.prune.exempt_biases = j["prune"].value("exempt_biases", false);
      c.prune.exempt_indices = j["prune"].value("exempt_indices", std::vector<std::size_t>{});
    }
    if (j.contains("audit")) {
      const json& a = j["audit"];
      c.audit.compute_hessian = a.value("compute_hessian", c.audit.compute_hessian);
      c.audit.compute_taylor = a.value("compute_taylor", c.audit.compute_taylor);
      if (a.contains("eigen")) c.audit.eigen = eigen_options_from_json(a["eigen"], c.audit.eigen);
    }
    c.rates = j.value("rates", c.rates);
    if (j.contains("regimes")) {
      c.regimes.clear();
      for (const auto& r : j["regimes"]) c.regimes.push_back(parse_regime(r.get<std::string>()));
    }
    c.seeds = j.value("seeds", c.seeds);
    c.output_dir = j.value("output_dir", c.output_dir);
    const std::string norm = j.value("normalization", std::string("none"));
    if (norm == "minmax_per_sweep") c.normalization = Normalization::kMinMaxPerSweep;
    else if (norm != "none") throw ConfigError("config: unknown normalization '" + norm + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

/// FAIRPRUNE_OUTPUT_ROOT, when set, replaces the configured output directory.
inline std::string resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* root = std::getenv("FAIRPRUNE_OUTPUT_ROOT"); root && *root) return root;
  return cfg.output_dir;
}

// ---------------------------------------------------------------------------
// Per-seed setup

struct SeedData {
  Dataset train;
  Dataset eval;
  std::vector<std::string> warnings;
};

inline Dataset load_source(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.data.synthetic) {
    SynthSpec s = *cfg.data.synthetic;
    if (cfg.data.resample_per_seed) s.seed += seed;
    return synth_gaussian_groups(s);
  }
  return load_csv(cfg.data.csv_path, cfg.data.schema);
}

inline SeedData prepare_seed_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  Dataset ds = load_source(cfg, seed);
  if (cfg.data.train_fraction >= 1.0) return {ds, ds, {}};
  auto sp = split(ds, cfg.data.train_fraction, seed);
  return {std::move(sp.train), std::move(sp.test), std::move(sp.warnings)};
}

inline ModelSpec build_model(const ModelConfig& mc, const Dataset& ds) {
  ModelSpec spec;
  spec.hidden = mc.hidden;
  spec.output = mc.output;
  spec.loss = mc.loss;
  spec.use_bias = mc.use_bias;
  if (!mc.layer_sizes.empty()) {
    spec.layer_sizes = mc.layer_sizes;
  } else {
    spec.layer_sizes.push_back(ds.dims);
    for (std::size_t h : mc.hidden_layers) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(mc.output == OutputKind::kSigmoidBinary ? 1
                                                                       : static_cast<std::size_t>(ds.num_classes));
  }
  spec.validate_for(ds);
  return spec;
}

inline RegimeConfig regime_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  RegimeConfig rc;
  rc.train = cfg.train;
  rc.train.seed = seed;
  rc.init_seed = seed;
  rc.mitigation = cfg.mitigation;
  rc.prune = cfg.prune;
  rc.audit = cfg.audit;
  return rc;
}

// ---------------------------------------------------------------------------
// Reports

struct SweepRow {
  std::uint64_t seed = 0;
  double rate = 0.0;
  std::string regime;
  int group = 0;
  std::size_t size = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double grad_norm = 0.0;
  std::optional<double> hess_max_eig;
  std::optional<double> boundary_term;
  double excessive_loss = 0.0;
  std::optional<double> bound_first;
  std::optional<double> bound_second;
  std::optional<double> bound_total;
  std::optional<double> residual;
  double xi_loss = 0.0;
  double xi_acc = 0.0;
  std::vector<std::string> flags;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepFailure {
  std::uint64_t seed = 0;
  double rate = 0.0;
  std::string regime;
  std::string message;

  friend bool operator==(const SweepFailure&, const SweepFailure&) = default;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  friend bool operator==(const MetricSummary&, const MetricSummary&) = default;
};

struct AggregateRow {
  double rate = 0.0;
  std::string regime;
  int group = 0;
  std::size_t n = 0;
  std::map<std::string, MetricSummary> metrics;

  friend bool operator==(const AggregateRow&, const AggregateRow&) = default;
};

struct SweepReport {
  json config;
  std::vector<SweepRow> rows;
  std::vector<SweepFailure> failures;
  std::vector<AggregateRow> aggregates;
  std::vector<std::string> warnings;
  // minmax_per_sweep only: per-column (min, max) and the rescaled rows.
  std::map<std::string, std::pair<double, double>> normalization;
  std::vector<SweepRow> normalized_rows;

  friend bool operator==(const SweepReport&, const SweepReport&) = default;
};

inline const std::vector<std::string>& sweep_csv_columns() {
  static const std::vector<std::string> cols = {
      "seed",           "rate",         "regime",      "group",        "size",     "loss",
      "accuracy",       "grad_norm",    "hess_max_eig", "boundary_term", "excessive_loss", "bound_first",
      "bound_second",   "bound_total",  "residual",    "xi_loss",      "xi_acc",   "flags"};
  return cols;
}

/// Numeric columns subject to normalization and aggregation.
inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols = {"loss",        "accuracy",     "grad_norm",   "hess_max_eig",
                                                "boundary_term", "excessive_loss", "bound_first", "bound_second",
                                                "bound_total", "residual",     "xi_loss",     "xi_acc"};
  return cols;
}

namespace detail {

inline std::optional<double>* optional_metric(SweepRow& r, const std::string& name) {
  if (name == "hess_max_eig") return &r.hess_max_eig;
  if (name == "boundary_term") return &r.boundary_term;
  if (name == "bound_first") return &r.bound_first;
  if (name == "bound_second") return &r.bound_second;
  if (name == "bound_total") return &r.bound_total;
  if (name == "residual") return &r.residual;
  return nullptr;
}

inline double* plain_metric(SweepRow& r, const std::string& name) {
  if (name == "loss") return &r.loss;
  if (name == "accuracy") return &r.accuracy;
  if (name == "grad_norm") return &r.grad_norm;
  if (name == "excessive_loss") return &r.excessive_loss;
  if (name == "xi_loss") return &r.xi_loss;
  if (name == "xi_acc") return &r.xi_acc;
  return nullptr;
}

inline std::optional<double> metric(const SweepRow& r, const std::string& name) {
  auto& m = const_cast<SweepRow&>(r);
  if (auto* p = plain_metric(m, name)) return *p;
  if (auto* o = optional_metric(m, name)) return *o;
  throw std::invalid_argument("unknown metric '" + name + "'");
}

}  // namespace detail

/// Expands one audited cell into per-group rows.
inline std::vector<SweepRow> rows_from_audit(std::uint64_t seed, double rate, Regime regime, const AuditReport& rep) {
  std::vector<SweepRow> rows;
  std::vector<std::string> shared = rep.flags;
  shared.insert(shared.end(), rep.errors.begin(), rep.errors.end());
  for (const auto& g : rep.groups) {
    SweepRow r;
    r.seed = seed;
    r.rate = rate;
    r.regime = to_string(regime);
    r.group = g.group;
    r.size = g.size;
    r.loss = g.loss;
    r.accuracy = g.accuracy;
    r.grad_norm = g.grad_norm;
    if (g.hess_max_eig) r.hess_max_eig = g.hess_max_eig->value;
    r.boundary_term = g.mean_boundary_term;
    r.excessive_loss = g.excessive_loss;
    for (const auto& t : rep.taylor) {
      if (t.group != g.group) continue;
      r.bound_first = t.first_order;
      r.bound_second = t.second_order;
      r.bound_total = t.bound_total;
      r.residual = t.residual;
    }
    r.xi_loss = rep.violation.loss_based;
    r.xi_acc = rep.violation.accuracy_based;
    const std::string tag = ":g" + std::to_string(g.group);
    for (const auto& f : shared) {
      const auto pos = f.find(":g");
      // Group-tagged entries go only to their group; the rest to all rows.
      if (pos == std::string::npos || f.compare(pos, tag.size(), tag) == 0) r.flags.push_back(f);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<AggregateRow> aggregate(const std::vector<SweepRow>& rows) {
  std::map<std::tuple<double, std::string, int>, std::vector<const SweepRow*>> cells;
  for (const auto& r : rows) cells[{r.rate, r.regime, r.group}].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : cells) {
    AggregateRow a;
    std::tie(a.rate, a.regime, a.group) = key;
    a.n = members.size();
    for (const auto& name : metric_columns()) {
      std::vector<double> xs;
      for (const SweepRow* r : members)
        if (auto v = detail::metric(*r, name)) xs.push_back(*v);
      if (xs.empty()) continue;
      a.metrics[name] = {mean(xs), sample_std(xs)};
    }
    out.push_back(std::move(a));
  }
  return out;
}

/// Min-max rescales every metric column over all rows. Constant columns map
/// to 0.
inline void normalize_minmax(SweepReport& rep) {
  rep.normalization.clear();
  rep.normalized_rows = rep.rows;
  for (const auto& name : metric_columns()) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : rep.rows)
      if (auto v = detail::metric(r, name); v && std::isfinite(*v)) {
        lo = std::min(lo, *v);
        hi = std::max(hi, *v);
      }
    if (!(lo <= hi)) continue;
    rep.normalization[name] = {lo, hi};
    auto scale = [&](double x) { return hi > lo ? (x - lo) / (hi - lo) : 0.0; };
    for (auto& r : rep.normalized_rows) {
      if (auto* p = detail::plain_metric(r, name)) *p = scale(*p);
      else if (auto* o = detail::optional_metric(r, name); o && o->has_value()) *o = scale(**o);
    }
  }
}

// ---------------------------------------------------------------------------
// Sweep

/// For each seed, trains one original per regime prefix (plain or fair),
/// then prunes, retrains and audits every (rate, regime) cell. Failures are
/// recorded per cell and the sweep carries on.
inline SweepReport run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  SweepReport rep;
  rep.config = to_json(cfg);
  for (std::uint64_t seed : cfg.seeds) {
    auto fail_all = [&](const std::vector<Regime>& regimes, const std::string& msg) {
      for (double rate : cfg.rates)
        for (Regime r : regimes) rep.failures.push_back({seed, rate, to_string(r), msg});
    };
    SeedData data;
    ModelSpec spec;
    try {
      data = prepare_seed_data(cfg, seed);
      spec = build_model(cfg.model, data.train);
    } catch (const std::exception& e) {
      fail_all(cfg.regimes, std::string("setup: ") + e.what());
      continue;
    }
    for (auto& w : data.warnings) rep.warnings.push_back("seed " + std::to_string(seed) + ": " + w);
    const RegimeConfig rc = regime_config(cfg, seed);

    std::map<bool, std::optional<ParamVector>> originals;
    std::map<bool, std::string> original_errors;
    for (Regime r : cfg.regimes) {
      const bool fair = fair_original(r);
      if (originals.count(fair) || original_errors.count(fair)) continue;
      try {
        originals[fair] = train_original(spec, data.train, rc, fair).params;
      } catch (const std::exception& e) {
        original_errors[fair] = std::string("train: ") + e.what();
      }
    }
    for (double rate : cfg.rates) {
      for (Regime r : cfg.regimes) {
        const bool fair = fair_original(r);
        if (original_errors.count(fair)) {
          rep.failures.push_back({seed, rate, to_string(r), original_errors[fair]});
          continue;
        }
        try {
          auto res = finish_regime(spec, data.train, data.eval, rc, r, rate, *originals[fair]);
          auto rows = rows_from_audit(seed, rate, r, res.audit);
          rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
        } catch (const std::exception& e) {
          rep.failures.push_back({seed, rate, to_string(r), e.what()});
        }
      }
    }
  }
  rep.aggregates = aggregate(rep.rows);
  if (cfg.normalization == Normalization::kMinMaxPerSweep) normalize_minmax(rep);
  return rep;
}

// ---------------------------------------------------------------------------
// Upsampling ablation

struct UpsampleRow {
  std::uint64_t seed = 0;
  int factor = 1;
  int group = 0;
  std::size_t train_size = 0;  // group size after upsampling
  double grad_norm = 0.0;      // on the (upsampled) training data after the last epoch
  double accuracy = 0.0;       // on the evaluation data

  friend bool operator==(const UpsampleRow&, const UpsampleRow&) = default;
};

struct UpsampleReport {
  json config;
  int group = 0;
  std::vector<int> factors;
  std::vector<UpsampleRow> rows;
  std::vector<SweepFailure> failures;

  /// Group with the smallest grad norm for (seed, factor), or -1.
  int argmin_group(std::uint64_t seed, int factor) const {
    int best = -1;
    double v = std::numeric_limits<double>::infinity();
    for (const auto& r : rows)
      if (r.seed == seed && r.factor == factor && r.grad_norm < v) {
        v = r.grad_norm;
        best = r.group;
      }
    return best;
  }

  /// Spearman(factor, grad norm of the upsampled group) for one seed.
  double trend(std::uint64_t seed) const {
    std::vector<double> f, g;
    for (const auto& r : rows)
      if (r.seed == seed && r.group == group) {
        f.push_back(r.factor);
        g.push_back(r.grad_norm);
      }
    return spearman(f, g);
  }
};

/// Trains the unpruned network on training data where `group` is repeated
/// `factor` times and reports every group's final training gradient norm and
/// evaluation accuracy. Factor 1 uses the data unchanged, matching the
/// sweep's baseline.
inline UpsampleReport run_upsample_ablation(const ExperimentConfig& cfg, int group,
                                            const std::vector<int>& factors = {1, 5, 10, 20}) {
  cfg.validate();
  UpsampleReport rep;
  rep.config = to_json(cfg);
  rep.group = group;
  rep.factors = factors;
  for (std::uint64_t seed : cfg.seeds) {
    SeedData data;
    ModelSpec spec;
    try {
      data = prepare_seed_data(cfg, seed);
      spec = build_model(cfg.model, data.train);
      if (!data.train.has_group(group)) throw std::invalid_argument("upsample: group " + std::to_string(group) +
                                                                    " absent from training data");
    } catch (const std::exception& e) {
      for (int f : factors) rep.failures.push_back({seed, static_cast<double>(f), "upsample", e.what()});
      continue;
    }
    const RegimeConfig rc = regime_config(cfg, seed);
    for (int f : factors) {
      try {
        const Dataset tr = f == 1 ? data.train : upsample_group(data.train, group, f, seed);
        const auto params = train_original(spec, tr, rc, false).params;
        for (int g = 0; g < tr.num_groups; ++g) {
          if (!tr.has_group(g) || !data.eval.has_group(g)) continue;
          UpsampleRow r;
          r.seed = seed;
          r.factor = f;
          r.group = g;
          r.train_size = tr.group_indices(g).size();
          r.grad_norm = group_grad_norm(spec, params, tr, g);
          r.accuracy = group_accuracy(spec, params, data.eval, g);
          rep.rows.push_back(r);
        }
      } catch (const std::exception& e) {
        rep.failures.push_back({seed, static_cast<double>(f), "upsample", e.what()});
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Emission

namespace detail {

inline std::string csv_number(double x) { return format_double(x); }
inline std::string csv_number(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }

inline std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string join(const std::vector<std::string>& xs, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? sep : "") + xs[i];
  return out;
}

inline std::vector<std::string> split_flags(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ';');) out.push_back(part);
  return out;
}

inline json optional_json(const std::optional<double>& x) { return x ? json(*x) : json(nullptr); }
inline std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << detail::join(sweep_csv_columns(), ",") << '\n';
  for (const auto& r : rows) {
    out << r.seed << ',' << detail::csv_number(r.rate) << ',' << r.regime << ',' << r.group << ',' << r.size << ','
        << detail::csv_number(r.loss) << ',' << detail::csv_number(r.accuracy) << ','
        << detail::csv_number(r.grad_norm) << ',' << detail::csv_number(r.hess_max_eig) << ','
        << detail::csv_number(r.boundary_term) << ',' << detail::csv_number(r.excessive_loss) << ','
        << detail::csv_number(r.bound_first) << ',' << detail::csv_number(r.bound_second) << ','
        << detail::csv_number(r.bound_total) << ',' << detail::csv_number(r.residual) << ','
        << detail::csv_number(r.xi_loss) << ',' << detail::csv_number(r.xi_acc) << ','
        << detail::csv_text(detail::join(r.flags, ";")) << '\n';
  }
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "rate,regime,group,n";
  for (const auto& m : metric_columns()) out << ',' << m << "_mean," << m << "_std";
  out << '\n';
  for (const auto& a : rows) {
    out << detail::csv_number(a.rate) << ',' << a.regime << ',' << a.group << ',' << a.n;
    for (const auto& m : metric_columns()) {
      auto it = a.metrics.find(m);
      if (it == a.metrics.end()) out << ",,";
      else out << ',' << detail::csv_number(it->second.mean) << ',' << detail::csv_number(it->second.std);
    }
    out << '\n';
  }
}

inline json to_json(const SweepRow& r) {
  return {{"seed", r.seed},
          {"rate", r.rate},
          {"regime", r.regime},
          {"group", r.group},
          {"size", r.size},
          {"loss", r.loss},
          {"accuracy", r.accuracy},
          {"grad_norm", r.grad_norm},
          {"hess_max_eig", detail::optional_json(r.hess_max_eig)},
          {"boundary_term", detail::optional_json(r.boundary_term)},
          {"excessive_loss", r.excessive_loss},
          {"bound_first", detail::optional_json(r.bound_first)},
          {"bound_second", detail::optional_json(r.bound_second)},
          {"bound_total", detail::optional_json(r.bound_total)},
          {"residual", detail::optional_json(r.residual)},
          {"xi_loss", r.xi_loss},
          {"xi_acc", r.xi_acc},
          {"flags", r.flags}};
}

inline SweepRow sweep_row_from_json(const json& j) {
  SweepRow r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rate = j.at("rate").get<double>();
  r.regime = j.at("regime").get<std::string>();
  r.group = j.at("group").get<int>();
  r.size = j.at("size").get<std::size_t>();
  r.loss = j.at("loss").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.hess_max_eig = detail::optional_from(j.at("hess_max_eig"));
  r.boundary_term = detail::optional_from(j.at("boundary_term"));
  r.excessive_loss = j.at("excessive_loss").get<double>();
  r.bound_first = detail::optional_from(j.at("bound_first"));
  r.bound_second = detail::optional_from(j.at("bound_second"));
  r.bound_total = detail::optional_from(j.at("bound_total"));
  r.residual = detail::optional_from(j.at("residual"));
  r.xi_loss = j.at("xi_loss").get<double>();
  r.xi_acc = j.at("xi_acc").get<double>();
  r.flags = j.at("flags").get<std::vector<std::string>>();
  return r;
}

inline json to_json(const SweepReport& rep) {
  json rows = json::array(), failures = json::array(), aggs = json::array(), norm_rows = json::array();
  for (const auto& r : rep.rows) rows.push_back(to_json(r));
  for (const auto& r : rep.normalized_rows) norm_rows.push_back(to_json(r));
  for (const auto& f : rep.failures)
    failures.push_back({{"seed", f.seed}, {"rate", f.rate}, {"regime", f.regime}, {"message", f.message}});
  for (const auto& a : rep.aggregates) {
    json m = json::object();
    for (const auto& [k, v] : a.metrics) m[k] = {{"mean", v.mean}, {"std", v.std}};
    aggs.push_back({{"rate", a.rate}, {"regime", a.regime}, {"group", a.group}, {"n", a.n}, {"metrics", m}});
  }
  json norm = json::object();
  for (const auto& [k, v] : rep.normalization) norm[k] = {{"min", v.first}, {"max", v.second}};
  return {{"config", rep.config},       {"rows", rows},           {"failures", failures},
          {"aggregates", aggs},         {"warnings", rep.warnings}, {"normalization", norm},
          {"normalized_rows", norm_rows}};
}

inline SweepReport sweep_report_from_json(const json& j) {
  SweepReport rep;
  rep.config = j.at("config");
  for (const auto& r : j.at("rows")) rep.rows.push_back(sweep_row_from_json(r));
  for (const auto& r : j.at("normalized_rows")) rep.normalized_rows.push_back(sweep_row_from_json(r));
  for (const auto& f : j.at("failures"))
    rep.failures.push_back({f.at("seed").get<std::uint64_t>(), f.at("rate").get<double>(),
                            f.at("regime").get<std::string>(), f.at("message").get<std::string>()});
  for (const auto& a : j.at("aggregates")) {
    AggregateRow row;
    row.rate = a.at("rate").get<double>();
    row.regime = a.at("regime").get<std::string>();
    row.group = a.at("group").get<int>();
    row.n = a.at("n").get<std::size_t>();
    for (auto it = a.at("metrics").begin(); it != a.at("metrics").end(); ++it)
      row.metrics[it.key()] = {it.value().at("mean").get<double>(), it.value().at("std").get<double>()};
    rep.aggregates.push_back(std::move(row));
  }
  rep.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (auto it = j.at("normalization").begin(); it != j.at("normalization").end(); ++it)
    rep.normalization[it.key()] = {it.value().at("min").get<double>(), it.value().at("max").get<double>()};
  return rep;
}

inline json to_json(const UpsampleReport& rep) {
  json rows = json::array(), failures = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"seed", r.seed},
                    {"factor", r.factor},
                    {"group", r.group},
                    {"train_size", r.train_size},
                    {"grad_norm", r.grad_norm},
                    {"accuracy", r.accuracy}});
  for (const auto& f : rep.failures)
    failures.push_back({{"seed", f.seed}, {"factor", f.rate}, {"message", f.message}});
  return {{"config", rep.config}, {"group", rep.group}, {"factors", rep.factors}, {"rows", rows},
          {"failures", failures}};
}

inline void write_upsample_csv(std::ostream& out, const UpsampleReport& rep) {
  out << "seed,factor,group,train_size,grad_norm,accuracy\n";
  for (const auto& r : rep.rows)
    out << r.seed << ',' << r.factor << ',' << r.group << ',' << r.train_size << ','
        << detail::csv_number(r.grad_norm) << ',' << detail::csv_number(r.accuracy) << '\n';
}

enum class EmitFormat { kJson, kCsv };

namespace detail {

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  fn(out);
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace detail

/// Writes sweep.json, sweep.csv, aggregate.csv and, when normalized,
/// sweep_normalized.csv. Returns the written paths.
inline std::vector<std::string> emit(const SweepReport& rep, const std::string& dir,
                                     const std::vector<EmitFormat>& formats = {EmitFormat::kJson, EmitFormat::kCsv}) {
  const auto root = detail::prepare_dir(dir);
  std::vector<std::string> written;
  for (EmitFormat f : formats) {
    if (f == EmitFormat::kJson) {
      detail::write_file(root / "sweep.json", [&](std::ostream& o) { o << to_json(rep).dump(2) << '\n'; });
      written.push_back((root / "sweep.json").string());
    } else {
      detail::write_file(root / "sweep.csv", [&](std::ostream& o) { write_sweep_csv(o, rep.rows); });
      detail::write_file(root / "aggregate.csv", [&](std::ostream& o) { write_aggregate_csv(o, rep.aggregates); });
      written.push_back((root / "sweep.csv").string());
      written.push_back((root / "aggregate.csv").string());
      if (!rep.normalization.empty()) {
        detail::write_file(root / "sweep_normalized.csv",
                           [&](std::ostream& o) { write_sweep_csv(o, rep.normalized_rows); });
        written.push_back((root / "sweep_normalized.csv").string());
      }
    }
  }
  return written;
}

inline std::vector<std::string> emit(const UpsampleReport& rep, const std::string& dir) {
  const auto root = detail::prepare_dir(dir);
  detail::write_file(root / "upsample.json", [&](std::ostream& o) { o << to_json(rep).dump(2) << '\n'; });
  detail::write_file(root / "upsample.csv", [&](std::ostream& o) { write_upsample_csv(o, rep); });
  return {(root / "upsample.json").string(), (root / "upsample.csv").string()};
}

}  // namespace fairprune
