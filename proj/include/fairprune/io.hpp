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

// Binary and JSON persistence.
//
// Parameter file (.params), all integers little-endian:
//   8 bytes  magic "FPRNPRM1"
//   u32      number of layers L
//   L times: u64 weight_offset, u64 bias_offset, u64 rows, u64 cols, u8 has_bias
//   u64      k
//   k times: f64 (IEEE-754 binary64, little-endian)
//
// Mask file (.mask):
//   8 bytes  magic "FPRNMSK1"
//   u64      k
//   ceil(k/8) bytes, bit i%8 (LSB first) of byte i/8 set iff keep[i]

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairprune/audit.hpp"
#include "fairprune/data.hpp"
#include "fairprune/mitigate.hpp"
#include "fairprune/model.hpp"
#include "fairprune/prune.hpp"
#include "fairprune/train.hpp"

namespace fairprune {

using nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}
inline void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 4);
}
inline std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw FormatError("truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}
inline std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}
inline void expect_magic(std::istream& in, const char* magic) {
  char buf[8];
  if (!in.read(buf, 8) || std::memcmp(buf, magic, 8) != 0)
    throw FormatError(std::string("bad magic, expected ") + std::string(magic, 8));
}
inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}
inline std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace detail

inline void write_params(std::ostream& out, const ParamVector& p) {
  out.write("FPRNPRM1", 8);
  detail::put_u32(out, static_cast<std::uint32_t>(p.layout.size()));
  for (const auto& L : p.layout) {
    detail::put_u64(out, L.weight_offset);
    detail::put_u64(out, L.bias_offset);
    detail::put_u64(out, L.rows);
    detail::put_u64(out, L.cols);
    out.put(L.has_bias ? 1 : 0);
  }
  detail::put_u64(out, p.values.size());
  for (double v : p.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline ParamVector read_params(std::istream& in) {
  detail::expect_magic(in, "FPRNPRM1");
  ParamVector p;
  const std::uint32_t L = detail::get_u32(in);
  for (std::uint32_t l = 0; l < L; ++l) {
    LayerLayout lay;
    lay.weight_offset = detail::get_u64(in);
    lay.bias_offset = detail::get_u64(in);
    lay.rows = detail::get_u64(in);
    lay.cols = detail::get_u64(in);
    const int hb = in.get();
    if (hb == EOF) throw FormatError("truncated file");
    lay.has_bias = hb != 0;
    p.layout.push_back(lay);
  }
  const std::uint64_t k = detail::get_u64(in);
  p.values.resize(k);
  for (auto& v : p.values) v = std::bit_cast<double>(detail::get_u64(in));
  return p;
}

inline void write_mask(std::ostream& out, const PruneMask& m) {
  out.write("FPRNMSK1", 8);
  detail::put_u64(out, m.keep.size());
  std::vector<char> bytes((m.keep.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < m.keep.size(); ++i)
    if (m.keep[i]) bytes[i / 8] = static_cast<char>(bytes[i / 8] | (1 << (i % 8)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Reads the bit vector only; rate, tie policy and checksum live in the
/// sidecar.
inline std::vector<bool> read_mask_bits(std::istream& in) {
  detail::expect_magic(in, "FPRNMSK1");
  const std::uint64_t k = detail::get_u64(in);
  std::vector<char> bytes((k + 7) / 8);
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw FormatError("truncated mask");
  std::vector<bool> keep(k);
  for (std::size_t i = 0; i < k; ++i) keep[i] = (bytes[i / 8] >> (i % 8)) & 1;
  return keep;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const ModelSpec& s) {
  return {{"layer_sizes", s.layer_sizes},
          {"hidden", to_string(s.hidden)},
          {"output", to_string(s.output)},
          {"loss", to_string(s.loss)},
          {"use_bias", s.use_bias}};
}

inline ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  s.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  s.hidden = parse_activation(j.value("hidden", "tanh"));
  s.output = parse_output(j.value("output", "softmax"));
  s.loss = parse_loss(j.value("loss", "cross_entropy"));
  s.use_bias = j.value("use_bias", true);
  s.validate();
  return s;
}

inline json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},               {"batch_size", c.batch_size}, {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline json to_json(const MitigationOptions& m) {
  json j = {{"lagrangian_step", m.lagrangian_step},
            {"multiplier_cap", m.multiplier_cap},
            {"retrain_fraction", m.retrain_fraction}};
  j["retrain_epochs"] = m.retrain_epochs ? json(*m.retrain_epochs) : json(nullptr);
  return j;
}

inline MitigationOptions mitigation_from_json(const json& j, MitigationOptions m = {}) {
  m.lagrangian_step = j.value("lagrangian_step", m.lagrangian_step);
  m.multiplier_cap = j.value("multiplier_cap", m.multiplier_cap);
  m.retrain_fraction = j.value("retrain_fraction", m.retrain_fraction);
  if (j.contains("retrain_epochs") && !j["retrain_epochs"].is_null()) m.retrain_epochs = j["retrain_epochs"].get<int>();
  return m;
}

inline json to_json(const MitigationState& s) {
  return {{"multipliers", s.multipliers},
          {"lagrangian_step", s.lagrangian_step},
          {"violation_history", s.violation_history},
          {"warnings", s.warnings}};
}

inline MitigationState mitigation_state_from_json(const json& j) {
  MitigationState s;
  s.multipliers = j.at("multipliers").get<std::vector<double>>();
  s.lagrangian_step = j.at("lagrangian_step").get<double>();
  s.violation_history = j.at("violation_history").get<std::vector<std::vector<double>>>();
  s.warnings = j.value("warnings", std::vector<std::string>{});
  return s;
}

inline json to_json(const SynthSpec& s) {
  return {{"group_proportions", s.group_proportions},
          {"separation", s.separation},
          {"noise", s.noise},
          {"n_total", s.n_total},
          {"dims", s.dims},
          {"n_classes", s.n_classes},
          {"seed", s.seed},
          {"label_mode", s.label_mode == LabelMode::kGroupIsLabel ? "group_is_label" : "balanced"}};
}

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.group_proportions = j.at("group_proportions").get<std::vector<double>>();
  auto scalar_or_list = [&](const char* key, std::vector<double> fallback) {
    if (!j.contains(key)) return fallback;
    if (j[key].is_array()) return j[key].get<std::vector<double>>();
    return std::vector<double>{j[key].get<double>()};
  };
  s.separation = scalar_or_list("separation", s.separation);
  s.noise = scalar_or_list("noise", s.noise);
  s.n_total = j.value("n_total", s.n_total);
  s.dims = j.value("dims", s.dims);
  s.n_classes = j.value("n_classes", s.n_classes);
  s.seed = j.value("seed", s.seed);
  const std::string mode = j.value("label_mode", std::string("balanced"));
  if (mode == "group_is_label") s.label_mode = LabelMode::kGroupIsLabel;
  else if (mode == "balanced") s.label_mode = LabelMode::kBalancedWithinGroup;
  else throw std::invalid_argument("unknown label_mode '" + mode + "'");
  s.validate();
  return s;
}

inline json to_json(const PruneMask& m) {
  return {{"k", m.keep.size()},
          {"rate", m.rate},
          {"pruned", m.pruned_count()},
          {"tie_policy", m.tie_policy},
          {"source_checksum", detail::hex64(m.source_checksum)}};
}

inline json to_json(const EigenResult& e) {
  return {{"value", e.value}, {"iterations", e.iterations}, {"converged", e.converged}};
}

inline json to_json(const EigenOptions& e) {
  return {{"tol", e.tol}, {"max_iters", e.max_iters}, {"restarts", e.restarts}, {"seed", e.seed}};
}

inline EigenOptions eigen_options_from_json(const json& j, EigenOptions e = {}) {
  e.tol = j.value("tol", e.tol);
  e.max_iters = j.value("max_iters", e.max_iters);
  e.restarts = j.value("restarts", e.restarts);
  e.seed = j.value("seed", e.seed);
  return e;
}

inline json to_json(const TaylorBoundReport& t) {
  return {{"group", t.group},
          {"grad_norm", t.grad_norm},
          {"max_eig", t.max_eig},
          {"eig_converged", t.eig_converged},
          {"delta_norm", t.delta_norm},
          {"first_order", t.first_order},
          {"second_order", t.second_order},
          {"bound_total", t.bound_total},
          {"linear_term", t.linear_term},
          {"quadratic_term", t.quadratic_term},
          {"actual", t.actual},
          {"residual", t.residual},
          {"negative_curvature", t.negative_curvature}};
}

inline json to_json(const AuditReport& r) {
  json groups = json::array();
  for (const auto& g : r.groups) {
    json jg = {{"group", g.group},
               {"name", g.name},
               {"size", g.size},
               {"loss", g.loss},
               {"accuracy", g.accuracy},
               {"grad_norm", g.grad_norm},
               {"mean_soft_error", g.mean_soft_error},
               {"original_loss", g.original_loss},
               {"original_accuracy", g.original_accuracy},
               {"excessive_loss", g.excessive_loss}};
    jg["hess_max_eig"] = g.hess_max_eig ? to_json(*g.hess_max_eig) : json(nullptr);
    jg["mean_boundary_term"] = g.mean_boundary_term ? json(*g.mean_boundary_term) : json(nullptr);
    groups.push_back(jg);
  }
  json taylor = json::array();
  for (const auto& t : r.taylor) taylor.push_back(to_json(t));
  return {{"groups", groups},
          {"violation",
           {{"loss_based", r.violation.loss_based},
            {"accuracy_based", r.violation.accuracy_based},
            {"loss_argmax", r.violation.loss_argmax},
            {"loss_argmin", r.violation.loss_argmin},
            {"accuracy_argmax", r.violation.accuracy_argmax},
            {"accuracy_argmin", r.violation.accuracy_argmin}}},
          {"taylor", taylor},
          {"errors", r.errors},
          {"flags", r.flags}};
}

// ---------------------------------------------------------------------------
// Files

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << std::setprecision(17) << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

/// Writes `<stem>.params` and `<stem>.json` (model spec sidecar).
inline void save_model(const std::string& stem, const ModelSpec& spec, const ParamVector& p,
                       const json& extra = json::object()) {
  std::ofstream out(stem + ".params", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + stem + ".params'");
  write_params(out, p);
  json side = {{"model", to_json(spec)}, {"k", p.size()}, {"checksum", detail::hex64(checksum(p.values))}};
  for (auto it = extra.begin(); it != extra.end(); ++it) side[it.key()] = it.value();
  write_json_file(stem + ".json", side);
}

struct LoadedModel {
  ModelSpec spec;
  ParamVector params;
  json sidecar;
};

inline LoadedModel load_model(const std::string& stem) {
  LoadedModel m;
  m.sidecar = read_json_file(stem + ".json");
  m.spec = model_spec_from_json(m.sidecar.at("model"));
  std::ifstream in(stem + ".params", std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + stem + ".params'");
  m.params = read_params(in);
  m.params.validate(m.spec);
  return m;
}

inline void save_mask(const std::string& stem, const PruneMask& mask) {
  std::ofstream out(stem + ".mask", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + stem + ".mask'");
  write_mask(out, mask);
  write_json_file(stem + ".mask.json", to_json(mask));
}

inline PruneMask load_mask(const std::string& stem) {
  std::ifstream in(stem + ".mask", std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + stem + ".mask'");
  PruneMask m;
  m.keep = read_mask_bits(in);
  const json side = read_json_file(stem + ".mask.json");
  m.rate = side.at("rate").get<double>();
  m.tie_policy = side.at("tie_policy").get<std::string>();
  m.source_checksum = detail::parse_hex64(side.at("source_checksum").get<std::string>());
  return m;
}

}  // namespace fairprune
