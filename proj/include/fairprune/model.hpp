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
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprune/data.hpp"
#include "fairprune/dual.hpp"

namespace fairprune {

enum class Activation { kRelu, kTanh, kSigmoid };
enum class OutputKind { kSoftmax, kSigmoidBinary, kLinear };
enum class LossKind { kCrossEntropy, kBinaryCrossEntropy, kMse };

/// Dense feed-forward classifier: `layer_sizes` runs from input width to
/// output width.
///
/// A linear output of width 1 under MSE regresses the label value itself;
/// wider linear outputs regress the one-hot label.
struct ModelSpec {
  std::vector<std::size_t> layer_sizes;
  Activation hidden = Activation::kTanh;
  OutputKind output = OutputKind::kSoftmax;
  LossKind loss = LossKind::kCrossEntropy;
  bool use_bias = true;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  bool is_binary() const { return output == OutputKind::kSigmoidBinary; }

  void validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("model: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
      if (s == 0) throw std::invalid_argument("model: layer sizes must be >= 1");
    if (output == OutputKind::kSigmoidBinary) {
      if (loss != LossKind::kBinaryCrossEntropy)
        throw std::invalid_argument("model: sigmoid-binary output requires binary_cross_entropy");
      if (output_dim() != 1) throw std::invalid_argument("model: sigmoid-binary output must have width 1");
    }
    if (output == OutputKind::kSoftmax && loss != LossKind::kCrossEntropy)
      throw std::invalid_argument("model: softmax output requires cross_entropy");
    if (loss == LossKind::kCrossEntropy && output != OutputKind::kSoftmax)
      throw std::invalid_argument("model: cross_entropy requires softmax output");
    if (loss == LossKind::kBinaryCrossEntropy && output != OutputKind::kSigmoidBinary)
      throw std::invalid_argument("model: binary_cross_entropy requires sigmoid-binary output");
    if (loss == LossKind::kMse && output != OutputKind::kLinear)
      throw std::invalid_argument("model: mse requires linear output");
  }

  /// Checks input width and output width against a dataset.
  void validate_for(const Dataset& ds) const {
    validate();
    if (input_dim() != ds.dims)
      throw std::invalid_argument("model: input width " + std::to_string(input_dim()) +
                                  " != dataset dims " + std::to_string(ds.dims));
    if (is_binary()) {
      if (ds.num_classes > 2) throw std::invalid_argument("model: sigmoid-binary needs at most 2 classes");
    } else if (!(output == OutputKind::kLinear && output_dim() == 1) &&
               output_dim() != static_cast<std::size_t>(ds.num_classes)) {
      throw std::invalid_argument("model: output width " + std::to_string(output_dim()) +
                                  " != number of classes " + std::to_string(ds.num_classes));
    }
  }
};

/// Where one layer's weights (row-major `rows x cols`, rows = fan-out) and
/// biases live inside the flat parameter vector.
struct LayerLayout {
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool has_bias = true;

  std::size_t count() const { return rows * cols + (has_bias ? rows : 0); }
  friend bool operator==(const LayerLayout&, const LayerLayout&) = default;
};

inline std::vector<LayerLayout> make_layout(const ModelSpec& spec) {
  std::vector<LayerLayout> layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    LayerLayout L;
    L.cols = spec.layer_sizes[l];
    L.rows = spec.layer_sizes[l + 1];
    L.has_bias = spec.use_bias;
    L.weight_offset = offset;
    L.bias_offset = offset + L.rows * L.cols;
    offset += L.count();
    layout.push_back(L);
  }
  return layout;
}

inline std::size_t parameter_count(const ModelSpec& spec) {
  std::size_t k = 0;
  for (const auto& L : make_layout(spec)) k += L.count();
  return k;
}

struct ParamVector {
  std::vector<double> values;
  std::vector<LayerLayout> layout;

  std::size_t size() const { return values.size(); }
  std::span<const double> span() const { return values; }

  /// True for indices holding a bias.
  std::vector<bool> bias_indices() const {
    std::vector<bool> out(values.size(), false);
    for (const auto& L : layout)
      if (L.has_bias)
        for (std::size_t r = 0; r < L.rows; ++r) out[L.bias_offset + r] = true;
    return out;
  }

  void validate(const ModelSpec& spec) const {
    if (layout != make_layout(spec)) throw std::invalid_argument("params: layout does not match model spec");
    if (values.size() != parameter_count(spec))
      throw std::invalid_argument("params: length does not match model spec");
    for (double v : values)
      if (!std::isfinite(v)) throw std::invalid_argument("params: non-finite entry");
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

inline ParamVector zero_params(const ModelSpec& spec) {
  return {std::vector<double>(parameter_count(spec), 0.0), make_layout(spec)};
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
inline ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p = zero_params(spec);
  std::mt19937_64 rng(seed);
  for (const auto& L : p.layout) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(L.cols));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (std::size_t i = 0; i < L.rows * L.cols; ++i) p.values[L.weight_offset + i] = uni(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / reverse passes, templated on the scalar so the same code yields
// gradients (double) and Hessian-vector products (Dual).

template <class T>
T activate(Activation a, const T& z) {
  using std::exp;
  using std::tanh;
  switch (a) {
    case Activation::kRelu:
      return value_of(z) > 0.0 ? z : T(0.0);
    case Activation::kTanh:
      return tanh(z);
    case Activation::kSigmoid:
      if (value_of(z) >= 0.0) return T(1.0) / (T(1.0) + exp(-z));
      {
        const T e = exp(z);
        return e / (T(1.0) + e);
      }
  }
  return z;
}

// Derivative expressed through the pre-activation and the output.
template <class T>
T activate_derivative(Activation a, const T& z, const T& out) {
  switch (a) {
    case Activation::kRelu:
      return T(value_of(z) > 0.0 ? 1.0 : 0.0);
    case Activation::kTanh:
      return T(1.0) - out * out;
    case Activation::kSigmoid:
      return out * (T(1.0) - out);
  }
  return T(1.0);
}

template <class T>
struct ForwardTrace {
  // pre[l] / post[l] for l = 1..L; post[0] is the input.
  std::vector<std::vector<T>> pre;
  std::vector<std::vector<T>> post;

  const std::vector<T>& logits() const { return pre.back(); }
  const std::vector<T>& outputs() const { return post.back(); }
};

template <class T>
void forward(const ModelSpec& spec, std::span<const LayerLayout> layout, std::span<const T> params,
             std::span<const double> x, ForwardTrace<T>& trace) {
  const std::size_t L = layout.size();
  trace.pre.resize(L + 1);
  trace.post.resize(L + 1);
  trace.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    const auto& lay = layout[l];
    const auto& in = trace.post[l];
    auto& z = trace.pre[l + 1];
    z.assign(lay.rows, T(0.0));
    for (std::size_t r = 0; r < lay.rows; ++r) {
      T acc = lay.has_bias ? params[lay.bias_offset + r] : T(0.0);
      const std::size_t row = lay.weight_offset + r * lay.cols;
      for (std::size_t c = 0; c < lay.cols; ++c) acc += params[row + c] * in[c];
      z[r] = acc;
    }
    auto& a = trace.post[l + 1];
    a.resize(lay.rows);
    if (l + 1 < L) {
      for (std::size_t r = 0; r < lay.rows; ++r) a[r] = activate(spec.hidden, z[r]);
    } else if (spec.output == OutputKind::kSoftmax) {
      using std::exp;
      double zmax = value_of(z[0]);
      for (const auto& zi : z) zmax = std::max(zmax, value_of(zi));
      T sum(0.0);
      for (std::size_t r = 0; r < lay.rows; ++r) {
        a[r] = exp(z[r] - T(zmax));
        sum += a[r];
      }
      for (auto& ai : a) ai = ai / sum;
    } else if (spec.output == OutputKind::kSigmoidBinary) {
      a[0] = activate(Activation::kSigmoid, z[0]);
    } else {
      a = z;
    }
  }
}

/// Accumulates `weight * d(loss)/d(theta)` into `grad`, given `dz_out`, the
/// cotangent at the output logits.
template <class T>
void backward(const ModelSpec& spec, std::span<const LayerLayout> layout, std::span<const T> params,
              const ForwardTrace<T>& trace, std::vector<T> dz_out, const T& weight, std::span<T> grad) {
  std::vector<T> dz = std::move(dz_out);
  std::vector<T> da;
  for (std::size_t l = layout.size(); l-- > 0;) {
    const auto& lay = layout[l];
    const auto& in = trace.post[l];
    for (std::size_t r = 0; r < lay.rows; ++r) {
      const T wdz = weight * dz[r];
      if (lay.has_bias) grad[lay.bias_offset + r] += wdz;
      const std::size_t row = lay.weight_offset + r * lay.cols;
      for (std::size_t c = 0; c < lay.cols; ++c) grad[row + c] += wdz * in[c];
    }
    if (l == 0) break;
    da.assign(lay.cols, T(0.0));
    for (std::size_t r = 0; r < lay.rows; ++r) {
      const std::size_t row = lay.weight_offset + r * lay.cols;
      for (std::size_t c = 0; c < lay.cols; ++c) da[c] += params[row + c] * dz[r];
    }
    dz.resize(lay.cols);
    for (std::size_t c = 0; c < lay.cols; ++c)
      dz[c] = da[c] * activate_derivative(spec.hidden, trace.pre[l][c], trace.post[l][c]);
  }
}

/// Regression/classification target in output space.
inline std::vector<double> target_vector(const ModelSpec& spec, int label) {
  if (spec.is_binary() || (spec.output == OutputKind::kLinear && spec.output_dim() == 1))
    return {static_cast<double>(label)};
  std::vector<double> t(spec.output_dim(), 0.0);
  t[static_cast<std::size_t>(label)] = 1.0;
  return t;
}

/// d(loss)/d(logits). Cross-entropy and BCE both reduce to output - target;
/// MSE on the (identity) output gives 2 (output - target).
template <class T>
std::vector<T> loss_logit_gradient(const ModelSpec& spec, const ForwardTrace<T>& trace, int label) {
  const auto target = target_vector(spec, label);
  const auto& out = trace.outputs();
  std::vector<T> dz(out.size());
  const double factor = spec.loss == LossKind::kMse ? 2.0 : 1.0;
  for (std::size_t c = 0; c < out.size(); ++c) dz[c] = T(factor) * (out[c] - T(target[c]));
  return dz;
}

/// Maps a cotangent on the soft outputs to one on the logits.
template <class T>
std::vector<T> output_to_logit_cotangent(const ModelSpec& spec, const ForwardTrace<T>& trace,
                                         std::span<const T> seed) {
  const auto& f = trace.outputs();
  std::vector<T> dz(f.size());
  switch (spec.output) {
    case OutputKind::kSoftmax: {
      T dot(0.0);
      for (std::size_t c = 0; c < f.size(); ++c) dot += seed[c] * f[c];
      for (std::size_t c = 0; c < f.size(); ++c) dz[c] = f[c] * (seed[c] - dot);
      break;
    }
    case OutputKind::kSigmoidBinary:
      dz[0] = seed[0] * f[0] * (T(1.0) - f[0]);
      break;
    case OutputKind::kLinear:
      for (std::size_t c = 0; c < f.size(); ++c) dz[c] = seed[c];
      break;
  }
  return dz;
}

/// Per-sample loss from logits, numerically stabilised.
inline double sample_loss(const ModelSpec& spec, const ForwardTrace<double>& trace, int label) {
  const auto& z = trace.logits();
  const auto& f = trace.outputs();
  switch (spec.loss) {
    case LossKind::kCrossEntropy: {
      const double zmax = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double zi : z) s += std::exp(zi - zmax);
      return zmax + std::log(s) - z[static_cast<std::size_t>(label)];
    }
    case LossKind::kBinaryCrossEntropy: {
      const double y = static_cast<double>(label);
      return std::max(z[0], 0.0) + std::log1p(std::exp(-std::abs(z[0]))) - y * z[0];
    }
    case LossKind::kMse: {
      const auto t = target_vector(spec, label);
      double s = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c) s += (f[c] - t[c]) * (f[c] - t[c]);
      return s;
    }
  }
  return 0.0;
}

inline int predicted_class(const ModelSpec& spec, std::span<const double> outputs) {
  if (spec.is_binary()) return outputs[0] >= 0.5 ? 1 : 0;
  if (spec.output == OutputKind::kLinear && spec.output_dim() == 1)
    return static_cast<int>(std::llround(outputs[0]));
  return static_cast<int>(std::max_element(outputs.begin(), outputs.end()) - outputs.begin());
}

// ---------------------------------------------------------------------------
// Evaluation

inline std::vector<double> predict_soft(const ModelSpec& spec, const ParamVector& params,
                                        std::span<const double> x) {
  if (x.size() != spec.input_dim())
    throw std::invalid_argument("predict: input has dimension " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(spec.input_dim()));
  ForwardTrace<double> trace;
  forward<double>(spec, params.layout, params.values, x, trace);
  return trace.outputs();
}

/// Sum and count of per-sample losses and hits over `indices`.
struct EvalTotals {
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
};

inline EvalTotals evaluate_indices(const ModelSpec& spec, const ParamVector& params, const Dataset& ds,
                                   std::span<const std::size_t> indices) {
  EvalTotals t;
  ForwardTrace<double> trace;
  for (std::size_t i : indices) {
    forward<double>(spec, params.layout, params.values, ds.row(i), trace);
    t.loss_sum += sample_loss(spec, trace, ds.labels[i]);
    t.correct += predicted_class(spec, trace.outputs()) == ds.labels[i] ? 1 : 0;
    ++t.count;
  }
  return t;
}

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

/// Mean per-sample loss, J(theta; D).
inline double empirical_risk(const ModelSpec& spec, const ParamVector& params, const Dataset& ds) {
  if (ds.size() == 0) throw std::invalid_argument("risk: empty dataset");
  const auto idx = all_indices(ds);
  const auto t = evaluate_indices(spec, params, ds, idx);
  return t.loss_sum / static_cast<double>(t.count);
}

/// J(theta; D_a).
inline double group_risk(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group) {
  const auto idx = ds.group_indices(group);
  if (idx.empty()) throw std::invalid_argument("risk: group " + std::to_string(group) + " not present");
  const auto t = evaluate_indices(spec, params, ds, idx);
  return t.loss_sum / static_cast<double>(t.count);
}

inline double accuracy(const ModelSpec& spec, const ParamVector& params, const Dataset& ds) {
  const auto idx = all_indices(ds);
  const auto t = evaluate_indices(spec, params, ds, idx);
  return t.count ? static_cast<double>(t.correct) / static_cast<double>(t.count) : 0.0;
}

inline double group_accuracy(const ModelSpec& spec, const ParamVector& params, const Dataset& ds, int group) {
  const auto idx = ds.group_indices(group);
  if (idx.empty()) throw std::invalid_argument("accuracy: group " + std::to_string(group) + " not present");
  const auto t = evaluate_indices(spec, params, ds, idx);
  return static_cast<double>(t.correct) / static_cast<double>(t.count);
}

// ---------------------------------------------------------------------------
// Names for config files and reports.

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}
inline const char* to_string(OutputKind o) {
  switch (o) {
    case OutputKind::kSoftmax: return "softmax";
    case OutputKind::kSigmoidBinary: return "sigmoid_binary";
    case OutputKind::kLinear: return "linear";
  }
  return "?";
}
inline const char* to_string(LossKind l) {
  switch (l) {
    case LossKind::kCrossEntropy: return "cross_entropy";
    case LossKind::kBinaryCrossEntropy: return "binary_cross_entropy";
    case LossKind::kMse: return "mse";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}
inline OutputKind parse_output(const std::string& s) {
  if (s == "softmax") return OutputKind::kSoftmax;
  if (s == "sigmoid_binary" || s == "sigmoid-binary") return OutputKind::kSigmoidBinary;
  if (s == "linear") return OutputKind::kLinear;
  throw std::invalid_argument("unknown output kind '" + s + "'");
}
inline LossKind parse_loss(const std::string& s) {
  if (s == "cross_entropy") return LossKind::kCrossEntropy;
  if (s == "binary_cross_entropy") return LossKind::kBinaryCrossEntropy;
  if (s == "mse") return LossKind::kMse;
  throw std::invalid_argument("unknown loss kind '" + s + "'");
}

}  // namespace fairprune
