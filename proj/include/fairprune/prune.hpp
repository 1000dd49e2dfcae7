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
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairprune/diff.hpp"
#include "fairprune/model.hpp"

namespace fairprune {

inline constexpr const char* kTiePolicyLowerIndex = "abs-then-lower-index";

/// Global unstructured pruning mask. `keep[i] == false` means parameter i is
/// zeroed.
struct PruneMask {
  std::vector<bool> keep;
  double rate = 0.0;
  std::string tie_policy = kTiePolicyLowerIndex;
  std::uint64_t source_checksum = 0;

  std::size_t size() const { return keep.size(); }
  std::size_t pruned_count() const {
    return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
  }

  friend bool operator==(const PruneMask&, const PruneMask&) = default;
};

struct PruneOptions {
  bool exempt_biases = false;
  std::vector<std::size_t> exempt_indices;
};

struct PruneResult {
  PruneMask mask;
  ParamVector pruned;  // full length, zeros in pruned slots
};

inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

/// Zeroes round_half_up(rate * k_prunable) entries of smallest magnitude.
/// Equal magnitudes are pruned lower index first, so masks at increasing rates
/// are nested.
inline PruneResult magnitude_prune(const ParamVector& params, double rate, const PruneOptions& options = {}) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("prune: rate must be in [0, 1]");
  const std::size_t k = params.size();
  std::vector<bool> exempt(k, false);
  if (options.exempt_biases) exempt = params.bias_indices();
  for (std::size_t i : options.exempt_indices) {
    if (i >= k) throw std::invalid_argument("prune: exempt index out of range");
    exempt[i] = true;
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < k; ++i)
    if (!exempt[i]) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(params.values[a]) < std::abs(params.values[b]);
  });
  const std::size_t count =
      std::min(candidates.size(), round_half_up(rate * static_cast<double>(candidates.size())));

  PruneResult out;
  out.mask.keep.assign(k, true);
  out.mask.rate = rate;
  out.mask.source_checksum = checksum(params.values);
  out.pruned = params;
  for (std::size_t j = 0; j < count; ++j) {
    out.mask.keep[candidates[j]] = false;
    out.pruned.values[candidates[j]] = 0.0;
  }
  return out;
}

inline ParamVector apply_mask(const ParamVector& params, const PruneMask& mask) {
  if (mask.size() != params.size()) throw std::invalid_argument("mask: length differs from parameter count");
  ParamVector out = params;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask.keep[i]) out.values[i] = 0.0;
  return out;
}

/// True iff every coordinate pruned by `low` is also pruned by `high`.
inline bool nested(const PruneMask& low, const PruneMask& high) {
  if (low.size() != high.size()) throw std::invalid_argument("nested: masks have different lengths");
  if (low.source_checksum != high.source_checksum)
    throw std::invalid_argument("nested: masks were computed from different source parameters");
  for (std::size_t i = 0; i < low.size(); ++i)
    if (!low.keep[i] && high.keep[i]) return false;
  return true;
}

/// ||pruned - orig||.
inline double prune_delta_norm(const ParamVector& orig, const ParamVector& pruned) {
  if (orig.size() != pruned.size()) throw std::invalid_argument("delta norm: parameter counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < orig.size(); ++i) {
    const double d = pruned.values[i] - orig.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace fairprune
