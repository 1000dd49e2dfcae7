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
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace fairprune {

/// Samples with a protected-group id and a class label per row.
///
/// Features are stored row-major, `n x dims`.
struct Dataset {
  std::size_t dims = 0;
  std::vector<double> features;
  std::vector<int> groups;
  std::vector<int> labels;
  int num_groups = 0;
  int num_classes = 0;
  std::vector<std::string> group_names;
  std::vector<std::string> label_names;
  // Origin, echoed into manifests.
  std::string source;
  std::optional<std::uint64_t> seed;

  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dims, dims};
  }

  std::vector<std::size_t> group_indices(int group) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (groups[i] == group) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> group_sizes() const {
    std::vector<std::size_t> out(static_cast<std::size_t>(num_groups), 0);
    for (int g : groups) ++out[static_cast<std::size_t>(g)];
    return out;
  }

  bool has_group(int group) const {
    return std::find(groups.begin(), groups.end(), group) != groups.end();
  }

  /// Rows `indices` in that order; group/label vocabularies are kept.
  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.dims = dims;
    out.num_groups = num_groups;
    out.num_classes = num_classes;
    out.group_names = group_names;
    out.label_names = label_names;
    out.source = source;
    out.seed = seed;
    out.features.reserve(indices.size() * dims);
    for (std::size_t i : indices) {
      auto r = row(i);
      out.features.insert(out.features.end(), r.begin(), r.end());
      out.groups.push_back(groups[i]);
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  /// Throws std::invalid_argument on the first broken invariant. With
  /// `require_all_groups` every group id in [0, m) must occur.
  void validate(bool require_all_groups = true) const {
    const std::size_t n = labels.size();
    if (n == 0) throw std::invalid_argument("dataset: empty");
    if (groups.size() != n || features.size() != n * dims)
      throw std::invalid_argument("dataset: features/groups/labels disagree on n");
    if (num_groups < 1 || num_classes < 1)
      throw std::invalid_argument("dataset: num_groups and num_classes must be >= 1");
    for (std::size_t i = 0; i < n; ++i) {
      if (groups[i] < 0 || groups[i] >= num_groups)
        throw std::invalid_argument("dataset: group id out of range at row " + std::to_string(i));
      if (labels[i] < 0 || labels[i] >= num_classes)
        throw std::invalid_argument("dataset: label out of range at row " + std::to_string(i));
    }
    for (std::size_t j = 0; j < features.size(); ++j)
      if (!std::isfinite(features[j]))
        throw std::invalid_argument("dataset: non-finite feature at row " +
                                    std::to_string(j / dims) + ", column " +
                                    std::to_string(j % dims));
    if (require_all_groups) {
      auto sizes = group_sizes();
      for (std::size_t g = 0; g < sizes.size(); ++g)
        if (sizes[g] == 0)
          throw std::invalid_argument("dataset: group " + std::to_string(g) + " has no samples");
    }
    if (!group_names.empty() && group_names.size() != static_cast<std::size_t>(num_groups))
      throw std::invalid_argument("dataset: group_names length differs from num_groups");
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.dims == b.dims && a.features == b.features && a.groups == b.groups &&
           a.labels == b.labels && a.num_groups == b.num_groups &&
           a.num_classes == b.num_classes;
  }
};

/// Largest-remainder apportionment of `total` items by `weights`.
/// Ties in the fractional part go to the lower index.
inline std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / sum * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < total; ++j, ++assigned)
    ++counts[remainders[j % remainders.size()].second];
  return counts;
}

// ---------------------------------------------------------------------------
// Synthetic populations

enum class LabelMode {
  kBalancedWithinGroup,  // every group holds all classes in equal shares
  kGroupIsLabel,         // label == group id; n_classes must equal #groups
};

/// Gaussian population with controllable group imbalance.
///
/// `separation` and `noise` are per group; a single entry is broadcast.
/// Class means sit on a regular simplex, so every pair of class means is
/// `separation[a]` apart within group `a`.
struct SynthSpec {
  std::vector<double> group_proportions;
  std::vector<double> separation{3.0};
  std::vector<double> noise{1.0};
  std::size_t n_total = 1000;
  std::size_t dims = 2;
  int n_classes = 2;
  std::uint64_t seed = 0;
  LabelMode label_mode = LabelMode::kBalancedWithinGroup;

  double separation_of(std::size_t g) const {
    return separation.size() == 1 ? separation[0] : separation.at(g);
  }
  double noise_of(std::size_t g) const { return noise.size() == 1 ? noise[0] : noise.at(g); }

  void validate() const {
    if (group_proportions.empty())
      throw std::invalid_argument("synth: group_proportions is empty");
    double sum = 0.0;
    for (double p : group_proportions) {
      if (!(p > 0.0)) throw std::invalid_argument("synth: every proportion must be > 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("synth: proportions must sum to 1 (got " + std::to_string(sum) + ")");
    const std::size_t m = group_proportions.size();
    if (separation.size() != 1 && separation.size() != m)
      throw std::invalid_argument("synth: separation needs 1 or m entries");
    if (noise.size() != 1 && noise.size() != m)
      throw std::invalid_argument("synth: noise needs 1 or m entries");
    for (double s : separation)
      if (!(s >= 0.0)) throw std::invalid_argument("synth: separation must be >= 0");
    for (double s : noise)
      if (!(s > 0.0)) throw std::invalid_argument("synth: noise must be > 0");
    if (n_classes < 1) throw std::invalid_argument("synth: n_classes must be >= 1");
    if (dims < 1) throw std::invalid_argument("synth: dims must be >= 1");
    if (n_classes > 2 && dims < static_cast<std::size_t>(n_classes))
      throw std::invalid_argument("synth: dims must be >= n_classes for more than two classes");
    if (label_mode == LabelMode::kGroupIsLabel && static_cast<std::size_t>(n_classes) != m)
      throw std::invalid_argument("synth: group-is-label mode needs n_classes == number of groups");
  }
};

/// Unit-separation simplex vertices (pairwise distance 1), centred at 0.
inline std::vector<std::vector<double>> simplex_means(int n_classes, std::size_t dims) {
  std::vector<std::vector<double>> means(static_cast<std::size_t>(n_classes),
                                         std::vector<double>(dims, 0.0));
  if (n_classes == 1) return means;
  if (n_classes == 2) {
    means[0][0] = -0.5;
    means[1][0] = 0.5;
    return means;
  }
  const double scale = 1.0 / std::sqrt(2.0);
  const double centroid = scale / n_classes;
  for (int c = 0; c < n_classes; ++c)
    for (std::size_t j = 0; j < static_cast<std::size_t>(n_classes); ++j)
      means[static_cast<std::size_t>(c)][j] = (static_cast<int>(j) == c ? scale : 0.0) - centroid;
  return means;
}

inline Dataset synth_gaussian_groups(const SynthSpec& spec) {
  spec.validate();
  const std::size_t m = spec.group_proportions.size();
  const auto counts = apportion(spec.group_proportions, spec.n_total);
  for (std::size_t g = 0; g < m; ++g)
    if (counts[g] == 0)
      throw std::invalid_argument("synth: group " + std::to_string(g) + " (proportion " +
                                  std::to_string(spec.group_proportions[g]) + ") rounds to 0 of " +
                                  std::to_string(spec.n_total) + " samples");

  const auto unit_means = simplex_means(spec.n_classes, spec.dims);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.dims = spec.dims;
  ds.num_groups = static_cast<int>(m);
  ds.num_classes = spec.n_classes;
  ds.source = "synthetic";
  ds.seed = spec.seed;
  for (std::size_t g = 0; g < m; ++g) ds.group_names.push_back(std::to_string(g));
  for (int c = 0; c < spec.n_classes; ++c) ds.label_names.push_back(std::to_string(c));
  ds.features.reserve(spec.n_total * spec.dims);

  for (std::size_t g = 0; g < m; ++g) {
    std::vector<int> cell_labels;
    if (spec.label_mode == LabelMode::kGroupIsLabel) {
      cell_labels.assign(counts[g], static_cast<int>(g));
    } else {
      std::vector<double> equal(static_cast<std::size_t>(spec.n_classes), 1.0);
      const auto per_class = apportion(equal, counts[g]);
      for (int c = 0; c < spec.n_classes; ++c)
        cell_labels.insert(cell_labels.end(), per_class[static_cast<std::size_t>(c)], c);
    }
    const double sep = spec.separation_of(g);
    const double sigma = spec.noise_of(g);
    for (int label : cell_labels) {
      const auto& mu = unit_means[static_cast<std::size_t>(label)];
      for (std::size_t j = 0; j < spec.dims; ++j)
        ds.features.push_back(sep * mu[j] + sigma * normal(rng));
      ds.groups.push_back(static_cast<int>(g));
      ds.labels.push_back(label);
    }
  }

  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset shuffled = ds.subset(order);
  shuffled.validate();
  return shuffled;
}

// ---------------------------------------------------------------------------
// CSV

/// Parse failure with the offending location. `row` is the 1-based line
/// number in the file (header = 1); 0 when not tied to a row.
class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& what, std::size_t row, std::string column)
      : std::runtime_error(what), row_(row), column_(std::move(column)) {}
  std::size_t row() const { return row_; }
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

struct CsvSchema {
  std::string group_column = "group";
  std::string label_column = "label";
  std::vector<std::string> feature_columns;  // empty: every other column
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

inline bool parse_integer(const std::string& s, long long& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stoll(s, &pos);
  } catch (...) {
    return false;
  }
  return pos == s.size();
}

// Integer-valued vocabularies sort numerically, everything else lexically.
inline std::vector<std::string> sorted_vocabulary(const std::vector<std::string>& values) {
  std::vector<std::string> vocab(values.begin(), values.end());
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  long long tmp = 0;
  const bool all_int = std::all_of(vocab.begin(), vocab.end(),
                                   [&](const std::string& v) { return parse_integer(v, tmp); });
  if (all_int) {
    std::sort(vocab.begin(), vocab.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  }
  return vocab;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "") {
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos)
    throw CsvError("csv: empty file" + (source.empty() ? "" : " '" + source + "'"), 0, "");
  const auto header = detail::split_csv_line(line);
  auto find_column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw CsvError("csv: missing column '" + name + "'", 1, name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t group_col = find_column(schema.group_column);
  const std::size_t label_col = find_column(schema.label_column);
  std::vector<std::size_t> feature_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != group_col && c != label_col) feature_cols.push_back(c);
  } else {
    for (const auto& name : schema.feature_columns) feature_cols.push_back(find_column(name));
  }
  if (feature_cols.empty()) throw CsvError("csv: no feature columns", 1, "");

  Dataset ds;
  ds.dims = feature_cols.size();
  ds.source = source;
  std::vector<std::string> raw_groups, raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw CsvError("csv: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                         " cells, header has " + std::to_string(header.size()),
                     line_no, "");
    for (std::size_t c : feature_cols) {
      const std::string& cell = cells[c];
      double value = 0.0;
      std::size_t pos = 0;
      bool ok = !cell.empty();
      if (ok) {
        try {
          value = std::stod(cell, &pos);
        } catch (...) {
          ok = false;
        }
      }
      if (!ok || pos != cell.size() || !std::isfinite(value))
        throw CsvError("csv: row " + std::to_string(line_no) + ", column '" + header[c] +
                           "': not a finite number ('" + cell + "')",
                       line_no, header[c]);
      ds.features.push_back(value);
    }
    raw_groups.push_back(cells[group_col]);
    raw_labels.push_back(cells[label_col]);
  }
  if (raw_labels.empty()) throw CsvError("csv: no data rows", 0, "");

  auto encode = [](const std::vector<std::string>& raw, std::vector<std::string>& vocab,
                   std::vector<int>& ids) {
    vocab = detail::sorted_vocabulary(raw);
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < vocab.size(); ++i) index[vocab[i]] = static_cast<int>(i);
    ids.reserve(raw.size());
    for (const auto& v : raw) ids.push_back(index.at(v));
  };
  encode(raw_groups, ds.group_names, ds.groups);
  encode(raw_labels, ds.label_names, ds.labels);
  ds.num_groups = static_cast<int>(ds.group_names.size());
  ds.num_classes = static_cast<int>(ds.label_names.size());
  ds.validate();
  return ds;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw CsvError("csv: cannot open '" + path + "'", 0, "");
  return parse_csv(in, schema, path);
}

/// Writes `x0..x{d-1},group,label` with full-precision features.
inline void write_csv(std::ostream& out, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.dims; ++j) out << 'x' << j << ',';
  out << "group,label\n";
  auto name = [](const std::vector<std::string>& names, int id) {
    return names.empty() ? std::to_string(id) : names[static_cast<std::size_t>(id)];
  };
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) out << detail::format_double(v) << ',';
    out << name(ds.group_names, ds.groups[i]) << ',' << name(ds.label_names, ds.labels[i]) << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(out, ds);
}

inline nlohmann::json manifest_json(const Dataset& ds) {
  nlohmann::json j;
  j["n"] = ds.size();
  j["d"] = ds.dims;
  j["m"] = ds.num_groups;
  j["C"] = ds.num_classes;
  j["group_names"] = ds.group_names;
  j["label_names"] = ds.label_names;
  j["group_sizes"] = ds.group_sizes();
  j["source"] = ds.source;
  if (ds.seed) j["seed"] = *ds.seed;
  else j["seed"] = nullptr;
  return j;
}

// ---------------------------------------------------------------------------
// Splitting and resampling

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};

/// Stratified split by (group, label) cell. Cells with >= 2 samples appear on
/// both sides; singleton cells go to train with a warning. The train size is
/// round(fraction * n) up to the per-cell clamps.
inline SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must be in (0, 1)");
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < ds.size(); ++i) cells[{ds.groups[i], ds.labels[i]}].push_back(i);

  SplitResult out;
  std::vector<std::vector<std::size_t>*> cell_list;
  std::vector<double> exact;
  std::vector<std::size_t> take, lo, hi;
  for (auto& [key, idx] : cells) {
    const double e = train_fraction * static_cast<double>(idx.size());
    const std::size_t l = idx.size() >= 2 ? 1 : idx.size();
    const std::size_t h = idx.size() >= 2 ? idx.size() - 1 : idx.size();
    if (idx.size() == 1)
      out.warnings.push_back("split: cell (group " + std::to_string(key.first) + ", label " +
                             std::to_string(key.second) + ") has 1 sample; assigned to train");
    cell_list.push_back(&idx);
    exact.push_back(e);
    lo.push_back(l);
    hi.push_back(h);
    take.push_back(std::clamp(static_cast<std::size_t>(std::floor(e)), l, h));
  }
  // Hit the global target with largest remainders while staying inside clamps.
  const auto target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ds.size())));
  std::size_t total = std::accumulate(take.begin(), take.end(), std::size_t{0});
  std::vector<std::size_t> order(take.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return exact[a] - static_cast<double>(take[a]) > exact[b] - static_cast<double>(take[b]);
  });
  for (std::size_t c : order) {
    if (total >= target) break;
    if (take[c] < hi[c] && static_cast<double>(take[c]) < exact[c] + 1.0) {
      ++take[c];
      ++total;
    }
  }
  for (auto it = order.rbegin(); it != order.rend() && total > target; ++it) {
    const std::size_t c = *it;
    if (take[c] > lo[c] && static_cast<double>(take[c]) > exact[c] - 1.0) {
      --take[c];
      --total;
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t c = 0; c < cell_list.size(); ++c) {
    auto idx = *cell_list[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  out.train = ds.subset(train_idx);
  out.test = ds.subset(test_idx);
  for (int g = 0; g < ds.num_groups; ++g)
    if (!out.test.has_group(g))
      out.warnings.push_back("split: group " + std::to_string(g) + " absent from test split");
  return out;
}

/// Repeats every sample of `group` `factor` times and shuffles the result.
inline Dataset upsample_group(const Dataset& ds, int group, int factor, std::uint64_t seed) {
  if (factor < 1) throw std::invalid_argument("upsample: factor must be >= 1");
  if (group < 0 || group >= ds.num_groups || !ds.has_group(group))
    throw std::invalid_argument("upsample: unknown group id " + std::to_string(group));
  std::vector<std::size_t> idx;
  idx.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int copies = ds.groups[i] == group ? factor : 1;
    idx.insert(idx.end(), static_cast<std::size_t>(copies), i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return ds.subset(idx);
}

}  // namespace fairprune
