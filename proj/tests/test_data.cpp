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

#include <map>
#include <set>
#include <random>
#include <sstream>

#include "fairprune/data.hpp"

namespace fairprune {
namespace {

SynthSpec five_groups() {
  SynthSpec s;
  // The listed shares total 0.98; rescaled so they sum to 1.
  s.group_proportions = {0.42 / 0.98, 0.19 / 0.98, 0.15 / 0.98, 0.15 / 0.98, 0.07 / 0.98};
  s.n_total = 980;
  s.dims = 3;
  s.n_classes = 2;
  s.seed = 7;
  return s;
}

TEST(Synth, FiveGroupSizes) {
  const auto ds = synth_gaussian_groups(five_groups());
  EXPECT_EQ(ds.group_sizes(), (std::vector<std::size_t>{420, 190, 150, 150, 70}));
  EXPECT_EQ(ds.size(), 980u);
}

TEST(Synth, SingleGroup) {
  SynthSpec s;
  s.group_proportions = {1.0};
  s.n_total = 10;
  const auto ds = synth_gaussian_groups(s);
  EXPECT_EQ(ds.num_groups, 1);
  EXPECT_EQ(ds.group_sizes(), std::vector<std::size_t>{10});
}

TEST(Synth, SameSeedIdentical) {
  const auto a = synth_gaussian_groups(five_groups());
  const auto b = synth_gaussian_groups(five_groups());
  EXPECT_EQ(a, b);
  std::ostringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  auto other = five_groups();
  other.seed = 8;
  EXPECT_FALSE(a == synth_gaussian_groups(other));
}

TEST(Synth, GroupRoundingToZeroRejected) {
  SynthSpec s;
  s.group_proportions = {0.999, 0.001};
  s.n_total = 10;
  try {
    synth_gaussian_groups(s);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("rounds to 0"), std::string::npos);
  }
}

TEST(Synth, InvalidProportions) {
  SynthSpec s;
  s.group_proportions = {0.5, 0.4};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.group_proportions = {1.2, -0.2};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.group_proportions = {0.5, 0.5 + 5e-10};
  EXPECT_NO_THROW(s.validate());
  s.noise = {0.0};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Synth, SimplexMeansEquidistant) {
  for (int C : {2, 3, 5}) {
    const auto mu = simplex_means(C, 6);
    for (int a = 0; a < C; ++a)
      for (int b = a + 1; b < C; ++b) {
        double d = 0.0;
        for (std::size_t j = 0; j < 6; ++j) d += std::pow(mu[a][j] - mu[b][j], 2);
        EXPECT_NEAR(std::sqrt(d), 1.0, 1e-12) << "C=" << C;
      }
  }
}

TEST(Synth, EmpiricalMeanSeparation) {
  SynthSpec s;
  s.group_proportions = {1.0};
  s.separation = {4.0};
  s.noise = {0.05};
  s.n_classes = 3;
  s.dims = 3;
  s.n_total = 3000;
  const auto ds = synth_gaussian_groups(s);
  std::vector<std::vector<double>> mean(3, std::vector<double>(3, 0.0));
  std::vector<int> count(3, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++count[ds.labels[i]];
    for (std::size_t j = 0; j < 3; ++j) mean[ds.labels[i]][j] += ds.row(i)[j];
  }
  for (int c = 0; c < 3; ++c)
    for (auto& v : mean[c]) v /= count[c];
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      double d = 0.0;
      for (std::size_t j = 0; j < 3; ++j) d += std::pow(mean[a][j] - mean[b][j], 2);
      EXPECT_NEAR(std::sqrt(d), 4.0, 0.02);
    }
}

TEST(Synth, GroupIsLabelMode) {
  auto s = five_groups();
  s.label_mode = LabelMode::kGroupIsLabel;
  s.n_classes = 5;
  s.dims = 5;
  const auto ds = synth_gaussian_groups(s);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(ds.labels[i], ds.groups[i]);
  s.n_classes = 4;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Synth, RandomSpecsSatisfyInvariants) {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int t = 0; t < 1000; ++t) {
    SynthSpec s;
    const int m = 1 + static_cast<int>(rng() % 5);
    double sum = 0.0;
    for (int g = 0; g < m; ++g) {
      s.group_proportions.push_back(u(rng));
      sum += s.group_proportions.back();
    }
    for (double& p : s.group_proportions) p /= sum;
    s.n_classes = 1 + static_cast<int>(rng() % 4);
    s.dims = static_cast<std::size_t>(std::max(2, s.n_classes)) + rng() % 3;
    s.n_total = 40 + rng() % 200;
    s.separation = {u(rng) * 5};
    s.noise = {u(rng)};
    s.seed = rng();
    const auto ds = synth_gaussian_groups(s);
    ASSERT_NO_THROW(ds.validate());
    ASSERT_EQ(ds.size(), s.n_total);
  }
}

TEST(Apportion, LargestRemainderTiesToLowerIndex) {
  EXPECT_EQ(apportion(std::vector<double>{1, 1, 1}, 10), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(apportion(std::vector<double>{1, 1}, 3), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(apportion(std::vector<double>{0.7, 0.3}, 7), (std::vector<std::size_t>{5, 2}));
}

TEST(Dataset, ValidateCatchesBrokenInvariants) {
  Dataset ds;
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  ds.dims = 1;
  ds.features = {1.0, 2.0};
  ds.groups = {0, 1};
  ds.labels = {0, 0};
  ds.num_groups = 3;
  ds.num_classes = 1;
  EXPECT_THROW(ds.validate(), std::invalid_argument);  // group 2 missing
  EXPECT_NO_THROW(ds.validate(false));
  ds.num_groups = 2;
  ds.features[1] = std::nan("");
  EXPECT_THROW(ds.validate(), std::invalid_argument);
  ds.features[1] = 2.0;
  ds.labels[0] = 1;
  EXPECT_THROW(ds.validate(), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// CSV

TEST(Csv, LexicalGroupMapping) {
  std::istringstream in("x,group,label\n1.0,M,yes\n2.0,F,no\n3.0,M,no\n");
  const auto ds = parse_csv(in, {});
  EXPECT_EQ(ds.group_names, (std::vector<std::string>{"F", "M"}));
  EXPECT_EQ(ds.groups, (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(ds.label_names, (std::vector<std::string>{"no", "yes"}));
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0, 0}));
  EXPECT_EQ(ds.dims, 1u);
}

TEST(Csv, IntegerVocabularySortsNumerically) {
  std::istringstream in("x,group,label\n1,10,0\n2,2,1\n3,1,0\n");
  const auto ds = parse_csv(in, {});
  EXPECT_EQ(ds.group_names, (std::vector<std::string>{"1", "2", "10"}));
}

TEST(Csv, NanFeatureNamesCell) {
  std::istringstream in("a,b,group,label\n1,2,F,0\n3,nan,M,1\n");
  try {
    parse_csv(in, {});
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_EQ(e.column(), "b");
  }
}

TEST(Csv, NonNumericFeature) {
  std::istringstream in("a,group,label\nabc,F,0\n");
  EXPECT_THROW(parse_csv(in, {}), CsvError);
}

TEST(Csv, MissingColumn) {
  std::istringstream in("a,grp,label\n1,F,0\n");
  try {
    parse_csv(in, {});
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_EQ(e.column(), "group");
  }
}

TEST(Csv, EmptyFile) {
  std::istringstream in("");
  EXPECT_THROW(parse_csv(in, {}), CsvError);
  std::istringstream header_only("a,group,label\n");
  EXPECT_THROW(parse_csv(header_only, {}), CsvError);
}

TEST(Csv, ExplicitSchemaAndQuotes) {
  std::istringstream in("id,\"f,1\",g,y,f2\n9,1.5,\"A\",1,2.5\n8,0.5,B,0,-1\n");
  CsvSchema schema;
  schema.group_column = "g";
  schema.label_column = "y";
  schema.feature_columns = {"f,1", "f2"};
  const auto ds = parse_csv(in, schema);
  EXPECT_EQ(ds.dims, 2u);
  EXPECT_EQ(ds.features, (std::vector<double>{1.5, 2.5, 0.5, -1.0}));
}

TEST(Csv, RoundTrip) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto s = five_groups();
    s.seed = seed;
    const auto ds = synth_gaussian_groups(s);
    std::stringstream buf;
    write_csv(buf, ds);
    const auto back = parse_csv(buf, {});
    EXPECT_EQ(back, ds);
    EXPECT_EQ(back.group_names, ds.group_names);
  }
}

TEST(Csv, RoundTripManyGroups) {
  SynthSpec s;
  s.group_proportions.assign(12, 1.0 / 12);
  s.n_total = 240;
  const auto ds = synth_gaussian_groups(s);
  std::stringstream buf;
  write_csv(buf, ds);
  EXPECT_EQ(parse_csv(buf, {}), ds);
}

TEST(Manifest, Fields) {
  const auto ds = synth_gaussian_groups(five_groups());
  const auto j = manifest_json(ds);
  EXPECT_EQ(j["n"], 980);
  EXPECT_EQ(j["m"], 5);
  EXPECT_EQ(j["C"], 2);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["group_names"].size(), 5u);
}

// ---------------------------------------------------------------------------
// Split

TEST(Split, Sizes) {
  SynthSpec s;
  s.group_proportions = {0.5, 0.5};
  s.n_total = 100;
  const auto ds = synth_gaussian_groups(s);
  const auto sp = split(ds, 0.8, 3);
  EXPECT_EQ(sp.train.size(), 80u);
  EXPECT_EQ(sp.test.size(), 20u);
  EXPECT_TRUE(sp.warnings.empty());
}

TEST(Split, StratificationWithinOneSample) {
  auto s = five_groups();
  s.n_classes = 3;
  s.n_total = 997;
  const auto ds = synth_gaussian_groups(s);
  for (double f : {0.5, 0.7, 0.8, 0.9}) {
    const auto sp = split(ds, f, 11);
    std::map<std::pair<int, int>, int> total, train;
    for (std::size_t i = 0; i < ds.size(); ++i) ++total[{ds.groups[i], ds.labels[i]}];
    for (std::size_t i = 0; i < sp.train.size(); ++i) ++train[{sp.train.groups[i], sp.train.labels[i]}];
    for (const auto& [cell, n] : total) {
      EXPECT_LE(std::abs(train[cell] - f * n), 1.0 + 1e-9);
      EXPECT_GE(train[cell], 1);
      EXPECT_LT(train[cell], n);
    }
  }
}

TEST(Split, Deterministic) {
  const auto ds = synth_gaussian_groups(five_groups());
  const auto a = split(ds, 0.75, 5);
  const auto b = split(ds, 0.75, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_FALSE(a.train == split(ds, 0.75, 6).train);
}

TEST(Split, SingletonCellGoesToTrain) {
  Dataset ds;
  ds.dims = 1;
  ds.num_groups = 2;
  ds.num_classes = 1;
  for (int i = 0; i < 9; ++i) {
    ds.features.push_back(i);
    ds.groups.push_back(0);
    ds.labels.push_back(0);
  }
  ds.features.push_back(99);
  ds.groups.push_back(1);
  ds.labels.push_back(0);
  const auto sp = split(ds, 0.5, 1);
  EXPECT_TRUE(sp.train.has_group(1));
  EXPECT_FALSE(sp.test.has_group(1));
  EXPECT_FALSE(sp.warnings.empty());
}

TEST(Split, BadFraction) {
  const auto ds = synth_gaussian_groups(five_groups());
  EXPECT_THROW(split(ds, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(split(ds, 1.0, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Upsampling

std::multiset<std::vector<double>> rows_of(const Dataset& ds) {
  std::multiset<std::vector<double>> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.row(i);
    std::vector<double> v(r.begin(), r.end());
    v.push_back(ds.groups[i]);
    v.push_back(ds.labels[i]);
    out.insert(v);
  }
  return out;
}

TEST(Upsample, FactorOneSameMultiset) {
  const auto ds = synth_gaussian_groups(five_groups());
  EXPECT_EQ(rows_of(upsample_group(ds, 4, 1, 3)), rows_of(ds));
}

TEST(Upsample, MultipliesOnlyTargetGroup) {
  SynthSpec s;
  s.group_proportions = {0.8, 0.2};
  s.n_total = 100;
  const auto ds = synth_gaussian_groups(s);
  const auto up = upsample_group(ds, 1, 5, 9);
  EXPECT_EQ(up.group_sizes(), (std::vector<std::size_t>{80, 100}));
  double sum = 0.0;
  for (auto n : up.group_sizes()) sum += static_cast<double>(n) / static_cast<double>(up.size());
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(upsample_group(ds, 1, 5, 9), up);
}

TEST(Upsample, Errors) {
  const auto ds = synth_gaussian_groups(five_groups());
  EXPECT_THROW(upsample_group(ds, 7, 2, 1), std::invalid_argument);
  EXPECT_THROW(upsample_group(ds, 0, 0, 1), std::invalid_argument);
}

}  // namespace
}  // namespace fairprune
