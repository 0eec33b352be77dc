// Copyright 2026 The fbde Authors.
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

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fbde/fbde.hpp"

namespace {

TEST(Csv, QuotesCrlfAndEmbeddedNewlines) {
  const auto t = fbde::parse_csv("a,b,c\r\n1,\"x, y\",\"he said \"\"hi\"\"\"\r\n2,\"two\nlines\",\r\n");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "x, y");
  EXPECT_EQ(t.rows[0][2], "he said \"hi\"");
  EXPECT_EQ(t.rows[1][1], "two\nlines");
  EXPECT_EQ(t.rows[1][2], "");
}

TEST(Csv, NoTrailingNewlineAndRaggedRows) {
  const auto t = fbde::parse_csv("x,y\n1,2\n3,4");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "4");
  EXPECT_THROW(fbde::parse_csv("x,y\n1,2,3\n"), fbde::Error);
  EXPECT_THROW(fbde::parse_csv("x,y\n\"open\n"), fbde::Error);
}

fbde::CsvSpec spec_for(std::string sensitive) {
  fbde::CsvSpec s;
  s.sensitive = std::move(sensitive);
  return s;
}

TEST(LoadCsv, BinaryColumnHasCardinalityTwo) {
  const auto t = fbde::parse_csv("g,f\nm,0\nf,1\n");
  const auto d = fbde::load_csv(t, spec_for("g"));
  const auto s = d.dataset.schema();
  EXPECT_EQ(s[0].cardinality, 2);
  EXPECT_EQ(s[1].cardinality, 2);
  EXPECT_EQ(s.sensitive_index(), 0u);
  EXPECT_EQ(d.dataset.size(), 2u);
}

TEST(LoadCsv, ContinuousColumnBinsIntoRange) {
  std::ostringstream text;
  text << "x,a\n";
  for (int i = 0; i < 1000; ++i) {
    text << (std::sin(i * 0.37) * 3.5 + 0.01) << ',' << (i % 3 == 0 ? "u" : "v") << '\n';
  }
  auto spec = spec_for("a");
  spec.bins = 50;
  const auto d = fbde::load_csv(fbde::parse_csv(text.str()), spec);
  ASSERT_EQ(d.encoding.columns[0].kind, fbde::ColumnKind::kContinuous);
  EXPECT_EQ(d.dataset.schema()[0].cardinality, 50);
  std::set<int> seen;
  for (std::size_t i = 0; i < d.dataset.size(); ++i) {
    const int code = d.dataset.row(i)[0];
    ASSERT_GE(code, 0);
    ASSERT_LT(code, 50);
    seen.insert(code);
  }
  EXPECT_TRUE(seen.count(0) && seen.count(49));
}

TEST(LoadCsv, CategoricalRoundTrip) {
  const auto t = fbde::parse_csv("color,sex,label\nred,F,yes\nblue,M,no\ngreen,F,yes\nred,M,no\n");
  auto spec = spec_for("sex");
  spec.target = "label";
  const auto d = fbde::load_csv(t, spec);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    EXPECT_EQ(d.encoding.decode_row(d.dataset.row(r)), t.rows[r]);
  }
  EXPECT_EQ(d.dataset.schema().target_index(), std::optional<std::size_t>(2));
}

TEST(LoadCsv, MissingValueReportsRow) {
  const auto t = fbde::parse_csv("x,a\n1.5,u\nnan,v\n2.5,u\n");
  try {
    fbde::load_csv(t, spec_for("a"));
    FAIL() << "expected an error";
  } catch (const fbde::Error& e) {
    EXPECT_NE(std::string(e.what()).find("NaN in column 'x' at row 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(fbde::load_csv(fbde::parse_csv("x,a\n1,u\n,v\n"), spec_for("a")), fbde::Error);
}

TEST(LoadCsv, UnseenCategoryAndBadSpec) {
  const auto train = fbde::load_csv(fbde::parse_csv("c,a\np,0\nq,1\n"), spec_for("a"));
  EXPECT_THROW(fbde::encode_csv(fbde::parse_csv("c,a\nr,0\n"), train.encoding), fbde::Error);
  EXPECT_THROW(fbde::load_csv(fbde::parse_csv("c,a\np,0\n"), spec_for("missing")), fbde::Error);
  auto cont = spec_for("a");
  cont.continuous = {"a"};
  EXPECT_THROW(fbde::load_csv(fbde::parse_csv("c,a\np,0.5\nq,1.5\n"), cont), fbde::Error);
}

TEST(Binner, MonotoneAndClamped) {
  const fbde::Binner b(-1.0, 3.0, 8);
  int last = 0;
  for (double x = -5.0; x <= 7.0; x += 0.001) {
    const int code = b(x);
    ASSERT_GE(code, last);
    ASSERT_GE(code, 0);
    ASSERT_LT(code, 8);
    last = code;
  }
  EXPECT_EQ(b(-1.0), 0);
  EXPECT_EQ(b(3.0), 7);
  EXPECT_EQ(b(0.0), 2);
  EXPECT_EQ(b.edges().size(), 9u);
  EXPECT_EQ(fbde::Binner(2.0, 2.0, 5)(2.0), 0);
  EXPECT_THROW(fbde::Binner(0.0, 1.0, 0), fbde::Error);
}

TEST(Kfold, Partition) {
  const auto two = fbde::kfold_indices(4, 2, 0);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].size(), 2u);
  EXPECT_EQ(two[1].size(), 2u);

  const auto five = fbde::kfold_indices(5000, 5, 0);
  std::vector<int> hits(5000, 0);
  for (const auto& f : five) {
    EXPECT_EQ(f.size(), 1000u);
    EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
    for (auto i : f) {
      ++hits[i];
    }
  }
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  EXPECT_EQ(five, fbde::kfold_indices(5000, 5, 0));
  EXPECT_NE(five, fbde::kfold_indices(5000, 5, 1));

  const auto uneven = fbde::kfold_indices(7, 3, 2);
  std::size_t total = 0;
  for (const auto& f : uneven) {
    EXPECT_GE(f.size(), 2u);
    EXPECT_LE(f.size(), 3u);
    total += f.size();
  }
  EXPECT_EQ(total, 7u);
  EXPECT_THROW(fbde::kfold_indices(3, 5, 0), fbde::Error);
  EXPECT_THROW(fbde::kfold_indices(3, 1, 0), fbde::Error);
}

TEST(Kfold, SplitsDataset) {
  fbde::Dataset d(fbde::mixture_schema(4));
  for (int i = 0; i < 20; ++i) {
    const int row[2] = {i % 4, i % 2};
    d.add_row(row);
  }
  const auto splits = fbde::kfold(d, 4, 3);
  ASSERT_EQ(splits.size(), 4u);
  for (const auto& s : splits) {
    EXPECT_EQ(s.train.size() + s.test.size(), 20u);
    EXPECT_EQ(s.test.size(), 5u);
  }
}

TEST(BuildInitial, UniformOverGroupsAndSmoothing) {
  fbde::Dataset d(fbde::mixture_schema(5));
  const int rows[][2] = {{0, 0}, {0, 0}, {1, 0}, {4, 1}, {2, 1}, {2, 1}, {2, 1}, {3, 1}, {3, 1}, {3, 1}};
  for (const auto& r : rows) {
    d.add_row(r);
  }
  const auto q0 = fbde::build_initial(d, 1.0);
  EXPECT_EQ(fbde::representation_rate(q0.joint()), 1.0);
  for (std::size_t g = 0; g < 2; ++g) {
    for (double v : q0.conditional(g)) {
      EXPECT_GT(v, 0.0);
    }
  }
  EXPECT_NEAR(q0.conditional(0)[0], 3.0 / 8.0, 1e-15);
  EXPECT_NEAR(q0.conditional(1)[3], 4.0 / 12.0, 1e-15);
  const auto raw = fbde::build_initial(d, 0.0);
  EXPECT_EQ(raw.conditional(0)[4], 0.0);
  EXPECT_NEAR(raw.conditional(1)[2], 3.0 / 7.0, 1e-15);

  fbde::Dataset one(fbde::mixture_schema(3));
  const int r[2] = {1, 0};
  one.add_row(r);
  EXPECT_THROW(fbde::build_initial(one, 1.0), fbde::Error);
}

TEST(Mixture, DegenerateAndDeterministic) {
  fbde::MixtureParams p;
  p.s = 1.0;
  p.n = 2000;
  for (const auto& pt : fbde::generate_mixture(p)) {
    ASSERT_EQ(pt.a, 1);
  }
  p.s = 0.9;
  const auto a = fbde::generate_mixture(p);
  const auto b = fbde::generate_mixture(p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].x, b[i].x);
    ASSERT_EQ(a[i].a, b[i].a);
  }
  p.s = 1.5;
  EXPECT_THROW(fbde::generate_mixture(p), fbde::Error);
}

TEST(Mixture, GroupShareAndMoments) {
  fbde::MixtureParams p;
  p.n = 100000;
  p.seed = 3;
  const auto pts = fbde::generate_mixture(p);
  double n1 = 0.0;
  double sum[2] = {0.0, 0.0};
  double sq[2] = {0.0, 0.0};
  double cnt[2] = {0.0, 0.0};
  for (const auto& pt : pts) {
    n1 += pt.a;
    sum[pt.a] += pt.x;
    sq[pt.a] += pt.x * pt.x;
    cnt[pt.a] += 1.0;
  }
  const double n = static_cast<double>(p.n);
  EXPECT_NEAR(n1 / n, p.s, 3.0 * std::sqrt(p.s * (1 - p.s) / n));
  for (int a = 0; a < 2; ++a) {
    const double mean = sum[a] / cnt[a];
    const double var = sq[a] / cnt[a] - mean * mean;
    const double sd = p.sigma[static_cast<std::size_t>(a)];
    EXPECT_NEAR(mean, p.mu[static_cast<std::size_t>(a)], 4.0 * sd / std::sqrt(cnt[a]));
    // Var of the sample variance for a normal: 2 sigma^4 / n.
    EXPECT_NEAR(var, sd * sd, 4.0 * std::sqrt(2.0 / cnt[a]) * sd * sd);
  }
}

TEST(Mixture, CsvAndBinning) {
  fbde::MixtureParams p;
  p.n = 50;
  const auto pts = fbde::generate_mixture(p);
  std::ostringstream out;
  fbde::write_mixture_csv(out, pts);
  const auto t = fbde::parse_csv(out.str());
  ASSERT_EQ(t.rows.size(), 50u);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_EQ(std::stod(t.rows[i][0]), pts[i].x);
  }
  std::vector<double> xs;
  for (const auto& pt : pts) {
    xs.push_back(pt.x);
  }
  const auto d = fbde::bin_mixture(pts, fbde::Binner::fit(xs, 10));
  EXPECT_EQ(d.size(), 50u);
  EXPECT_EQ(d.schema().sensitive_index(), 1u);
}

}  // namespace
