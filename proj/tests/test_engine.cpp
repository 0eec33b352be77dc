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
#include <vector>

#include <gtest/gtest.h>

#include "fbde/fbde.hpp"
#include "oracle.hpp"

namespace {

using fbde::FitConfig;
using fbde::kLn2;
using fbde::LeveragingScheme;

TEST(Leverage, SpecExamples) {
  const long double expected = std::log(1.0L / 0.9L) / (4.0L * std::log(2.0L));
  EXPECT_NEAR(fbde::leverage(LeveragingScheme::exact(0.9), 1), static_cast<double>(expected), 1e-16);
  EXPECT_NEAR(fbde::leverage(LeveragingScheme::relative(0.9), 2), static_cast<double>(expected), 1e-16);
  EXPECT_NEAR(fbde::leverage(LeveragingScheme::exact(0.9), 1), 0.03800, 5e-6);
  EXPECT_NEAR(fbde::leverage(LeveragingScheme::exact(0.7), 3), -std::log(0.7) / (kLn2 * 16.0), 1e-16);
  EXPECT_EQ(fbde::leverage(LeveragingScheme::constant_theta(0.25), 7), 0.25);
  EXPECT_LT(fbde::leverage(LeveragingScheme::exact(1 - 1e-12), 1), 1e-12);
  for (double bad : {0.0, 1.0, -0.5, 1.5}) {
    EXPECT_THROW(fbde::leverage(LeveragingScheme::exact(bad), 1), fbde::Error);
    EXPECT_THROW(fbde::leverage(LeveragingScheme::relative(bad), 1), fbde::Error);
  }
  EXPECT_THROW(fbde::leverage(LeveragingScheme::exact(0.5), 0), fbde::Error);
}

TEST(Leverage, PositiveForTauBelowOne) {
  for (double tau : {0.1, 0.5, 0.9, 0.999}) {
    for (std::size_t t = 1; t <= 40; ++t) {
      EXPECT_GT(fbde::leverage(LeveragingScheme::exact(tau), t), 0.0);
      EXPECT_GT(fbde::leverage(LeveragingScheme::relative(tau), t), 0.0);
    }
  }
}

TEST(RrLowerBound, SpecExamples) {
  for (std::size_t t : {1u, 5u, 30u}) {
    EXPECT_EQ(fbde::rr_lower_bound(LeveragingScheme::exact(0.7), t), 0.7);
  }
  EXPECT_NEAR(fbde::rr_lower_bound(LeveragingScheme::relative(0.9), 5), std::pow(0.9, 1 + std::log(5.0)), 1e-15);
  EXPECT_NEAR(fbde::rr_lower_bound(LeveragingScheme::relative(0.9), 5), 0.760, 5e-4);
  EXPECT_EQ(fbde::rr_lower_bound(LeveragingScheme::relative(0.6), 1), 0.6);
  EXPECT_NEAR(fbde::rr_lower_bound(LeveragingScheme::relative(0.7), 10), 0.308, 5e-4);
  EXPECT_NEAR(fbde::rr_lower_bound(LeveragingScheme::constant_theta(0.1), 3), std::exp(-2 * kLn2 * 0.3), 1e-15);
}

TEST(MollifierSize, SpecExamples) {
  EXPECT_NEAR(fbde::mollifier_size(LeveragingScheme::exact(0.8), 9), -std::log(0.8), 1e-16);
  EXPECT_NEAR(fbde::mollifier_size(LeveragingScheme::relative(0.8), 1), -std::log(0.8), 1e-16);
  EXPECT_NEAR(fbde::mollifier_size(LeveragingScheme::relative(0.9), 10), 0.3480, 5e-5);
}

fbde::Dataset draw(const fbde::TabularDensity& t, std::size_t n, std::uint64_t seed) {
  fbde::Rng rng(seed);
  fbde::Dataset d(t.schema());
  std::vector<double> cdf(t.mass().size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    acc += t[i];
    cdf[i] = acc;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * acc;
    const auto cell = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    d.add_row(t.schema().coords_of(std::min(cell, cdf.size() - 1)));
  }
  return d;
}

struct Problem {
  fbde::AttributeSchema schema;
  fbde::Dataset p;
  fbde::InitialDensity q0;
};

Problem random_problem(oracle::Rng& rng, std::size_t n = 300) {
  auto s = oracle::random_schema(rng);
  const fbde::TabularDensity truth(s, oracle::simplex(rng, s.cell_count(), 0.05));
  auto p = draw(truth, n, rng());
  return {s, p, oracle::random_initial(rng, s)};
}

TEST(Fit, ZeroRoundsReturnsQ0) {
  oracle::Rng rng(1);
  const auto pr = random_problem(rng);
  FitConfig cfg;
  cfg.rounds = 0;
  const auto res = fbde::fbde_fit(pr.p, pr.q0, cfg);
  EXPECT_TRUE(res.trace.empty());
  EXPECT_EQ(res.model.round_count(), 0u);
  const auto a = res.model.joint();
  const auto b = pr.q0.joint();
  for (std::size_t c = 0; c < a.mass().size(); ++c) {
    EXPECT_EQ(a[c], b[c]);
  }
}

TEST(Fit, TauNearOneSticksToQ0) {
  oracle::Rng rng(2);
  const auto pr = random_problem(rng);
  FitConfig cfg;
  cfg.scheme = LeveragingScheme::exact(1 - 1e-12);
  const auto res = fbde::fbde_fit(pr.p, pr.q0, cfg);
  const auto a = res.model.joint();
  const auto b = pr.q0.joint();
  for (std::size_t c = 0; c < a.mass().size(); ++c) {
    EXPECT_NEAR(a[c], b[c], 1e-9);
  }
}

TEST(Fit, TraceInvariantsAndDeterminism) {
  oracle::Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pr = random_problem(rng);
    FitConfig cfg;
    cfg.rounds = 8;
    cfg.scheme = trial % 2 ? LeveragingScheme::relative(0.6) : LeveragingScheme::exact(0.6);
    cfg.negatives = trial % 3 == 0 ? fbde::NegativeSource::kReweightedPool : fbde::NegativeSource::kFresh;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const auto a = fbde::fbde_fit(pr.p, pr.q0, cfg);
    const auto b = fbde::fbde_fit(pr.p, pr.q0, cfg);
    ASSERT_EQ(a.trace.size(), 8u);
    const auto target = fbde::fit_empirical(pr.p, 0.0);
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
      const auto& row = a.trace[k];
      EXPECT_EQ(row.t, k + 1);
      EXPECT_GE(row.rr, row.rr_lower_bound - 1e-9);
      EXPECT_EQ(row.theta, fbde::leverage(cfg.scheme, row.t));
      EXPECT_EQ(row.rr, b.trace[k].rr);
      EXPECT_EQ(row.kl_train, b.trace[k].kl_train);
      const auto joint = a.model.truncated(k + 1).joint();
      EXPECT_NEAR(*row.kl_train, fbde::kl_divergence(target, joint), 1e-12);
      EXPECT_NEAR(row.rr, fbde::representation_rate(joint), 1e-15);
    }
    EXPECT_EQ(fbde::model_to_json({a.model, cfg.scheme, std::nullopt, {}, ""}).dump(),
              fbde::model_to_json({b.model, cfg.scheme, std::nullopt, {}, ""}).dump());
  }
}

TEST(Fit, Errors) {
  oracle::Rng rng(4);
  const auto pr = random_problem(rng);
  FitConfig cfg;
  cfg.scheme = LeveragingScheme::exact(1.0);
  EXPECT_THROW(fbde::fbde_fit(pr.p, pr.q0, cfg), fbde::Error);
  cfg.scheme = LeveragingScheme::exact(0.5);
  cfg.tree.c_bound = 1.0;
  EXPECT_THROW(fbde::fbde_fit(pr.p, pr.q0, cfg), fbde::Error);
  cfg = FitConfig{};
  cfg.kl_eval = fbde::KlEval::kHeldOut;
  EXPECT_THROW(fbde::fbde_fit(pr.p, pr.q0, cfg), fbde::Error);
}

// Fairness holds for any bounded statistic, trained or not.
template <class Scheme>
void run_fairness_suite(Scheme make, std::uint64_t seed) {
  oracle::Rng rng(seed);
  const double taus[] = {0.5, 0.7, 0.9};
  for (int trial = 0; trial < 200; ++trial) {
    const auto pr = random_problem(rng, 50);
    const double tau = taus[trial % 3];
    FitConfig cfg;
    cfg.scheme = make(tau);
    cfg.rounds = static_cast<std::size_t>(oracle::randint(rng, 1, 30));
    cfg.kl_eval = fbde::KlEval::kNone;
    const int style = trial % 3;
    auto learner = [&](const fbde::Dataset&, const fbde::Dataset&, const fbde::BoostedDensity& m,
                       std::size_t t) -> fbde::Classifier {
      if (style == 0) {
        return oracle::random_classifier(rng, m.schema(), kLn2, true);
      }
      // Always push the same group up: the worst case for the bound.
      return oracle::group_tracking_classifier(m.initial(), style == 1 ? 0 : t % m.initial().group_count(), kLn2);
    };
    const auto res = fbde::boost(pr.p, pr.q0, cfg, learner);
    for (const auto& row : res.trace) {
      ASSERT_GE(row.rr, fbde::rr_lower_bound(cfg.scheme, row.t) - 1e-9) << "trial " << trial << " t " << row.t;
    }
    const double eps = 2.0 * fbde::mollifier_size(cfg.scheme, cfg.rounds);
    EXPECT_TRUE(fbde::mollifier_membership(res.model.joint(), pr.q0.joint(), eps));
  }
}

TEST(FairnessSuite, ExactSchemeKeepsTau) {
  run_fairness_suite([](double tau) { return LeveragingScheme::exact(tau); }, 10);
}

TEST(FairnessSuite, RelativeSchemeKeepsPowerFloor) {
  run_fairness_suite([](double tau) { return LeveragingScheme::relative(tau); }, 11);
}

TEST(FairnessSuite, BoundIsNearlyTightForSeparatingStatistic) {
  // Disjoint group supports and c = +C on group 0, -C on group 1: RR = exp(-2C sum theta).
  const fbde::AttributeSchema s({{"x", 2, fbde::AttributeKind::kCategorical}, {"a", 2, fbde::AttributeKind::kCategorical}},
                                1);
  const fbde::InitialDensity q0(s, {{1.0, 0.0}, {0.0, 1.0}});
  fbde::Dataset p(s);
  p.add_row(std::vector<int>{0, 0});
  FitConfig cfg;
  cfg.scheme = LeveragingScheme::exact(0.7);
  cfg.rounds = 30;
  cfg.kl_eval = fbde::KlEval::kNone;
  auto learner = [&](const fbde::Dataset&, const fbde::Dataset&, const fbde::BoostedDensity&, std::size_t) {
    return fbde::Classifier(fbde::TableClassifier(s, {kLn2, -kLn2}, kLn2));
  };
  const auto res = fbde::boost(p, q0, cfg, learner);
  double sum = 0.0;
  for (const auto& r : res.trace) {
    sum += r.theta;
    EXPECT_NEAR(r.rr, std::exp(-2 * kLn2 * sum), 1e-12);
  }
  EXPECT_NEAR(res.trace.back().rr, 0.7, 1e-9);
  EXPECT_GE(res.trace.back().rr, 0.7 - 1e-9);
}

}  // namespace
