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

#ifndef FBDE_ENGINE_HPP
#define FBDE_ENGINE_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "fbde/boosted_density.hpp"
#include "fbde/numeric.hpp"
#include "fbde/tabular.hpp"
#include "fbde/weak_learner.hpp"

/**
 * \file
 * \brief The fair boosting loop: leveraging schemes, their fairness floors, and the per-round trace.
 */

namespace fbde {

/// Leveraging coefficient schedule theta_t = f(t, tau).
struct LeveragingScheme {
  enum class Kind { kExact, kRelative, kConstant };

  Kind kind = Kind::kExact;
  double tau = 0.9;
  double constant = 0.0;
  double c_bound = kLn2;

  static LeveragingScheme exact(double tau, double c_bound = kLn2) { return {Kind::kExact, tau, 0.0, c_bound}; }
  static LeveragingScheme relative(double tau, double c_bound = kLn2) { return {Kind::kRelative, tau, 0.0, c_bound}; }
  static LeveragingScheme constant_theta(double value, double c_bound = kLn2) {
    return {Kind::kConstant, 0.0, value, c_bound};
  }

  void validate() const {
    if (!(c_bound > 0.0) || !std::isfinite(c_bound)) {
      throw Error("leveraging scheme: c_bound must be positive");
    }
    if (kind == Kind::kConstant) {
      if (!std::isfinite(constant)) {
        throw Error("leveraging scheme: constant theta must be finite");
      }
    } else if (!(tau > 0.0 && tau < 1.0)) {
      throw Error("leveraging scheme: tau must lie in (0, 1)");
    }
  }
};

inline std::string scheme_name(const LeveragingScheme& s) {
  switch (s.kind) {
    case LeveragingScheme::Kind::kExact:
      return "exact";
    case LeveragingScheme::Kind::kRelative:
      return "relative";
    case LeveragingScheme::Kind::kConstant:
      return "constant";
  }
  return "exact";
}

/// Exact: -ln tau / (C 2^(t+1)); Relative: -ln tau / (2 C t); Constant: the value.
inline double leverage(const LeveragingScheme& scheme, std::size_t t) {
  scheme.validate();
  if (t < 1) {
    throw Error("leverage: rounds are numbered from 1");
  }
  const double c = scheme.c_bound;
  switch (scheme.kind) {
    case LeveragingScheme::Kind::kExact:
      return -std::log(scheme.tau) / (c * std::ldexp(1.0, static_cast<int>(t) + 1));
    case LeveragingScheme::Kind::kRelative:
      return -std::log(scheme.tau) / (2.0 * c * static_cast<double>(t));
    case LeveragingScheme::Kind::kConstant:
      return scheme.constant;
  }
  return 0.0;
}

/// Guaranteed floor on RR(Q_t): tau, tau^(1 + ln t), or exp(-2 C sum_k |theta_k|).
inline double rr_lower_bound(const LeveragingScheme& scheme, std::size_t t) {
  scheme.validate();
  if (t < 1) {
    throw Error("rr_lower_bound: rounds are numbered from 1");
  }
  switch (scheme.kind) {
    case LeveragingScheme::Kind::kExact:
      return scheme.tau;
    case LeveragingScheme::Kind::kRelative:
      return std::pow(scheme.tau, 1.0 + std::log(static_cast<double>(t)));
    case LeveragingScheme::Kind::kConstant:
      return std::exp(-2.0 * scheme.c_bound * std::abs(scheme.constant) * static_cast<double>(t));
  }
  return 0.0;
}

/// epsilon_t such that Q_t lies in the relative mollifier of size 2 epsilon_t around Q_0.
inline double mollifier_size(const LeveragingScheme& scheme, std::size_t t) {
  scheme.validate();
  if (t < 1) {
    throw Error("mollifier_size: rounds are numbered from 1");
  }
  switch (scheme.kind) {
    case LeveragingScheme::Kind::kExact:
      return -std::log(scheme.tau);
    case LeveragingScheme::Kind::kRelative:
      return -(1.0 + std::log(static_cast<double>(t))) * std::log(scheme.tau);
    case LeveragingScheme::Kind::kConstant:
      return 2.0 * scheme.c_bound * std::abs(scheme.constant) * static_cast<double>(t);
  }
  return 0.0;
}

enum class NegativeSource {
  kFresh,          ///< draw new negatives from Q_{t-1} every round
  kReweightedPool  ///< draw one pool from Q_0 and importance-weight it towards Q_{t-1}
};

enum class KlEval { kTrainSet, kHeldOut, kNone };

struct FitConfig {
  std::size_t rounds = 10;
  LeveragingScheme scheme;
  TreeConfig tree;
  double negatives_multiplier = 2.0;
  NegativeSource negatives = NegativeSource::kFresh;
  KlEval kl_eval = KlEval::kTrainSet;
  /// Laplace smoothing of the empirical target table used for KL and exact margins.
  double target_smoothing = 0.0;
  bool stop_on_wla_failure = false;
  std::uint64_t seed = 0;
};

struct TraceRow {
  std::size_t t = 0;
  double theta = 0.0;
  /// Exact margins E_P[c]/C and E_{Q_{t-1}}[-c]/C on the training target table.
  double gamma_p = 0.0;
  double gamma_q = 0.0;
  Regime regime = Regime::kFail;
  /// Margins measured on the weak learner's own training samples.
  WlaEstimate sample_wla;
  double rr = 1.0;
  double rr_lower_bound = 0.0;
  std::optional<double> kl_train;
  std::optional<double> kl_test;
  double z = 1.0;
  std::vector<double> z_by_group;
};

struct FitResult {
  BoostedDensity model;
  std::vector<TraceRow> trace;
};

namespace detail {

inline double table_mean(const TabularDensity& table, std::span<const double> x_values) {
  const auto& s = table.schema();
  double acc = 0.0;
  for (std::size_t cell = 0; cell < s.cell_count(); ++cell) {
    acc += table[cell] * x_values[s.x_index_of_cell(cell)];
  }
  return acc;
}

inline Dataset reweighted_pool(const BoostedDensity& model, const Dataset& pool) {
  const auto& s = model.schema();
  const auto lw = model.log_weights();
  const double lz = model.log_z_total();
  Dataset out(s);
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto row = pool.row(i);
    out.add_row(row, std::exp(lw[s.x_index(row)] - lz));
  }
  return out;
}

}  // namespace detail

/**
 * Runs the boosting loop with an arbitrary weak learner.
 *
 * `learner(p, negatives, q_prev, t)` returns the statistic c_t. Each round draws
 * negatives_multiplier * |P| negatives from Q_{t-1}, calls the learner, computes exact normalizers
 * and appends the round. Deterministic given cfg.seed.
 */
template <class Learner>
FitResult boost(const Dataset& p, const InitialDensity& q0, const FitConfig& cfg, Learner&& learner,
                const TabularDensity* held_out_target = nullptr) {
  cfg.scheme.validate();
  if (p.empty()) {
    throw Error("empty dataset");
  }
  if (!(p.schema() == q0.schema())) {
    throw Error("fit: data and initial density schemas differ");
  }
  if (!(cfg.negatives_multiplier > 0.0)) {
    throw Error("fit: negatives_multiplier must be positive");
  }
  if (cfg.kl_eval == KlEval::kHeldOut && held_out_target == nullptr) {
    throw Error("fit: held-out KL requested without a held-out table");
  }
  const auto target = fit_empirical(p, cfg.target_smoothing);
  const auto negatives_n = static_cast<std::size_t>(std::ceil(cfg.negatives_multiplier * static_cast<double>(p.size())));
  const double c_bound = cfg.scheme.c_bound;

  FitResult result{BoostedDensity(q0), {}};
  std::optional<Dataset> pool;
  if (cfg.negatives == NegativeSource::kReweightedPool) {
    pool = sample(result.model, negatives_n, derive_seed(cfg.seed, "negatives-pool"));
  }

  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    const double theta = leverage(cfg.scheme, t);
    const Dataset negatives = pool ? detail::reweighted_pool(result.model, *pool)
                                   : sample(result.model, negatives_n, derive_seed(cfg.seed, "negatives", t));
    Classifier c = learner(p, negatives, result.model, t);
    if (std::abs(c_bound_of(c) - c_bound) > 1e-15 * c_bound) {
      throw Error("fit: classifier bound differs from the scheme's C");
    }

    TraceRow row;
    row.t = t;
    row.theta = theta;
    row.sample_wla = estimate_wla(c, p, negatives);
    const auto values = result.model.classifier_values(c);
    row.gamma_p = detail::table_mean(target, values) / c_bound;
    row.gamma_q = -detail::table_mean(result.model.joint(), values) / c_bound;
    row.regime = classify_regime(row.gamma_p, row.gamma_q);

    push_round(result.model, std::move(c), theta);
    const auto& last = result.model.rounds().back();
    row.z = last.z;
    row.z_by_group = last.z_by_group;
    const auto joint = result.model.joint();
    row.rr = representation_rate(joint);
    row.rr_lower_bound = rr_lower_bound(cfg.scheme, t);
    if (cfg.kl_eval != KlEval::kNone) {
      row.kl_train = kl_divergence(target, joint);
    }
    if (cfg.kl_eval == KlEval::kHeldOut) {
      row.kl_test = kl_divergence(*held_out_target, joint);
    }
    result.trace.push_back(std::move(row));
    if (cfg.stop_on_wla_failure && result.trace.back().sample_wla.regime == Regime::kFail) {
      break;
    }
  }
  return result;
}

/// FBDE with the Gini decision-tree weak learner.
inline FitResult fbde_fit(const Dataset& p, const InitialDensity& q0, const FitConfig& cfg,
                          const TabularDensity* held_out_target = nullptr) {
  if (std::abs(cfg.tree.c_bound - cfg.scheme.c_bound) > 1e-15 * cfg.scheme.c_bound) {
    throw Error("fit: tree c_bound and scheme c_bound differ");
  }
  auto learner = [&](const Dataset& pos, const Dataset& neg, const BoostedDensity&, std::size_t) -> Classifier {
    return train_tree(pos, neg, cfg.tree);
  };
  return boost(p, q0, cfg, learner, held_out_target);
}

}  // namespace fbde

#endif  // FBDE_ENGINE_HPP
