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

#ifndef FBDE_GUARANTEES_HPP
#define FBDE_GUARANTEES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "fbde/boosted_density.hpp"
#include "fbde/engine.hpp"
#include "fbde/numeric.hpp"
#include "fbde/tabular.hpp"
#include "fbde/weak_learner.hpp"

/**
 * \file
 * \brief Closed-form convergence and fairness-transfer bounds, and verifiers that hold fitted
 * models and measured quantities against them.
 *
 * All logarithms are natural; the convergence bounds assume C = ln 2.
 */

namespace fbde {

/// Gamma(z) = ln(4 / (5 - 3z)).
inline double gamma_fn(double z) {
  if (!(z < 5.0 / 3.0)) {
    throw Error("gamma_fn: argument must be below 5/3");
  }
  return std::log(4.0 / (5.0 - 3.0 * z));
}

/// alpha(gamma) = Gamma(gamma) / (gamma ln 2).
inline double alpha_fn(double gamma) {
  if (!(gamma > 0.0)) {
    throw Error("alpha_fn: gamma must be positive");
  }
  return gamma_fn(gamma) / (gamma * kLn2);
}

struct KlDropBound {
  double lambda = 0.0;
  double bound = 0.0;  ///< theta * lambda
  Regime regime = Regime::kHbs;
  bool positive = false;
};

/**
 * Per-round guaranteed KL decrease theta * Lambda with
 *   HBS (gamma_q in [1/3, 1]):  Lambda = gamma_p ln 2 + Gamma(gamma_q)
 *   LBS (gamma_q in (0, 1/3)):  Lambda = gamma_p + gamma_q - ln 2 * theta / 2
 */
inline KlDropBound kl_drop_bound(double theta, double gamma_p, double gamma_q) {
  if (!(gamma_p > 0.0) || !(gamma_q > 0.0)) {
    throw Error("WLA violated");
  }
  if (gamma_p > 1.0 + 1e-12 || gamma_q > 1.0 + 1e-12) {
    throw Error("kl_drop_bound: margins cannot exceed 1");
  }
  if (!(theta > 0.0)) {
    throw Error("kl_drop_bound: theta must be positive");
  }
  KlDropBound out;
  out.regime = classify_regime(gamma_p, gamma_q);
  if (out.regime == Regime::kHbs) {
    out.lambda = gamma_p * kLn2 + gamma_fn(std::min(gamma_q, 1.0));
  } else {
    // Verbatim form; note the margins enter unscaled here but scaled by ln 2 in HBS.
    out.lambda = gamma_p + gamma_q - kLn2 * theta / 2.0;
  }
  out.bound = theta * out.lambda;
  out.positive = out.bound > 0.0;
  return out;
}

struct DeltaBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Upper bound on Delta(Q_T) = KL(P, Q_0) - KL(P, Q_T), valid for any bounded statistics.
inline double delta_upper_bound(const LeveragingScheme& scheme, std::size_t rounds) {
  scheme.validate();
  if (rounds < 1) {
    return 0.0;
  }
  switch (scheme.kind) {
    case LeveragingScheme::Kind::kExact:
      return -std::log(scheme.tau);
    case LeveragingScheme::Kind::kRelative:
      return -(1.0 + std::log(static_cast<double>(rounds))) * std::log(scheme.tau);
    case LeveragingScheme::Kind::kConstant:
      return 2.0 * scheme.c_bound * std::abs(scheme.constant) * static_cast<double>(rounds);
  }
  return 0.0;
}

/// Both bounds on Delta(Q_T) for HBS rounds with fixed margins; requires T > 1 and tau in (1/e, 1).
inline DeltaBounds delta_bounds(const LeveragingScheme& scheme, std::size_t rounds, double gamma_p, double gamma_q) {
  scheme.validate();
  if (scheme.kind == LeveragingScheme::Kind::kConstant) {
    throw Error("delta_bounds: only the exact and relative schemes are covered");
  }
  if (!(scheme.tau > std::exp(-1.0))) {
    throw Error("delta_bounds: tau must exceed 1/e");
  }
  if (rounds < 2) {
    throw Error("delta_bounds: T must exceed 1");
  }
  if (classify_regime(gamma_p, gamma_q) != Regime::kHbs) {
    throw Error("delta_bounds: margins must lie in the high boosting regime");
  }
  const double neg_log_tau = -std::log(scheme.tau);
  const double rate = (gamma_p + gamma_q * alpha_fn(gamma_q)) / 2.0;
  const double t = static_cast<double>(rounds);
  DeltaBounds out;
  out.upper = delta_upper_bound(scheme, rounds);
  if (scheme.kind == LeveragingScheme::Kind::kExact) {
    out.lower = neg_log_tau * rate * (1.0 - std::ldexp(1.0, -static_cast<int>(rounds - 1)));
  } else {
    out.lower = neg_log_tau * rate * std::log(t);
  }
  return out;
}

/// FNR ceiling under which tau-RR data yields rho-equal opportunity: (tau - rho) / (1 + tau).
inline double eo_fnr_bound(double tau, double rho) {
  if (!(rho >= 0.0) || !(tau <= 1.0) || !(tau > 0.0)) {
    throw Error("eo_fnr_bound: need 0 <= rho <= tau <= 1");
  }
  if (rho > tau) {
    throw Error("eo_fnr_bound: rho exceeds tau");
  }
  return (tau - rho) / (1.0 + tau);
}

/// Statistical rate implied by joint (Y x A) representation rate tau: tau^2.
inline double sr_from_rr(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw Error("sr_from_rr: tau must lie in (0, 1]");
  }
  return tau * tau;
}

/// Discrimination control implied by joint representation rate tau: (1 - tau^2) / tau^2.
inline double dc_from_rr(double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw Error("dc_from_rr: tau must lie in (0, 1]");
  }
  return (1.0 - tau * tau) / (tau * tau);
}

struct EoReport {
  double fnr = 0.0;
  /// min_{i,j} p[Yhat=1|A=a_i,Y=1] / p[Yhat=1|A=a_j,Y=1]
  double eo_ratio = 0.0;
  /// Representation rate of the sensitive attribute among positives, p[A | Y=1].
  double rr_given_positive = 0.0;
  double rr_marginal = 0.0;
  std::optional<double> fnr_bound;
  bool premise_held = false;
  bool conclusion_held = false;
  /// false only for a counterexample (premise held, conclusion failed).
  bool consistent = true;
};

/**
 * Checks the equal-opportunity implication on one table and predictor.
 *
 * Binary Y (positive class 1) and binary A are required. The premise is
 * rho <= tau and FNR <= (tau - rho) / (1 + tau), with tau the representation rate of A among
 * positives; the conclusion is rho-equal opportunity.
 */
template <class Predictor>
EoReport verify_eo(const TabularDensity& density, Predictor&& predictor, double rho) {
  const auto& s = density.schema();
  const auto target = s.target_index();
  if (!target) {
    throw Error("verify_eo: no target attribute in schema");
  }
  if (s[*target].cardinality != 2 || s.group_count() != 2) {
    throw Error("verify_eo: binary target and sensitive attribute required");
  }
  std::vector<double> positives(2, 0.0);
  std::vector<double> hits(2, 0.0);
  for (std::size_t cell = 0; cell < s.cell_count(); ++cell) {
    const auto coords = s.coords_of(cell);
    if (coords[*target] != 1) {
      continue;
    }
    const auto g = static_cast<std::size_t>(coords[s.sensitive_index()]);
    positives[g] += density[cell];
    if (predictor(std::span<const int>(coords)) == 1) {
      hits[g] += density[cell];
    }
  }
  for (std::size_t g = 0; g < 2; ++g) {
    if (!(positives[g] > 0.0) || !(hits[g] > 0.0)) {
      throw Error("verify_eo: zero denominator");
    }
  }
  EoReport out;
  out.fnr = 1.0 - (hits[0] + hits[1]) / (positives[0] + positives[1]);
  const double tpr0 = hits[0] / positives[0];
  const double tpr1 = hits[1] / positives[1];
  out.eo_ratio = std::min(tpr0 / tpr1, tpr1 / tpr0);
  out.rr_given_positive = std::min(positives[0] / positives[1], positives[1] / positives[0]);
  out.rr_marginal = representation_rate(density);
  if (rho >= 0.0 && rho <= out.rr_given_positive) {
    out.fnr_bound = eo_fnr_bound(out.rr_given_positive, rho);
    out.premise_held = out.fnr <= *out.fnr_bound;
  }
  out.conclusion_held = out.eo_ratio >= rho * (1.0 - 1e-12);
  out.consistent = !out.premise_held || out.conclusion_held;
  return out;
}

/// Bound checks for one fitted round.
struct RoundGuarantee {
  std::size_t t = 0;
  double theta = 0.0;
  double rr = 0.0;
  double rr_bound = 0.0;
  bool rr_ok = false;
  double gamma_p = 0.0;
  double gamma_q = 0.0;
  Regime regime = Regime::kFail;
  std::optional<double> lambda;
  std::optional<double> drop_bound;
  double measured_drop = 0.0;
  /// The drop bound applies: C = ln 2, 0 < theta <= 1, HBS and Lambda > 0.
  bool drop_checked = false;
  bool drop_ok = true;
};

struct GuaranteeReport {
  std::string scheme;
  double tau = 0.0;
  std::size_t rounds = 0;
  std::vector<RoundGuarantee> per_round;
  double kl_initial = 0.0;
  double kl_final = 0.0;
  double delta_measured = 0.0;
  double delta_upper = 0.0;
  bool delta_ok = true;
  /// Reported, not asserted: computed from the per-run minimum margins when those are HBS.
  std::optional<double> delta_lower;
  double gamma_p_min = 0.0;
  double gamma_q_min = 0.0;
  bool mollifier_ok = true;
  double mollifier_eps = 0.0;
  double rr_final = 1.0;
  double sr_implied = 1.0;
  double dc_implied = 0.0;
  double eo_rho = 0.0;
  std::optional<double> eo_fnr_bound;

  bool all_ok() const {
    bool ok = delta_ok && mollifier_ok;
    for (const auto& r : per_round) {
      ok = ok && r.rr_ok && r.drop_ok;
    }
    return ok;
  }
};

inline constexpr double kBoundSlack = 1e-9;

/**
 * Evaluates every bound against a fitted model. `target` is the table the KL terms are measured
 * against; the margins are recomputed exactly from it and from each Q_{t-1}.
 */
inline GuaranteeReport build_guarantee_report(const BoostedDensity& model, const LeveragingScheme& scheme,
                                              const TabularDensity& target, double eo_rho = 0.8) {
  scheme.validate();
  GuaranteeReport rep;
  rep.scheme = scheme_name(scheme);
  rep.tau = scheme.tau;
  rep.rounds = model.round_count();
  const double c = scheme.c_bound;
  const bool ln2_bound = std::abs(c - kLn2) <= 1e-15;

  auto prev = model.truncated(0);
  auto prev_joint = prev.joint();
  double prev_kl = kl_divergence(target, prev_joint);
  rep.kl_initial = prev_kl;
  rep.gamma_p_min = 1.0;
  rep.gamma_q_min = 1.0;
  for (std::size_t k = 0; k < model.round_count(); ++k) {
    const auto& round = model.rounds()[k];
    RoundGuarantee g;
    g.t = k + 1;
    g.theta = round.theta;
    const auto values = model.statistic_values(k);
    g.gamma_p = detail::table_mean(target, values) / c;
    g.gamma_q = -detail::table_mean(prev_joint, values) / c;
    g.regime = classify_regime(g.gamma_p, g.gamma_q);
    rep.gamma_p_min = std::min(rep.gamma_p_min, g.gamma_p);
    rep.gamma_q_min = std::min(rep.gamma_q_min, g.gamma_q);

    prev.add_round(round);
    prev_joint = prev.joint();
    const double kl = kl_divergence(target, prev_joint);
    g.measured_drop = prev_kl - kl;
    prev_kl = kl;
    g.rr = representation_rate(prev_joint);
    g.rr_bound = rr_lower_bound(scheme, g.t);
    g.rr_ok = g.rr >= g.rr_bound - kBoundSlack;

    if (g.regime != Regime::kFail && g.theta > 0.0) {
      const auto b = kl_drop_bound(g.theta, std::min(g.gamma_p, 1.0), std::min(g.gamma_q, 1.0));
      g.lambda = b.lambda;
      g.drop_bound = b.bound;
      g.drop_checked = ln2_bound && g.theta <= 1.0 && b.regime == Regime::kHbs && b.lambda > 0.0;
      if (g.drop_checked) {
        g.drop_ok = g.measured_drop >= b.bound - kBoundSlack;
      }
    }
    rep.per_round.push_back(g);
  }
  rep.kl_final = prev_kl;
  rep.delta_measured = rep.kl_initial - rep.kl_final;
  if (rep.rounds > 0) {
    rep.delta_upper = delta_upper_bound(scheme, rep.rounds);
    rep.delta_ok = rep.delta_measured <= rep.delta_upper + kBoundSlack;
    rep.mollifier_eps = 2.0 * mollifier_size(scheme, rep.rounds);
    rep.mollifier_ok = mollifier_membership(prev_joint, model.initial().joint(), rep.mollifier_eps);
    if (scheme.kind != LeveragingScheme::Kind::kConstant && rep.rounds > 1 && scheme.tau > std::exp(-1.0) &&
        classify_regime(rep.gamma_p_min, rep.gamma_q_min) == Regime::kHbs) {
      rep.delta_lower = delta_bounds(scheme, rep.rounds, rep.gamma_p_min, rep.gamma_q_min).lower;
    }
  }
  rep.rr_final = representation_rate(prev_joint);
  rep.sr_implied = sr_from_rr(rep.rr_final);
  rep.dc_implied = dc_from_rr(rep.rr_final);
  rep.eo_rho = eo_rho;
  if (eo_rho >= 0.0 && eo_rho <= rep.rr_final) {
    rep.eo_fnr_bound = eo_fnr_bound(rep.rr_final, eo_rho);
  }
  return rep;
}

}  // namespace fbde

#endif  // FBDE_GUARANTEES_HPP
