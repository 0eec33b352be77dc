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

#ifndef FBDE_BOOSTED_DENSITY_HPP
#define FBDE_BOOSTED_DENSITY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fbde/numeric.hpp"
#include "fbde/tabular.hpp"
#include "fbde/weak_learner.hpp"

/**
 * \file
 * \brief The exponential-family stack
 *
 *     Q_t(x, a) = exp(theta_t c_t(x)) Q_{t-1}(x, a) / Z_t,
 *
 * anchored at Q_0(x, a) = q_0(x | a) / |A|. Normalizers Z_t and Z_t(a) are computed exactly over
 * the discrete domain when a round is added and are frozen from then on.
 */

namespace fbde {

/// Q_0: free per-group conditionals q_0(x | a) and an exactly uniform sensitive marginal.
class InitialDensity {
 public:
  InitialDensity(AttributeSchema schema, std::vector<std::vector<double>> conditionals)
      : schema_(std::move(schema)), conditionals_(std::move(conditionals)) {
    if (conditionals_.size() != schema_.group_count()) {
      throw Error("initial density: one conditional per sensitive value required");
    }
    for (const auto& cond : conditionals_) {
      if (cond.size() != schema_.x_cell_count()) {
        throw Error("initial density: conditional length does not match |X|");
      }
      double total = 0.0;
      for (double m : cond) {
        if (!(m >= 0.0) || !std::isfinite(m)) {
          throw Error("initial density: conditional masses must be finite and nonnegative");
        }
        total += m;
      }
      if (std::abs(total - 1.0) > TabularDensity::kSumTolerance) {
        throw Error("initial density: conditional does not sum to 1");
      }
    }
  }

  const AttributeSchema& schema() const { return schema_; }
  std::size_t group_count() const { return conditionals_.size(); }
  std::span<const double> conditional(std::size_t group) const { return conditionals_.at(group); }

  double at(std::size_t x, std::size_t group) const {
    return conditionals_[group][x] / static_cast<double>(group_count());
  }

  /// Joint table whose group masses, summed in cell order, equal 1/|A| exactly.
  TabularDensity joint() const {
    const std::size_t groups = group_count();
    const double share = 1.0 / static_cast<double>(groups);
    std::vector<double> mass(schema_.cell_count());
    std::vector<std::vector<std::size_t>> positive(groups);
    for (std::size_t cell = 0; cell < mass.size(); ++cell) {
      const std::size_t g = schema_.group_of_cell(cell);
      mass[cell] = at(schema_.x_index_of_cell(cell), g);
      if (mass[cell] > 0.0) {
        positive[g].push_back(cell);
      }
    }
    // The last positive cell absorbs the rounding residue. prefix + m rounds monotonically in m, so
    // ulp steps reach 1/|A| unless a round-half-even tie straddles it; an earlier cell then moves by
    // one ulp to break the tie.
    for (std::size_t g = 0; g < groups; ++g) {
      const auto& cells = positive[g];
      double& m = mass[cells.back()];
      for (std::size_t attempt = 0;; ++attempt) {
        double prefix = 0.0;
        for (std::size_t k = 0; k + 1 < cells.size(); ++k) {
          prefix += mass[cells[k]];
        }
        m = share - prefix;
        while (prefix + m < share) {
          m = std::nextafter(m, 2.0);
        }
        while (prefix + m > share) {
          m = std::nextafter(m, 0.0);
        }
        if (prefix + m == share) {
          break;
        }
        if (cells.size() < 2 || attempt > 64) {
          throw Error("initial density: cannot pin the sensitive marginal");
        }
        double& earlier = mass[cells[cells.size() - 2]];
        earlier = std::nextafter(earlier, 2.0);
      }
    }
    return TabularDensity(schema_, std::move(mass));
  }

 private:
  AttributeSchema schema_;
  std::vector<std::vector<double>> conditionals_;
};

/// One boosting round: leverage, statistic, and the normalizers frozen at fit time.
struct Round {
  double theta = 0.0;
  Classifier classifier;
  double z = 1.0;
  std::vector<double> z_by_group;
};

struct Normalizers {
  double z = 1.0;
  std::vector<double> z_by_group;
};

struct ExpectationEstimate {
  double value = 0.0;
  double std_error = 0.0;  ///< 0 in exact mode
};

class BoostedDensity {
 public:
  static constexpr double kNormalizerTolerance = 1e-10;

  explicit BoostedDensity(InitialDensity q0)
      : q0_(std::move(q0)),
        log_weight_(q0_.schema().x_cell_count(), 0.0),
        log_z_by_group_(q0_.group_count(), 0.0) {}

  BoostedDensity(InitialDensity q0, std::vector<Round> rounds) : BoostedDensity(std::move(q0)) {
    for (auto& r : rounds) {
      add_round(std::move(r));
    }
  }

  const AttributeSchema& schema() const { return q0_.schema(); }
  const InitialDensity& initial() const { return q0_; }
  const std::vector<Round>& rounds() const { return rounds_; }
  std::size_t round_count() const { return rounds_.size(); }

  /// c_k evaluated on every x cell.
  std::span<const double> statistic_values(std::size_t k) const { return c_values_.at(k); }

  /// sum_k theta_k c_k(x) for each x cell.
  std::span<const double> log_weights() const { return log_weight_; }
  double log_z_total() const { return log_z_; }
  std::span<const double> log_z_by_group() const { return log_z_by_group_; }

  /// Appends a round whose normalizers are already known (fit time or deserialization).
  void add_round(Round round) {
    const auto values = classifier_values(round.classifier);
    const std::size_t groups = q0_.group_count();
    if (!std::isfinite(round.theta)) {
      throw Error("round: theta must be finite");
    }
    if (round.z_by_group.size() != groups) {
      throw Error("round: one group normalizer per sensitive value required");
    }
    if (!(round.z > 0.0) || !std::isfinite(round.z)) {
      throw Error("round: normalizer must be positive");
    }
    const auto marginal = sensitive_marginal();
    double mixed = 0.0;
    for (std::size_t g = 0; g < groups; ++g) {
      if (!(round.z_by_group[g] > 0.0) || !std::isfinite(round.z_by_group[g])) {
        throw Error("round: group normalizers must be positive");
      }
      mixed += marginal[g] * round.z_by_group[g];
    }
    if (std::abs(mixed - round.z) > kNormalizerTolerance * round.z) {
      throw Error("round: normalizer is not the marginal-weighted mean of the group normalizers");
    }
    for (std::size_t x = 0; x < values.size(); ++x) {
      log_weight_[x] += round.theta * values[x];
    }
    log_z_ += std::log(round.z);
    for (std::size_t g = 0; g < groups; ++g) {
      log_z_by_group_[g] += std::log(round.z_by_group[g]);
    }
    c_values_.push_back(values);
    rounds_.push_back(std::move(round));
  }

  /// The stack restricted to its first `t` rounds (Q_t).
  BoostedDensity truncated(std::size_t t) const {
    BoostedDensity out(q0_);
    for (std::size_t k = 0; k < std::min(t, rounds_.size()); ++k) {
      out.add_round(rounds_[k]);
    }
    return out;
  }

  /// ln Q_t(x, a) = ln q_0(x|a) - ln|A| + sum_k theta_k c_k(x) - sum_k ln Z_k.
  double log_density_at(std::size_t x, std::size_t group) const {
    return safe_log(q0_.conditional(group)[x]) - std::log(static_cast<double>(q0_.group_count())) +
           log_weight_[x] - log_z_;
  }

  double density_at(std::size_t x, std::size_t group) const { return std::exp(log_density_at(x, group)); }

  double density_at(std::span<const int> coords) const {
    const auto& s = schema();
    if (!s.contains(coords)) {
      throw Error("density_at: cell outside the schema");
    }
    return density_at(s.x_index(coords), static_cast<std::size_t>(coords[s.sensitive_index()]));
  }

  /// ln q_t(x | a) = ln q_0(x|a) + sum_k (theta_k c_k(x) - ln Z_k(a)).
  double log_conditional(std::size_t x, std::size_t group) const {
    return safe_log(q0_.conditional(group)[x]) + log_weight_[x] - log_z_by_group_[group];
  }

  /// Marginal recursion q_t(a) = q_0(a) prod_k Z_k(a) / Z_k.
  std::vector<double> sensitive_marginal() const {
    const std::size_t groups = q0_.group_count();
    std::vector<double> out(groups);
    for (std::size_t g = 0; g < groups; ++g) {
      out[g] = std::exp(log_z_by_group_[g] - log_z_) / static_cast<double>(groups);
    }
    return out;
  }

  /// Explicit joint table of Q_t.
  TabularDensity joint() const {
    if (std::all_of(rounds_.begin(), rounds_.end(), [](const Round& r) { return r.theta == 0.0; })) {
      return q0_.joint();
    }
    const auto& s = schema();
    std::vector<double> mass(s.cell_count());
    for (std::size_t cell = 0; cell < mass.size(); ++cell) {
      mass[cell] = density_at(s.x_index_of_cell(cell), s.group_of_cell(cell));
    }
    return TabularDensity::normalized(s, std::move(mass));
  }

  /// Values of an arbitrary classifier on every x cell, checked against its bound.
  std::vector<double> classifier_values(const Classifier& c) const {
    const auto& s = schema();
    const double bound = c_bound_of(c);
    std::vector<double> values(s.x_cell_count());
    for (std::size_t x = 0; x < values.size(); ++x) {
      const double v = evaluate(c, s.coords_of(x, 0));
      if (!std::isfinite(v) || std::abs(v) > bound) {
        throw Error("classifier unbounded");
      }
      values[x] = v;
    }
    return values;
  }

 private:
  InitialDensity q0_;
  std::vector<Round> rounds_;
  std::vector<std::vector<double>> c_values_;
  std::vector<double> log_weight_;
  double log_z_ = 0.0;
  std::vector<double> log_z_by_group_;
};

/**
 * Exact normalizers of the next round on a discrete domain:
 * Z(a) = E_{q_{t-1}(.|a)}[exp(theta c(x))] and Z = sum_a q_{t-1}(a) Z(a).
 */
inline Normalizers compute_normalizers(const BoostedDensity& prev, const Classifier& c, double theta) {
  if (!std::isfinite(theta)) {
    throw Error("compute_normalizers: theta must be finite");
  }
  const auto values = prev.classifier_values(c);
  const std::size_t groups = prev.initial().group_count();
  const auto marginal = prev.sensitive_marginal();
  Normalizers out;
  out.z_by_group.resize(groups);
  if (theta == 0.0) {
    // Conditionals are normalized, so a zero-leverage round has Z = Z(a) = 1.
    out.z = 1.0;
    std::fill(out.z_by_group.begin(), out.z_by_group.end(), 1.0);
    return out;
  }
  std::vector<double> terms(values.size());
  double z = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t x = 0; x < values.size(); ++x) {
      terms[x] = prev.log_conditional(x, g) + theta * values[x];
    }
    out.z_by_group[g] = std::exp(log_sum_exp(terms));
    z += marginal[g] * out.z_by_group[g];
  }
  out.z = z;
  return out;
}

/// Appends Q_{t} = Q_{t-1} exp(theta c) / Z_t with exact normalizers.
inline void push_round(BoostedDensity& model, Classifier c, double theta) {
  auto norms = compute_normalizers(model, c, theta);
  model.add_round(Round{theta, std::move(c), norms.z, std::move(norms.z_by_group)});
}

inline std::vector<double> sensitive_marginal(const BoostedDensity& bd) { return bd.sensitive_marginal(); }

/// RR(Q_t) = min_{i,j} prod_k Z_k(a_i) / Z_k(a_j), evaluated in log space.
inline double representation_rate_via_normalizers(const BoostedDensity& bd) {
  const auto logs = bd.log_z_by_group();
  const auto [lo, hi] = std::minmax_element(logs.begin(), logs.end());
  return std::exp(*lo - *hi);
}

namespace detail {

/// Inverse-CDF sampler over a discrete probability vector.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(std::span<const double> probs) : cumulative_(probs.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      cumulative_[i] = acc;
    }
    if (!(acc > 0.0)) {
      throw Error("sampler: zero total mass");
    }
    total_ = acc;
  }

  std::size_t operator()(Rng& rng) const {
    const double u = rng.uniform() * total_;
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it != cumulative_.end()) {
      return static_cast<std::size_t>(it - cumulative_.begin());
    }
    // u rounded up to the total: fall back to the last cell with positive mass.
    std::size_t idx = cumulative_.size() - 1;
    while (idx > 0 && cumulative_[idx] == cumulative_[idx - 1]) {
      --idx;
    }
    return idx;
  }

 private:
  std::vector<double> cumulative_;
  double total_ = 0.0;
};

inline ExpectationEstimate summarize(std::span<const double> draws) {
  const auto n = static_cast<double>(draws.size());
  double mean = 0.0;
  for (double d : draws) {
    mean += d;
  }
  mean /= n;
  double ss = 0.0;
  for (double d : draws) {
    ss += (d - mean) * (d - mean);
  }
  const double var = ss / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

}  // namespace detail

/// Either an exact sum over the domain or a Monte Carlo estimate with the given budget.
struct SampleBudget {
  std::optional<std::size_t> draws;  ///< nullopt = exact
  std::uint64_t seed = 0;

  static SampleBudget exact() { return {}; }
  static SampleBudget monte_carlo(std::size_t n, std::uint64_t seed) { return {n, seed}; }
};

/**
 * E_{Q_t}[g(x, a)] via the unrolled update:
 * E_{Q_0}[prod_k exp(theta_k c_k(x)) / Z_k * g(x, a)].
 * Monte Carlo mode draws from Q_0 and reports the sample standard error.
 */
template <class G>
ExpectationEstimate expectation(const BoostedDensity& bd, G&& g, SampleBudget budget = SampleBudget::exact()) {
  const auto& s = bd.schema();
  const std::size_t groups = bd.initial().group_count();
  const auto lw = bd.log_weights();
  const double lz = bd.log_z_total();
  if (!budget.draws) {
    double acc = 0.0;
    for (std::size_t g_idx = 0; g_idx < groups; ++g_idx) {
      for (std::size_t x = 0; x < s.x_cell_count(); ++x) {
        const double q0 = bd.initial().at(x, g_idx);
        if (q0 > 0.0) {
          acc += q0 * std::exp(lw[x] - lz) * static_cast<double>(g(x, g_idx));
        }
      }
    }
    return {acc, 0.0};
  }
  if (*budget.draws < 2) {
    throw Error("expectation: Monte Carlo mode needs at least 2 draws");
  }
  std::vector<detail::DiscreteSampler> conditionals;
  conditionals.reserve(groups);
  for (std::size_t g_idx = 0; g_idx < groups; ++g_idx) {
    conditionals.emplace_back(bd.initial().conditional(g_idx));
  }
  Rng rng(budget.seed);
  std::vector<double> draws(*budget.draws);
  for (auto& d : draws) {
    const auto a = static_cast<std::size_t>(rng.below(groups));
    const auto x = conditionals[a](rng);
    d = std::exp(lw[x] - lz) * static_cast<double>(g(x, a));
  }
  return detail::summarize(draws);
}

/// E_{q_t(.|a)}[g(x)] = E_{q_0(.|a)}[prod_k exp(theta_k c_k(x)) / Z_k(a) * g(x)].
template <class G>
ExpectationEstimate conditional_expectation(const BoostedDensity& bd, G&& g, std::size_t group,
                                            SampleBudget budget = SampleBudget::exact()) {
  if (group >= bd.initial().group_count()) {
    throw Error("conditional_expectation: sensitive value out of range");
  }
  const auto q0 = bd.initial().conditional(group);
  const auto lw = bd.log_weights();
  const double lz = bd.log_z_by_group()[group];
  if (!budget.draws) {
    double acc = 0.0;
    for (std::size_t x = 0; x < q0.size(); ++x) {
      if (q0[x] > 0.0) {
        acc += q0[x] * std::exp(lw[x] - lz) * static_cast<double>(g(x));
      }
    }
    return {acc, 0.0};
  }
  if (*budget.draws < 2) {
    throw Error("conditional_expectation: Monte Carlo mode needs at least 2 draws");
  }
  detail::DiscreteSampler sampler(q0);
  Rng rng(budget.seed);
  std::vector<double> draws(*budget.draws);
  for (auto& d : draws) {
    const auto x = sampler(rng);
    d = std::exp(lw[x] - lz) * static_cast<double>(g(x));
  }
  return detail::summarize(draws);
}

/// Exact inverse-CDF draws from the explicit table of Q_t.
inline Dataset sample(const BoostedDensity& bd, std::size_t n, std::uint64_t seed) {
  if (n < 1) {
    throw Error("sample: n must be >= 1");
  }
  const auto table = bd.joint();
  detail::DiscreteSampler sampler(table.mass());
  Rng rng(seed);
  Dataset out(bd.schema());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.add_row(bd.schema().coords_of(sampler(rng)));
  }
  return out;
}

}  // namespace fbde

#endif  // FBDE_BOOSTED_DENSITY_HPP
