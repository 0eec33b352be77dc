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

#ifndef FBDE_TABULAR_HPP
#define FBDE_TABULAR_HPP

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fbde/numeric.hpp"

/**
 * \file
 * \brief Finite-domain probability tables, the fairness metrics defined on them, KL divergence and
 * mollifier membership checks.
 *
 * Cells are indexed row-major over all attributes in schema order (last attribute fastest).
 * The non-sensitive part of a cell ("x cell") is indexed row-major over the remaining attributes
 * in the same order.
 */

namespace fbde {

/// How the weak learner may split on an attribute.
enum class AttributeKind {
  kCategorical,  ///< one-vs-rest splits on a category
  kOrdinal,      ///< threshold splits on the code (binned continuous columns)
};

struct Attribute {
  std::string name;
  int cardinality = 1;
  AttributeKind kind = AttributeKind::kCategorical;
};

/// Ordered attributes, one of which is the sensitive attribute A and optionally one the class Y.
class AttributeSchema {
 public:
  static constexpr std::size_t kMaxCells = std::size_t{1} << 28;

  AttributeSchema() = default;

  AttributeSchema(std::vector<Attribute> attributes, std::size_t sensitive_index,
                  std::optional<std::size_t> target_index = std::nullopt)
      : attributes_(std::move(attributes)), sensitive_(sensitive_index), target_(target_index) {
    if (attributes_.empty()) {
      throw Error("schema: no attributes");
    }
    if (sensitive_ >= attributes_.size()) {
      throw Error("schema: sensitive index out of range");
    }
    if (target_ && (*target_ >= attributes_.size() || *target_ == sensitive_)) {
      throw Error("schema: target index must be valid and distinct from the sensitive index");
    }
    strides_.assign(attributes_.size(), 1);
    x_strides_.assign(attributes_.size(), 0);
    std::size_t cells = 1;
    std::size_t x_cells = 1;
    for (std::size_t i = attributes_.size(); i-- > 0;) {
      const int card = attributes_[i].cardinality;
      if (card < 1) {
        throw Error("schema: attribute '" + attributes_[i].name + "' has cardinality < 1");
      }
      strides_[i] = cells;
      cells *= static_cast<std::size_t>(card);
      if (i != sensitive_) {
        x_strides_[i] = x_cells;
        x_cells *= static_cast<std::size_t>(card);
      }
      if (cells > kMaxCells) {
        throw Error("schema: domain too large for an explicit table");
      }
    }
    cells_ = cells;
    x_cells_ = x_cells;
  }

  const std::vector<Attribute>& attributes() const { return attributes_; }
  std::size_t size() const { return attributes_.size(); }
  const Attribute& operator[](std::size_t i) const { return attributes_[i]; }
  std::size_t sensitive_index() const { return sensitive_; }
  std::optional<std::size_t> target_index() const { return target_; }
  std::size_t group_count() const { return static_cast<std::size_t>(attributes_[sensitive_].cardinality); }

  /// |X x A|
  std::size_t cell_count() const { return cells_; }
  /// |X|
  std::size_t x_cell_count() const { return x_cells_; }

  bool contains(std::span<const int> coords) const {
    if (coords.size() != attributes_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (coords[i] < 0 || coords[i] >= attributes_[i].cardinality) {
        return false;
      }
    }
    return true;
  }

  std::size_t cell_index(std::span<const int> coords) const {
    if (!contains(coords)) {
      throw Error("schema: cell coordinates out of range");
    }
    std::size_t idx = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      idx += strides_[i] * static_cast<std::size_t>(coords[i]);
    }
    return idx;
  }

  std::vector<int> coords_of(std::size_t cell) const {
    std::vector<int> coords(attributes_.size());
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      coords[i] = static_cast<int>((cell / strides_[i]) % static_cast<std::size_t>(attributes_[i].cardinality));
    }
    return coords;
  }

  /// Index of the non-sensitive part of a full coordinate vector (sensitive slot ignored).
  std::size_t x_index(std::span<const int> coords) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (i != sensitive_) {
        idx += x_strides_[i] * static_cast<std::size_t>(coords[i]);
      }
    }
    return idx;
  }

  std::size_t x_index_of_cell(std::size_t cell) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      if (i != sensitive_) {
        const auto code = (cell / strides_[i]) % static_cast<std::size_t>(attributes_[i].cardinality);
        idx += x_strides_[i] * code;
      }
    }
    return idx;
  }

  std::size_t group_of_cell(std::size_t cell) const {
    return (cell / strides_[sensitive_]) % group_count();
  }

  /// Full coordinates of x cell `x` with the sensitive slot set to `group`.
  std::vector<int> coords_of(std::size_t x, std::size_t group) const {
    std::vector<int> coords(attributes_.size());
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      if (i == sensitive_) {
        coords[i] = static_cast<int>(group);
      } else {
        coords[i] = static_cast<int>((x / x_strides_[i]) % static_cast<std::size_t>(attributes_[i].cardinality));
      }
    }
    return coords;
  }

  std::size_t cell_of(std::size_t x, std::size_t group) const {
    std::size_t idx = strides_[sensitive_] * group;
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      if (i != sensitive_) {
        idx += strides_[i] * ((x / x_strides_[i]) % static_cast<std::size_t>(attributes_[i].cardinality));
      }
    }
    return idx;
  }

  friend bool operator==(const AttributeSchema& a, const AttributeSchema& b) {
    if (a.sensitive_ != b.sensitive_ || a.target_ != b.target_ || a.attributes_.size() != b.attributes_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.attributes_.size(); ++i) {
      const auto& x = a.attributes_[i];
      const auto& y = b.attributes_[i];
      if (x.name != y.name || x.cardinality != y.cardinality || x.kind != y.kind) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<Attribute> attributes_;
  std::size_t sensitive_ = 0;
  std::optional<std::size_t> target_;
  std::vector<std::size_t> strides_;
  std::vector<std::size_t> x_strides_;
  std::size_t cells_ = 0;
  std::size_t x_cells_ = 0;
};

/// Explicit joint probability table over a schema's domain.
class TabularDensity {
 public:
  static constexpr double kSumTolerance = 1e-12;

  TabularDensity(AttributeSchema schema, std::vector<double> mass)
      : schema_(std::move(schema)), mass_(std::move(mass)) {
    if (mass_.size() != schema_.cell_count()) {
      throw Error("density: mass length does not match the schema's cell count");
    }
    double total = 0.0;
    for (double m : mass_) {
      if (!(m >= 0.0) || !std::isfinite(m)) {
        throw Error("density: masses must be finite and nonnegative");
      }
      total += m;
    }
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw Error("density: masses do not sum to 1");
    }
  }

  /// Builds a density from unnormalized nonnegative weights.
  static TabularDensity normalized(AttributeSchema schema, std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error("density: weights must be finite and nonnegative");
      }
      total += w;
    }
    if (!(total > 0.0)) {
      throw Error("density: weights sum to zero");
    }
    for (double& w : weights) {
      w /= total;
    }
    return TabularDensity(std::move(schema), std::move(weights));
  }

  const AttributeSchema& schema() const { return schema_; }
  std::span<const double> mass() const { return mass_; }
  double operator[](std::size_t cell) const { return mass_[cell]; }
  double at(std::span<const int> coords) const { return mass_[schema_.cell_index(coords)]; }

  /// Marginal over the attributes in `attrs` (in that order, row-major, last fastest).
  std::vector<double> marginal(std::span<const std::size_t> attrs) const {
    std::size_t size = 1;
    for (auto a : attrs) {
      size *= static_cast<std::size_t>(schema_[a].cardinality);
    }
    std::vector<double> out(size, 0.0);
    for (std::size_t cell = 0; cell < mass_.size(); ++cell) {
      const auto coords = schema_.coords_of(cell);
      std::size_t idx = 0;
      for (auto a : attrs) {
        idx = idx * static_cast<std::size_t>(schema_[a].cardinality) + static_cast<std::size_t>(coords[a]);
      }
      out[idx] += mass_[cell];
    }
    return out;
  }

  std::vector<double> sensitive_marginal() const {
    std::vector<double> out(schema_.group_count(), 0.0);
    for (std::size_t cell = 0; cell < mass_.size(); ++cell) {
      out[schema_.group_of_cell(cell)] += mass_[cell];
    }
    return out;
  }

 private:
  AttributeSchema schema_;
  std::vector<double> mass_;
};

/// Rows of cell coordinates with optional nonnegative weights (default 1).
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(AttributeSchema schema) : schema_(std::move(schema)) {}

  const AttributeSchema& schema() const { return schema_; }
  std::size_t size() const { return schema_.size() == 0 ? 0 : codes_.size() / schema_.size(); }
  bool empty() const { return size() == 0; }

  std::span<const int> row(std::size_t i) const {
    return std::span<const int>(codes_).subspan(i * schema_.size(), schema_.size());
  }
  double weight(std::size_t i) const { return weights_.empty() ? 1.0 : weights_[i]; }
  bool weighted() const { return !weights_.empty(); }

  void add_row(std::span<const int> coords, double weight = 1.0) {
    if (!schema_.contains(coords)) {
      throw Error("dataset: row code out of range for its attribute");
    }
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
      throw Error("dataset: weights must be finite and nonnegative");
    }
    if (weight != 1.0 && weights_.empty()) {
      weights_.assign(size(), 1.0);
    }
    codes_.insert(codes_.end(), coords.begin(), coords.end());
    if (!weights_.empty()) {
      weights_.push_back(weight);
    }
  }

  void reserve(std::size_t rows) { codes_.reserve(rows * schema_.size()); }

  /// Rows at the given positions, in that order.
  Dataset subset(std::span<const std::size_t> positions) const {
    Dataset out(schema_);
    out.reserve(positions.size());
    for (auto p : positions) {
      out.add_row(row(p), weight(p));
    }
    return out;
  }

  double total_weight() const {
    if (weights_.empty()) {
      return static_cast<double>(size());
    }
    return std::accumulate(weights_.begin(), weights_.end(), 0.0);
  }

 private:
  AttributeSchema schema_;
  std::vector<int> codes_;
  std::vector<double> weights_;
};

/// mass[cell] = (count(cell) + smoothing) / (N + smoothing * |cells|).
inline TabularDensity fit_empirical(const Dataset& dataset, double smoothing) {
  if (dataset.empty()) {
    throw Error("empty dataset");
  }
  if (!(smoothing >= 0.0)) {
    throw Error("fit_empirical: smoothing must be nonnegative");
  }
  const auto& schema = dataset.schema();
  std::vector<double> counts(schema.cell_count(), smoothing);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    counts[schema.cell_index(dataset.row(i))] += dataset.weight(i);
  }
  return TabularDensity::normalized(schema, std::move(counts));
}

/// min over ordered pairs of masses[i] / masses[j]; errors on any zero entry.
inline double min_pairwise_ratio(std::span<const double> masses, const char* what) {
  if (masses.empty()) {
    throw Error(std::string(what) + ": empty marginal");
  }
  double lo = masses[0];
  double hi = masses[0];
  for (double m : masses) {
    if (!(m > 0.0)) {
      throw Error(std::string("degenerate ") + what);
    }
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  // The minimum over all ordered pairs is attained at (argmin, argmax).
  return lo / hi;
}

/// RR(P) = min_{a_i, a_j} p[A=a_i] / p[A=a_j].
inline double representation_rate(const TabularDensity& density) {
  const auto marginal = density.sensitive_marginal();
  return min_pairwise_ratio(marginal, "marginal");
}

/// Representation rate over the joint cells of several attributes (e.g. Y x A).
inline double representation_rate_over(const TabularDensity& density, std::span<const std::size_t> attrs) {
  const auto marginal = density.marginal(attrs);
  return min_pairwise_ratio(marginal, "marginal");
}

/// p[Y=y | A=a] for every group a.
inline std::vector<double> class_conditionals(const TabularDensity& density, int y) {
  const auto& schema = density.schema();
  const auto target = schema.target_index();
  if (!target) {
    throw Error("no target attribute in schema");
  }
  if (y < 0 || y >= schema[*target].cardinality) {
    throw Error("class value out of range");
  }
  const std::size_t groups = schema.group_count();
  std::vector<double> joint(groups, 0.0);
  std::vector<double> marginal(groups, 0.0);
  for (std::size_t cell = 0; cell < schema.cell_count(); ++cell) {
    const auto coords = schema.coords_of(cell);
    const auto g = static_cast<std::size_t>(coords[schema.sensitive_index()]);
    marginal[g] += density[cell];
    if (coords[*target] == y) {
      joint[g] += density[cell];
    }
  }
  std::vector<double> out(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    if (!(marginal[g] > 0.0) || !(joint[g] > 0.0)) {
      throw Error("degenerate conditional");
    }
    out[g] = joint[g] / marginal[g];
  }
  return out;
}

/// min over ordered pairs of p[Y=y|A=a_i] / p[Y=y|A=a_j].
inline double statistical_rate(const TabularDensity& density, int y) {
  const auto cond = class_conditionals(density, y);
  return min_pairwise_ratio(cond, "conditional");
}

/// max over ordered pairs of |p[Y=y|A=a_i] / p[Y=y|A=a_j] - 1|.
inline double discrimination_control(const TabularDensity& density, int y) {
  const auto cond = class_conditionals(density, y);
  double worst = 0.0;
  for (double ci : cond) {
    for (double cj : cond) {
      worst = std::max(worst, std::abs(ci / cj - 1.0));
    }
  }
  return worst;
}

/// KL(p, q) in nats with 0 ln 0 = 0.
inline double kl_divergence(const TabularDensity& p, const TabularDensity& q) {
  if (!(p.schema() == q.schema())) {
    throw Error("kl_divergence: schema mismatch");
  }
  double kl = 0.0;
  for (std::size_t cell = 0; cell < p.mass().size(); ++cell) {
    const double pm = p[cell];
    if (pm == 0.0) {
      continue;
    }
    const double qm = q[cell];
    if (!(qm > 0.0)) {
      throw Error("absolute continuity violated");
    }
    kl += pm * (std::log(pm) - std::log(qm));
  }
  // Rounding can leave a -1e-17 residue for identical tables.
  return std::max(kl, 0.0);
}

namespace detail {

inline constexpr double kMembershipRelTol = 1e-12;

inline void require_same_groups(const TabularDensity& a, const TabularDensity& b) {
  if (a.schema().group_count() != b.schema().group_count()) {
    throw Error("mollifier: sensitive attribute cardinalities differ");
  }
}

}  // namespace detail

/// Relative mollifier membership: for every ordered pair,
/// max{RR(q,i,j)/RR(q0,i,j), RR(q0,i,j)/RR(q,i,j)} <= exp(eps/2).
inline bool mollifier_membership(const TabularDensity& q, const TabularDensity& q0, double eps) {
  if (!(eps > 0.0)) {
    throw Error("mollifier_membership: eps must be positive");
  }
  detail::require_same_groups(q, q0);
  const auto mq = q.sensitive_marginal();
  const auto m0 = q0.sensitive_marginal();
  min_pairwise_ratio(mq, "marginal");
  min_pairwise_ratio(m0, "marginal");
  const double limit = std::exp(eps / 2.0) * (1.0 + detail::kMembershipRelTol);
  for (std::size_t i = 0; i < mq.size(); ++i) {
    for (std::size_t j = 0; j < mq.size(); ++j) {
      const double rel = (mq[i] / mq[j]) / (m0[i] / m0[j]);
      if (std::max(rel, 1.0 / rel) > limit) {
        return false;
      }
    }
  }
  return true;
}

/// Fair-mollifier condition over a finite set: RR(Q,i,j) <= exp(eps) RR(Q',i,j) for all members and pairs.
inline bool is_fair_mollifier(std::span<const TabularDensity> members, double eps) {
  if (!(eps > 0.0)) {
    throw Error("is_fair_mollifier: eps must be positive");
  }
  std::vector<std::vector<double>> marginals;
  marginals.reserve(members.size());
  for (const auto& m : members) {
    detail::require_same_groups(m, members.front());
    marginals.push_back(m.sensitive_marginal());
    min_pairwise_ratio(marginals.back(), "marginal");
  }
  const double factor = std::exp(eps) * (1.0 + detail::kMembershipRelTol);
  for (const auto& a : marginals) {
    for (const auto& b : marginals) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
          if (a[i] / a[j] > factor * (b[i] / b[j])) {
            return false;
          }
        }
      }
    }
  }
  return true;
}

}  // namespace fbde

#endif  // FBDE_TABULAR_HPP
