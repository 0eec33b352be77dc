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

#ifndef FBDE_WEAK_LEARNER_HPP
#define FBDE_WEAK_LEARNER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "fbde/numeric.hpp"
#include "fbde/tabular.hpp"

/**
 * \file
 * \brief Bounded sufficient statistics c : X -> [-C, C] and the Gini decision-tree learner that
 * separates samples of the target from samples of the current model.
 */

namespace fbde {

/// Mapping from leaf class weights to the leaf output.
enum class LeafValue {
  /// clip(ln((w_P + s) / (w_Q + s)), -C, C): a bounded estimate of the log density ratio.
  kLogRatio,
  /// C (w_P - w_Q) / (w_P + w_Q + 2 s): the smoothed signed class proportion.
  kProportion,
  /// C sign(w_P - w_Q): the tree's hard class prediction, 0 on ties.
  kSign,
};

struct TreeConfig {
  int max_depth = 8;
  int min_leaf_count = 5;
  double c_bound = kLn2;
  double leaf_smoothing = 1.0;
  LeafValue leaf_value = LeafValue::kSign;
  /// Rescale Q weights so both classes carry the same total weight.
  bool balance_classes = true;

  void validate() const {
    if (max_depth < 1) {
      throw Error("tree config: max_depth must be >= 1");
    }
    if (min_leaf_count < 1) {
      throw Error("tree config: min_leaf_count must be >= 1");
    }
    if (!(c_bound > 0.0) || !std::isfinite(c_bound)) {
      throw Error("tree config: c_bound must be positive");
    }
    if (!(leaf_smoothing >= 0.0)) {
      throw Error("tree config: leaf_smoothing must be nonnegative");
    }
  }
};

enum class SplitKind {
  kEquals,     ///< left iff code == value (categorical, one-vs-rest)
  kLessEqual,  ///< left iff code <= value (ordinal threshold)
};

/// Binary tree over the non-sensitive attributes with real leaves in [-C, C].
class DecisionTree {
 public:
  struct Node {
    int attr = -1;  ///< schema attribute index; -1 for a leaf
    SplitKind kind = SplitKind::kEquals;
    int value = 0;
    int left = -1;
    int right = -1;
    double leaf = 0.0;

    bool is_leaf() const { return attr < 0; }
  };

  DecisionTree() : nodes_{Node{}} {}
  DecisionTree(std::vector<Node> nodes, double c_bound) : nodes_(std::move(nodes)), c_bound_(c_bound) {
    if (nodes_.empty()) {
      throw Error("tree: no nodes");
    }
    if (!(c_bound_ > 0.0)) {
      throw Error("tree: c_bound must be positive");
    }
    for (const auto& n : nodes_) {
      if (n.is_leaf()) {
        if (!(std::abs(n.leaf) <= c_bound_)) {
          throw Error("tree: leaf value outside [-C, C]");
        }
      } else if (n.left <= 0 || n.right <= 0 || static_cast<std::size_t>(n.left) >= nodes_.size() ||
                 static_cast<std::size_t>(n.right) >= nodes_.size()) {
        throw Error("tree: dangling child index");
      }
    }
  }

  double operator()(std::span<const int> coords) const {
    const Node* n = &nodes_[0];
    while (!n->is_leaf()) {
      const int code = coords[static_cast<std::size_t>(n->attr)];
      const bool go_left = n->kind == SplitKind::kEquals ? code == n->value : code <= n->value;
      n = &nodes_[static_cast<std::size_t>(go_left ? n->left : n->right)];
    }
    return n->leaf;
  }

  /// Index of the leaf reached by `coords`.
  std::size_t leaf_of(std::span<const int> coords) const {
    std::size_t idx = 0;
    while (!nodes_[idx].is_leaf()) {
      const auto& n = nodes_[idx];
      const int code = coords[static_cast<std::size_t>(n.attr)];
      const bool go_left = n.kind == SplitKind::kEquals ? code == n.value : code <= n.value;
      idx = static_cast<std::size_t>(go_left ? n.left : n.right);
    }
    return idx;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  double c_bound() const { return c_bound_; }

  int depth() const { return depth_from(0); }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
  }

  std::set<int> split_attributes() const {
    std::set<int> out;
    for (const auto& n : nodes_) {
      if (!n.is_leaf()) {
        out.insert(n.attr);
      }
    }
    return out;
  }

 private:
  int depth_from(std::size_t idx) const {
    const auto& n = nodes_[idx];
    if (n.is_leaf()) {
      return 0;
    }
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)), depth_from(static_cast<std::size_t>(n.right)));
  }

  std::vector<Node> nodes_;
  double c_bound_ = kLn2;
};

/// Arbitrary bounded statistic given as one value per x cell of a schema.
class TableClassifier {
 public:
  TableClassifier(AttributeSchema schema, std::vector<double> values, double c_bound)
      : schema_(std::move(schema)), values_(std::move(values)), c_bound_(c_bound) {
    if (values_.size() != schema_.x_cell_count()) {
      throw Error("table classifier: one value per x cell required");
    }
    if (!(c_bound_ > 0.0)) {
      throw Error("table classifier: c_bound must be positive");
    }
    for (double v : values_) {
      if (!(std::abs(v) <= c_bound_)) {
        throw Error("classifier unbounded");
      }
    }
  }

  double operator()(std::span<const int> coords) const { return values_[schema_.x_index(coords)]; }
  const std::vector<double>& values() const { return values_; }
  const AttributeSchema& schema() const { return schema_; }
  double c_bound() const { return c_bound_; }

 private:
  AttributeSchema schema_;
  std::vector<double> values_;
  double c_bound_;
};

using Classifier = std::variant<DecisionTree, TableClassifier>;

inline double evaluate(const Classifier& c, std::span<const int> coords) {
  return std::visit([&](const auto& impl) { return impl(coords); }, c);
}

inline double c_bound_of(const Classifier& c) {
  return std::visit([](const auto& impl) { return impl.c_bound(); }, c);
}

/// Weak-learning margins of a classifier on a pair of samples.
enum class Regime { kHbs, kLbs, kFail };

inline std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::kHbs:
      return "HBS";
    case Regime::kLbs:
      return "LBS";
    case Regime::kFail:
      return "FAIL";
  }
  return "FAIL";
}

/// HBS iff gamma_q in [1/3, 1]; LBS iff gamma_q in (0, 1/3); FAIL iff either margin <= 0.
inline Regime classify_regime(double gamma_p, double gamma_q) {
  if (!(gamma_p > 0.0) || !(gamma_q > 0.0)) {
    return Regime::kFail;
  }
  return gamma_q >= 1.0 / 3.0 ? Regime::kHbs : Regime::kLbs;
}

struct WlaEstimate {
  double gamma_p = 0.0;
  double gamma_q = 0.0;
  Regime regime = Regime::kFail;
};

/// gamma_p = mean_P[c] / C, gamma_q = mean_Q[-c] / C (weighted means).
inline WlaEstimate estimate_wla(const Classifier& c, const Dataset& p_samples, const Dataset& q_samples) {
  if (p_samples.empty() || q_samples.empty()) {
    throw Error("estimate_wla: empty sample set");
  }
  const double bound = c_bound_of(c);
  auto weighted_mean = [&](const Dataset& d) {
    double sum = 0.0;
    double w = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      sum += d.weight(i) * evaluate(c, d.row(i));
      w += d.weight(i);
    }
    if (!(w > 0.0)) {
      throw Error("estimate_wla: zero total weight");
    }
    return sum / w;
  };
  WlaEstimate est;
  est.gamma_p = weighted_mean(p_samples) / bound;
  est.gamma_q = -weighted_mean(q_samples) / bound;
  est.regime = classify_regime(est.gamma_p, est.gamma_q);
  return est;
}

namespace detail {

struct ClassMass {
  double wp = 0.0;
  double wq = 0.0;
  std::size_t count = 0;

  void add(const ClassMass& o) {
    wp += o.wp;
    wq += o.wq;
    count += o.count;
  }
  double total() const { return wp + wq; }
  /// W * gini = 2 w_P w_Q / W.
  double impurity() const { return total() > 0.0 ? 2.0 * wp * wq / total() : 0.0; }
};

struct TrainingCell {
  std::vector<int> coords;
  ClassMass mass;
};

inline double leaf_value(const ClassMass& m, const TreeConfig& cfg) {
  const double c = cfg.c_bound;
  const double s = cfg.leaf_smoothing;
  if (cfg.leaf_value == LeafValue::kSign) {
    return m.wp > m.wq ? c : (m.wq > m.wp ? -c : 0.0);
  }
  if (cfg.leaf_value == LeafValue::kProportion) {
    const double denom = m.wp + m.wq + 2.0 * s;
    return denom > 0.0 ? std::clamp(c * (m.wp - m.wq) / denom, -c, c) : 0.0;
  }
  const double num = m.wp + s;
  const double den = m.wq + s;
  if (num <= 0.0 && den <= 0.0) {
    return 0.0;
  }
  if (den <= 0.0) {
    return c;
  }
  if (num <= 0.0) {
    return -c;
  }
  return std::clamp(std::log(num / den), -c, c);
}

class TreeBuilder {
 public:
  TreeBuilder(const AttributeSchema& schema, std::vector<TrainingCell> cells, const TreeConfig& cfg)
      : schema_(schema), cells_(std::move(cells)), cfg_(cfg) {}

  DecisionTree build() {
    std::vector<std::size_t> all(cells_.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      all[i] = i;
    }
    nodes_.clear();
    nodes_.emplace_back();
    grow(0, all, 0);
    return DecisionTree(std::move(nodes_), cfg_.c_bound);
  }

 private:
  struct Candidate {
    int attr = -1;
    SplitKind kind = SplitKind::kEquals;
    int value = 0;
    double impurity = 0.0;
  };

  bool goes_left(const TrainingCell& cell, const Candidate& s) const {
    const int code = cell.coords[static_cast<std::size_t>(s.attr)];
    return s.kind == SplitKind::kEquals ? code == s.value : code <= s.value;
  }

  void grow(std::size_t node, const std::vector<std::size_t>& members, int depth) {
    ClassMass total;
    for (auto i : members) {
      total.add(cells_[i].mass);
    }
    nodes_[node].leaf = leaf_value(total, cfg_);
    if (depth >= cfg_.max_depth || total.wp <= 0.0 || total.wq <= 0.0 ||
        total.count < 2 * static_cast<std::size_t>(cfg_.min_leaf_count)) {
      return;
    }
    const auto best = best_split(members, total);
    if (!best) {
      return;
    }
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto i : members) {
      (goes_left(cells_[i], *best) ? left : right).push_back(i);
    }
    const auto l = nodes_.size();
    nodes_.emplace_back();
    const auto r = nodes_.size();
    nodes_.emplace_back();
    nodes_[node].attr = best->attr;
    nodes_[node].kind = best->kind;
    nodes_[node].value = best->value;
    nodes_[node].left = static_cast<int>(l);
    nodes_[node].right = static_cast<int>(r);
    nodes_[node].leaf = 0.0;
    grow(l, left, depth + 1);
    grow(r, right, depth + 1);
  }

  std::optional<Candidate> best_split(const std::vector<std::size_t>& members, const ClassMass& total) const {
    const double parent = total.impurity();
    const auto min_count = static_cast<std::size_t>(cfg_.min_leaf_count);
    std::optional<Candidate> best;
    for (std::size_t attr = 0; attr < schema_.size(); ++attr) {
      if (attr == schema_.sensitive_index()) {
        continue;
      }
      const auto card = static_cast<std::size_t>(schema_[attr].cardinality);
      if (card < 2) {
        continue;
      }
      std::vector<ClassMass> by_code(card);
      for (auto i : members) {
        by_code[static_cast<std::size_t>(cells_[i].coords[attr])].add(cells_[i].mass);
      }
      auto consider = [&](const ClassMass& left, SplitKind kind, int value) {
        const ClassMass right{std::max(total.wp - left.wp, 0.0), std::max(total.wq - left.wq, 0.0),
                              total.count - left.count};
        if (left.count < min_count || right.count < min_count) {
          return;
        }
        const double impurity = left.impurity() + right.impurity();
        if (!best || impurity < best->impurity) {
          best = Candidate{static_cast<int>(attr), kind, value, impurity};
        }
      };
      if (schema_[attr].kind == AttributeKind::kCategorical) {
        for (std::size_t v = 0; v < card; ++v) {
          consider(by_code[v], SplitKind::kEquals, static_cast<int>(v));
        }
      } else {
        ClassMass prefix;
        for (std::size_t v = 0; v + 1 < card; ++v) {
          prefix.add(by_code[v]);
          consider(prefix, SplitKind::kLessEqual, static_cast<int>(v));
        }
      }
    }
    if (!best || !(parent - best->impurity > 1e-12 * total.total())) {
      return std::nullopt;
    }
    return best;
  }

  const AttributeSchema& schema_;
  std::vector<TrainingCell> cells_;
  TreeConfig cfg_;
  std::vector<DecisionTree::Node> nodes_;
};

/// Aggregates both sample sets by x cell; the sensitive coordinate is zeroed so it cannot leak.
inline std::vector<TrainingCell> aggregate_cells(const Dataset& p, const Dataset& q, double q_scale) {
  const auto& schema = p.schema();
  std::map<std::size_t, TrainingCell> cells;
  auto add = [&](const Dataset& d, bool is_p, double scale) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto row = d.row(i);
      auto [it, inserted] = cells.try_emplace(schema.x_index(row));
      if (inserted) {
        it->second.coords.assign(row.begin(), row.end());
        it->second.coords[schema.sensitive_index()] = 0;
      }
      (is_p ? it->second.mass.wp : it->second.mass.wq) += scale * d.weight(i);
      ++it->second.mass.count;
    }
  };
  add(p, true, 1.0);
  add(q, false, q_scale);
  std::vector<TrainingCell> out;
  out.reserve(cells.size());
  for (auto& [_, cell] : cells) {
    out.push_back(std::move(cell));
  }
  return out;
}

inline double q_scale_for(const Dataset& p, const Dataset& q, const TreeConfig& cfg) {
  if (!cfg.balance_classes) {
    return 1.0;
  }
  const double wq = q.total_weight();
  if (!(wq > 0.0)) {
    throw Error("train_tree: Q samples carry zero weight");
  }
  return p.total_weight() / wq;
}

}  // namespace detail

/**
 * Greedy top-down Gini induction separating P-samples (label +) from Q-samples (label -).
 *
 * Only non-sensitive attributes are split on: categorical attributes one-vs-rest, ordinal ones by
 * threshold. Ties go to the lowest attribute index, then the lowest split value. A node becomes a
 * leaf at max_depth, when pure, when either child would hold fewer than min_leaf_count samples, or
 * when no split lowers the weighted impurity. Induction is deterministic.
 */
inline DecisionTree train_tree(const Dataset& p_samples, const Dataset& q_samples, const TreeConfig& cfg) {
  cfg.validate();
  if (p_samples.empty() || q_samples.empty()) {
    throw Error("train_tree: empty sample set");
  }
  if (!(p_samples.schema() == q_samples.schema())) {
    throw Error("train_tree: schema mismatch between P and Q samples");
  }
  const double q_scale = detail::q_scale_for(p_samples, q_samples, cfg);
  auto cells = detail::aggregate_cells(p_samples, q_samples, q_scale);
  detail::TreeBuilder builder(p_samples.schema(), std::move(cells), cfg);
  return builder.build();
}

/// Weighted Gini impurity of the tree's leaves on the training pair (same class balancing as training).
inline double training_gini(const DecisionTree& tree, const Dataset& p_samples, const Dataset& q_samples,
                            const TreeConfig& cfg) {
  const double q_scale = detail::q_scale_for(p_samples, q_samples, cfg);
  std::vector<detail::ClassMass> leaves(tree.nodes().size());
  for (const auto& cell : detail::aggregate_cells(p_samples, q_samples, q_scale)) {
    leaves[tree.leaf_of(cell.coords)].add(cell.mass);
  }
  double impurity = 0.0;
  double total = 0.0;
  for (const auto& l : leaves) {
    impurity += l.impurity();
    total += l.total();
  }
  return total > 0.0 ? impurity / total : 0.0;
}

}  // namespace fbde

#endif  // FBDE_WEAK_LEARNER_HPP
