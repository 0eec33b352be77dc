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

#ifndef FBDE_SERIALIZE_HPP
#define FBDE_SERIALIZE_HPP

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbde/boosted_density.hpp"
#include "fbde/data.hpp"
#include "fbde/engine.hpp"
#include "fbde/guarantees.hpp"
#include "fbde/numeric.hpp"
#include "fbde/tabular.hpp"
#include "fbde/weak_learner.hpp"

/**
 * \file
 * \brief Versioned JSON for schemas, tables, classifiers and boosted models; CSV traces.
 *
 * Numbers are written in shortest round-trip form, so save/load is lossless.
 */

namespace fbde {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

namespace detail {

template <class T>
T get_field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(std::string("json: missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("json: bad field '") + key + "': " + e.what());
  }
}

inline void check_header(const json& j, const char* format) {
  if (get_field<std::string>(j, "format") != format) {
    throw Error(std::string("json: expected format '") + format + "'");
  }
  if (get_field<int>(j, "version") != kFormatVersion) {
    throw Error("json: unsupported format version");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Schema and tables

inline json schema_to_json(const AttributeSchema& s) {
  json attrs = json::array();
  for (std::size_t i = 0; i < s.size(); ++i) {
    attrs.push_back({{"name", s[i].name},
                     {"cardinality", s[i].cardinality},
                     {"kind", s[i].kind == AttributeKind::kCategorical ? "categorical" : "ordinal"}});
  }
  json j = {{"attributes", attrs}, {"sensitive", s.sensitive_index()}};
  j["target"] = s.target_index() ? json(*s.target_index()) : json(nullptr);
  return j;
}

inline AttributeSchema schema_from_json(const json& j) {
  std::vector<Attribute> attrs;
  for (const auto& a : detail::get_field<json>(j, "attributes")) {
    const auto kind = detail::get_field<std::string>(a, "kind");
    if (kind != "categorical" && kind != "ordinal") {
      throw Error("json: unknown attribute kind '" + kind + "'");
    }
    attrs.push_back({detail::get_field<std::string>(a, "name"), detail::get_field<int>(a, "cardinality"),
                     kind == "categorical" ? AttributeKind::kCategorical : AttributeKind::kOrdinal});
  }
  std::optional<std::size_t> target;
  if (j.contains("target") && !j.at("target").is_null()) {
    target = detail::get_field<std::size_t>(j, "target");
  }
  return AttributeSchema(std::move(attrs), detail::get_field<std::size_t>(j, "sensitive"), target);
}

inline json density_to_json(const TabularDensity& d) {
  return {{"format", "fbde-density"}, {"version", kFormatVersion}, {"schema", schema_to_json(d.schema())},
          {"mass", d.mass()}};
}

inline TabularDensity density_from_json(const json& j) {
  detail::check_header(j, "fbde-density");
  return TabularDensity(schema_from_json(detail::get_field<json>(j, "schema")),
                        detail::get_field<std::vector<double>>(j, "mass"));
}

// ---------------------------------------------------------------------------------------------
// Classifiers

namespace detail {

inline json tree_node_to_json(const DecisionTree& tree, std::size_t idx) {
  const auto& n = tree.nodes()[idx];
  if (n.is_leaf()) {
    return {{"leaf", n.leaf}};
  }
  return {{"attr", n.attr},
          {"split", {{"op", n.kind == SplitKind::kEquals ? "eq" : "le"}, {"value", n.value}}},
          {"left", tree_node_to_json(tree, static_cast<std::size_t>(n.left))},
          {"right", tree_node_to_json(tree, static_cast<std::size_t>(n.right))}};
}

inline int tree_node_from_json(const json& j, std::vector<DecisionTree::Node>& nodes, int depth) {
  if (depth > 4096) {
    throw Error("json: tree too deep");
  }
  const auto idx = static_cast<int>(nodes.size());
  nodes.emplace_back();
  if (j.contains("leaf")) {
    nodes[static_cast<std::size_t>(idx)].leaf = get_field<double>(j, "leaf");
    return idx;
  }
  DecisionTree::Node n;
  n.attr = get_field<int>(j, "attr");
  if (n.attr < 0) {
    throw Error("json: negative split attribute");
  }
  const auto split = get_field<json>(j, "split");
  const auto op = get_field<std::string>(split, "op");
  if (op != "eq" && op != "le") {
    throw Error("json: unknown split op '" + op + "'");
  }
  n.kind = op == "eq" ? SplitKind::kEquals : SplitKind::kLessEqual;
  n.value = get_field<int>(split, "value");
  n.left = tree_node_from_json(get_field<json>(j, "left"), nodes, depth + 1);
  n.right = tree_node_from_json(get_field<json>(j, "right"), nodes, depth + 1);
  nodes[static_cast<std::size_t>(idx)] = n;
  return idx;
}

}  // namespace detail

inline json tree_to_json(const DecisionTree& tree) {
  return {{"type", "tree"}, {"c_bound", tree.c_bound()}, {"root", detail::tree_node_to_json(tree, 0)}};
}

inline DecisionTree tree_from_json(const json& j) {
  std::vector<DecisionTree::Node> nodes;
  detail::tree_node_from_json(detail::get_field<json>(j, "root"), nodes, 0);
  return DecisionTree(std::move(nodes), detail::get_field<double>(j, "c_bound"));
}

inline json classifier_to_json(const Classifier& c) {
  if (const auto* tree = std::get_if<DecisionTree>(&c)) {
    return tree_to_json(*tree);
  }
  const auto& table = std::get<TableClassifier>(c);
  return {{"type", "table"}, {"c_bound", table.c_bound()}, {"values", table.values()}};
}

/// Table classifiers carry no schema of their own; `schema` supplies it.
inline Classifier classifier_from_json(const json& j, const AttributeSchema& schema) {
  const auto type = detail::get_field<std::string>(j, "type");
  if (type == "tree") {
    auto tree = tree_from_json(j);
    for (const auto& n : tree.nodes()) {
      if (!n.is_leaf() && static_cast<std::size_t>(n.attr) >= schema.size()) {
        throw Error("json: split attribute outside the schema");
      }
    }
    return tree;
  }
  if (type == "table") {
    return TableClassifier(schema, detail::get_field<std::vector<double>>(j, "values"),
                           detail::get_field<double>(j, "c_bound"));
  }
  throw Error("json: unknown classifier type '" + type + "'");
}

// ---------------------------------------------------------------------------------------------
// Configuration

inline json scheme_to_json(const LeveragingScheme& s) {
  json j = {{"kind", scheme_name(s)}, {"c_bound", s.c_bound}};
  if (s.kind == LeveragingScheme::Kind::kConstant) {
    j["theta"] = s.constant;
  } else {
    j["tau"] = s.tau;
  }
  return j;
}

inline LeveragingScheme scheme_from_json(const json& j) {
  const auto kind = detail::get_field<std::string>(j, "kind");
  const auto c = detail::get_field<double>(j, "c_bound");
  LeveragingScheme s;
  if (kind == "exact") {
    s = LeveragingScheme::exact(detail::get_field<double>(j, "tau"), c);
  } else if (kind == "relative") {
    s = LeveragingScheme::relative(detail::get_field<double>(j, "tau"), c);
  } else if (kind == "constant") {
    s = LeveragingScheme::constant_theta(detail::get_field<double>(j, "theta"), c);
  } else {
    throw Error("json: unknown scheme '" + kind + "'");
  }
  s.validate();
  return s;
}

inline const char* leaf_value_name(LeafValue v) {
  switch (v) {
    case LeafValue::kLogRatio:
      return "log_ratio";
    case LeafValue::kProportion:
      return "proportion";
    case LeafValue::kSign:
      return "sign";
  }
  return "log_ratio";
}

inline json fit_config_to_json(const FitConfig& cfg) {
  return {{"rounds", cfg.rounds},
          {"scheme", scheme_to_json(cfg.scheme)},
          {"tree",
           {{"max_depth", cfg.tree.max_depth},
            {"min_leaf_count", cfg.tree.min_leaf_count},
            {"c_bound", cfg.tree.c_bound},
            {"leaf_smoothing", cfg.tree.leaf_smoothing},
            {"leaf_value", leaf_value_name(cfg.tree.leaf_value)},
            {"balance_classes", cfg.tree.balance_classes}}},
          {"negatives_multiplier", cfg.negatives_multiplier},
          {"negatives", cfg.negatives == NegativeSource::kFresh ? "fresh" : "reweighted_pool"},
          {"target_smoothing", cfg.target_smoothing},
          {"seed", cfg.seed}};
}

inline json encoding_to_json(const Encoding& enc) {
  json cols = json::array();
  for (const auto& c : enc.columns) {
    json col = {{"name", c.name}, {"kind", c.kind == ColumnKind::kCategorical ? "categorical" : "continuous"}};
    if (c.kind == ColumnKind::kCategorical) {
      col["levels"] = c.levels;
    } else {
      col["edges"] = c.edges;
    }
    cols.push_back(std::move(col));
  }
  json j = {{"columns", cols}, {"sensitive", enc.sensitive_index}};
  j["target"] = enc.target_index ? json(*enc.target_index) : json(nullptr);
  return j;
}

inline Encoding encoding_from_json(const json& j) {
  Encoding enc;
  for (const auto& c : detail::get_field<json>(j, "columns")) {
    ColumnEncoding col;
    col.name = detail::get_field<std::string>(c, "name");
    const auto kind = detail::get_field<std::string>(c, "kind");
    if (kind == "categorical") {
      col.kind = ColumnKind::kCategorical;
      col.levels = detail::get_field<std::vector<std::string>>(c, "levels");
    } else if (kind == "continuous") {
      col.kind = ColumnKind::kContinuous;
      col.edges = detail::get_field<std::vector<double>>(c, "edges");
      if (col.edges.size() < 2) {
        throw Error("json: continuous column needs at least two edges");
      }
    } else {
      throw Error("json: unknown column kind '" + kind + "'");
    }
    enc.columns.push_back(std::move(col));
  }
  enc.sensitive_index = detail::get_field<std::size_t>(j, "sensitive");
  if (j.contains("target") && !j.at("target").is_null()) {
    enc.target_index = detail::get_field<std::size_t>(j, "target");
  }
  return enc;
}

// ---------------------------------------------------------------------------------------------
// Models

struct ModelFile {
  BoostedDensity model;
  LeveragingScheme scheme;
  std::optional<Encoding> encoding;
  json config;             ///< resolved fit configuration, informational
  std::string manifest;    ///< file name of the manifest that produced this model
};

inline json initial_to_json(const InitialDensity& q0) {
  json conds = json::array();
  for (std::size_t g = 0; g < q0.group_count(); ++g) {
    const auto c = q0.conditional(g);
    conds.push_back(std::vector<double>(c.begin(), c.end()));
  }
  return {{"schema", schema_to_json(q0.schema())}, {"conditionals", conds}};
}

inline InitialDensity initial_from_json(const json& j) {
  return InitialDensity(schema_from_json(detail::get_field<json>(j, "schema")),
                        detail::get_field<std::vector<std::vector<double>>>(j, "conditionals"));
}

inline json model_to_json(const ModelFile& file) {
  json rounds = json::array();
  for (const auto& r : file.model.rounds()) {
    rounds.push_back({{"theta", r.theta},
                      {"classifier", classifier_to_json(r.classifier)},
                      {"z", r.z},
                      {"z_by_group", r.z_by_group}});
  }
  json j = {{"format", "fbde-model"},
            {"version", kFormatVersion},
            {"initial", initial_to_json(file.model.initial())},
            {"scheme", scheme_to_json(file.scheme)},
            {"rounds", rounds}};
  j["encoding"] = file.encoding ? encoding_to_json(*file.encoding) : json(nullptr);
  j["config"] = file.config.is_null() ? json::object() : file.config;
  j["manifest"] = file.manifest;
  return j;
}

/// Stored normalizers are checked against a fresh computation.
inline ModelFile model_from_json(const json& j) {
  detail::check_header(j, "fbde-model");
  ModelFile out{BoostedDensity(initial_from_json(detail::get_field<json>(j, "initial"))),
                scheme_from_json(detail::get_field<json>(j, "scheme")), std::nullopt, json::object(), ""};
  const auto& schema = out.model.schema();
  for (const auto& r : detail::get_field<json>(j, "rounds")) {
    Round round;
    round.theta = detail::get_field<double>(r, "theta");
    round.classifier = classifier_from_json(detail::get_field<json>(r, "classifier"), schema);
    round.z = detail::get_field<double>(r, "z");
    round.z_by_group = detail::get_field<std::vector<double>>(r, "z_by_group");
    const auto fresh = compute_normalizers(out.model, round.classifier, round.theta);
    if (std::abs(fresh.z - round.z) > 1e-9 * fresh.z) {
      throw Error("model: stored normalizer disagrees with recomputation");
    }
    out.model.add_round(std::move(round));
  }
  if (j.contains("encoding") && !j.at("encoding").is_null()) {
    out.encoding = encoding_from_json(j.at("encoding"));
    if (!(out.encoding->schema() == schema)) {
      throw Error("model: encoding does not match the model schema");
    }
  }
  if (j.contains("config")) {
    out.config = j.at("config");
  }
  if (j.contains("manifest") && j.at("manifest").is_string()) {
    out.manifest = j.at("manifest").get<std::string>();
  }
  return out;
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(what + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------------------------
// Trace CSV

inline constexpr const char* kTraceHeader = "t,theta,gamma_p,gamma_q,regime,rr,rr_bound,kl_train,kl_test,z";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    out << r.t << ',' << format_double(r.theta) << ',' << format_double(r.gamma_p) << ','
        << format_double(r.gamma_q) << ',' << regime_name(r.regime) << ',' << format_double(r.rr) << ','
        << format_double(r.rr_lower_bound) << ',' << (r.kl_train ? format_double(*r.kl_train) : "") << ','
        << (r.kl_test ? format_double(*r.kl_test) : "") << ',' << format_double(r.z) << '\n';
  }
}

/// Reads the columns written by write_trace; per-group normalizers and sample margins are not stored.
inline std::vector<TraceRow> parse_trace(std::string_view text) {
  const auto table = parse_csv(text);
  std::string header;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    header += (i ? "," : "") + table.header[i];
  }
  if (header != kTraceHeader) {
    throw Error("trace: unexpected header");
  }
  auto num = [](const std::string& cell) {
    const auto v = detail::parse_number(cell);
    if (!v) {
      throw Error("trace: bad number '" + cell + "'");
    }
    return *v;
  };
  auto opt = [&](const std::string& cell) -> std::optional<double> {
    if (cell.empty()) {
      return std::nullopt;
    }
    return num(cell);
  };
  std::vector<TraceRow> out;
  for (const auto& row : table.rows) {
    TraceRow r;
    r.t = static_cast<std::size_t>(num(row[0]));
    r.theta = num(row[1]);
    r.gamma_p = num(row[2]);
    r.gamma_q = num(row[3]);
    r.regime = row[4] == "HBS" ? Regime::kHbs : (row[4] == "LBS" ? Regime::kLbs : Regime::kFail);
    r.rr = num(row[5]);
    r.rr_lower_bound = num(row[6]);
    r.kl_train = opt(row[7]);
    r.kl_test = opt(row[8]);
    r.z = num(row[9]);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Reports

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json guarantee_report_to_json(const GuaranteeReport& rep) {
  json rounds = json::array();
  for (const auto& r : rep.per_round) {
    rounds.push_back({{"t", r.t},
                      {"theta", r.theta},
                      {"rr", r.rr},
                      {"rr_bound", r.rr_bound},
                      {"rr_ok", r.rr_ok},
                      {"gamma_p", r.gamma_p},
                      {"gamma_q", r.gamma_q},
                      {"regime", regime_name(r.regime)},
                      {"lambda", optional_json(r.lambda)},
                      {"kl_drop_bound", optional_json(r.drop_bound)},
                      {"kl_drop_measured", r.measured_drop},
                      {"kl_drop_checked", r.drop_checked},
                      {"kl_drop_ok", r.drop_ok}});
  }
  return {{"format", "fbde-guarantees"},
          {"version", kFormatVersion},
          {"scheme", rep.scheme},
          {"tau", rep.tau},
          {"rounds", rep.rounds},
          {"per_round", rounds},
          {"kl_initial", rep.kl_initial},
          {"kl_final", rep.kl_final},
          {"delta",
           {{"measured", rep.delta_measured},
            {"upper", rep.delta_upper},
            {"upper_ok", rep.delta_ok},
            {"lower_reported", optional_json(rep.delta_lower)},
            {"gamma_p_min", rep.gamma_p_min},
            {"gamma_q_min", rep.gamma_q_min}}},
          {"mollifier", {{"eps", rep.mollifier_eps}, {"member", rep.mollifier_ok}}},
          {"implied",
           {{"rr", rep.rr_final},
            {"sr_bound", rep.sr_implied},
            {"dc_bound", rep.dc_implied},
            {"eo_rho", rep.eo_rho},
            {"eo_fnr_bound", optional_json(rep.eo_fnr_bound)}}},
          {"all_ok", rep.all_ok()}};
}

}  // namespace fbde

#endif  // FBDE_SERIALIZE_HPP
