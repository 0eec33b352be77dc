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

#ifndef FBDE_DATA_HPP
#define FBDE_DATA_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fbde/boosted_density.hpp"
#include "fbde/numeric.hpp"
#include "fbde/tabular.hpp"

/**
 * \file
 * \brief CSV ingestion and discretization, k-fold splits, Q_0 construction and the Gaussian
 * mixture generator.
 */

namespace fbde {

// ---------------------------------------------------------------------------------------------
// CSV

/// Header plus string cells; every record has the header's width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error("csv: no column named '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
  }
};

/// RFC 4180 reader: quoted fields, doubled quotes, embedded separators and line breaks, CRLF.
inline CsvTable parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) {
      records.push_back(std::move(record));
    }
    record.clear();
  };
  while (i < text.size()) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        quoted = false;
      } else {
        field.push_back(ch);
      }
      ++i;
      continue;
    }
    if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == ',') {
      end_field();
    } else if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_record();
      ++i;
    } else if (ch == '\n' || ch == '\r') {
      end_record();
    } else {
      field.push_back(ch);
      field_started = true;
    }
    ++i;
  }
  if (quoted) {
    throw Error("csv: unterminated quoted field");
  }
  if (field_started || !field.empty() || !record.empty()) {
    end_record();
  }
  if (records.empty()) {
    throw Error("csv: missing header row");
  }
  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw Error("csv: record " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                  " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open '" + path + "'");
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) {
    return std::nullopt;
  }
  if (s.front() == '+') {
    s.remove_prefix(1);
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return v;
}

inline bool is_missing(std::string_view s) {
  s = trim(s);
  if (s.empty()) {
    return true;
  }
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower == "nan" || lower == "-nan" || lower == "+nan";
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Discretization

/// Equal-width bins over [lo, hi]; values outside clamp to the edge bins.
class Binner {
 public:
  Binner(double lo, double hi, int bins) : lo_(lo), hi_(hi), bins_(bins) {
    if (bins < 1) {
      throw Error("binner: need at least one bin");
    }
    if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
      throw Error("binner: invalid range");
    }
  }

  static Binner fit(std::span<const double> values, int bins) {
    if (values.empty()) {
      throw Error("binner: no values");
    }
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    return {*mn, *mx, bins};
  }

  int operator()(double x) const {
    if (std::isnan(x)) {
      throw Error("binner: NaN value");
    }
    if (!(hi_ > lo_)) {
      return 0;
    }
    const double pos = (x - lo_) / (hi_ - lo_) * bins_;
    if (!(pos > 0.0)) {
      return 0;
    }
    if (pos >= bins_) {
      return bins_ - 1;
    }
    return std::min(static_cast<int>(pos), bins_ - 1);
  }

  std::vector<double> edges() const {
    std::vector<double> e(static_cast<std::size_t>(bins_) + 1);
    for (int b = 0; b <= bins_; ++b) {
      e[static_cast<std::size_t>(b)] = lo_ + (hi_ - lo_) * b / bins_;
    }
    e.back() = hi_;
    return e;
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  int bins() const { return bins_; }

 private:
  double lo_;
  double hi_;
  int bins_;
};

enum class ColumnRole { kFeature, kSensitive, kTarget, kIgnore };
enum class ColumnKind { kAuto, kCategorical, kContinuous };

struct CsvSpec {
  std::string path;
  std::string sensitive;
  std::optional<std::string> target;
  std::vector<std::string> ignore;
  /// Kind overrides; anything unlisted is detected (continuous iff all numeric with a non-integer).
  std::vector<std::string> continuous;
  std::vector<std::string> categorical;
  int bins = 50;

  ColumnRole role_of(const std::string& name) const {
    if (name == sensitive) {
      return ColumnRole::kSensitive;
    }
    if (target && name == *target) {
      return ColumnRole::kTarget;
    }
    if (std::find(ignore.begin(), ignore.end(), name) != ignore.end()) {
      return ColumnRole::kIgnore;
    }
    return ColumnRole::kFeature;
  }

  ColumnKind kind_of(const std::string& name) const {
    const bool cont = std::find(continuous.begin(), continuous.end(), name) != continuous.end();
    const bool cat = std::find(categorical.begin(), categorical.end(), name) != categorical.end();
    if (cont && cat) {
      throw Error("csv spec: column '" + name + "' declared both continuous and categorical");
    }
    return cont ? ColumnKind::kContinuous : (cat ? ColumnKind::kCategorical : ColumnKind::kAuto);
  }
};

/// How one CSV column maps to attribute codes.
struct ColumnEncoding {
  std::string name;
  ColumnKind kind = ColumnKind::kCategorical;
  std::vector<std::string> levels;  ///< categorical, in first-appearance order
  std::vector<double> edges;        ///< continuous, bins + 1 entries

  int cardinality() const {
    return kind == ColumnKind::kCategorical ? static_cast<int>(levels.size()) : static_cast<int>(edges.size()) - 1;
  }

  Binner binner() const { return {edges.front(), edges.back(), cardinality()}; }

  int encode(std::string_view cell) const {
    if (kind == ColumnKind::kCategorical) {
      const auto v = detail::trim(cell);
      const auto it = std::find(levels.begin(), levels.end(), v);
      if (it == levels.end()) {
        throw Error("unseen category '" + std::string(v) + "' in column '" + name + "'");
      }
      return static_cast<int>(it - levels.begin());
    }
    const auto x = detail::parse_number(cell);
    if (!x) {
      throw Error("column '" + name + "': non-numeric value '" + std::string(cell) + "'");
    }
    return binner()(*x);
  }

  /// Categorical: the level. Continuous: the bin midpoint.
  std::string decode(int code) const {
    if (code < 0 || code >= cardinality()) {
      throw Error("column '" + name + "': code out of range");
    }
    if (kind == ColumnKind::kCategorical) {
      return levels[static_cast<std::size_t>(code)];
    }
    char buf[32];
    const auto c = static_cast<std::size_t>(code);
    std::snprintf(buf, sizeof buf, "%.17g", 0.5 * (edges[c] + edges[c + 1]));
    return buf;
  }
};

/// Column encodings in schema order, plus which one is sensitive / target.
struct Encoding {
  std::vector<ColumnEncoding> columns;
  std::size_t sensitive_index = 0;
  std::optional<std::size_t> target_index;

  AttributeSchema schema() const {
    std::vector<Attribute> attrs;
    attrs.reserve(columns.size());
    for (const auto& c : columns) {
      attrs.push_back({c.name, c.cardinality(),
                       c.kind == ColumnKind::kCategorical ? AttributeKind::kCategorical : AttributeKind::kOrdinal});
    }
    return AttributeSchema(std::move(attrs), sensitive_index, target_index);
  }

  std::vector<int> encode_row(const CsvTable& table, std::size_t r) const {
    std::vector<int> coords(columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const auto& cell = table.rows[r][table.column(columns[j].name)];
      if (detail::is_missing(cell)) {
        throw Error("NaN in column '" + columns[j].name + "' at row " + std::to_string(r));
      }
      coords[j] = columns[j].encode(cell);
    }
    return coords;
  }

  std::vector<std::string> decode_row(std::span<const int> coords) const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < columns.size(); ++j) {
      out.push_back(columns[j].decode(coords[j]));
    }
    return out;
  }
};

struct LoadedData {
  Dataset dataset;
  Encoding encoding;
};

/// Encodes a table with a previously fitted encoding (continuous values clamp to the edge bins).
inline Dataset encode_csv(const CsvTable& table, const Encoding& encoding) {
  Dataset ds(encoding.schema());
  ds.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    ds.add_row(encoding.encode_row(table, r));
  }
  return ds;
}

/// Fits an encoding from the table itself and encodes it.
inline LoadedData load_csv(const CsvTable& table, const CsvSpec& spec) {
  if (spec.bins < 1) {
    throw Error("csv spec: bins must be positive");
  }
  (void)table.column(spec.sensitive);
  if (spec.target) {
    if (*spec.target == spec.sensitive) {
      throw Error("csv spec: target and sensitive column coincide");
    }
    (void)table.column(*spec.target);
  }
  for (const auto& name : spec.ignore) {
    (void)table.column(name);
    if (name == spec.sensitive || (spec.target && name == *spec.target)) {
      throw Error("csv spec: column '" + name + "' both ignored and used");
    }
  }
  Encoding enc;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    const auto& name = table.header[j];
    const auto role = spec.role_of(name);
    if (role == ColumnRole::kIgnore) {
      continue;
    }
    std::vector<double> numbers;
    bool all_numeric = true;
    bool has_fraction = false;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& cell = table.rows[r][j];
      if (detail::is_missing(cell)) {
        throw Error("NaN in column '" + name + "' at row " + std::to_string(r));
      }
      if (all_numeric) {
        const auto v = detail::parse_number(cell);
        if (!v || !std::isfinite(*v)) {
          all_numeric = false;
        } else {
          numbers.push_back(*v);
          has_fraction = has_fraction || *v != std::floor(*v);
        }
      }
    }
    ColumnKind kind = spec.kind_of(name);
    if (kind == ColumnKind::kAuto) {
      kind = all_numeric && has_fraction ? ColumnKind::kContinuous : ColumnKind::kCategorical;
    }
    if (kind == ColumnKind::kContinuous && role != ColumnRole::kFeature) {
      throw Error("column '" + name + "': sensitive and target columns must be categorical");
    }
    ColumnEncoding col;
    col.name = name;
    col.kind = kind;
    if (kind == ColumnKind::kContinuous) {
      if (!all_numeric) {
        throw Error("column '" + name + "' declared continuous but has non-numeric values");
      }
      col.edges = table.rows.empty() ? Binner(0.0, 0.0, spec.bins).edges() : Binner::fit(numbers, spec.bins).edges();
    } else {
      for (const auto& row : table.rows) {
        const auto v = detail::trim(row[j]);
        if (std::find(col.levels.begin(), col.levels.end(), v) == col.levels.end()) {
          col.levels.emplace_back(v);
        }
      }
      if (col.levels.empty()) {
        throw Error("column '" + name + "' has no values");
      }
    }
    if (role == ColumnRole::kSensitive) {
      enc.sensitive_index = enc.columns.size();
    } else if (role == ColumnRole::kTarget) {
      enc.target_index = enc.columns.size();
    }
    enc.columns.push_back(std::move(col));
  }
  return {encode_csv(table, enc), std::move(enc)};
}

inline LoadedData load_csv(const CsvSpec& spec) { return load_csv(read_csv(spec.path), spec); }

// ---------------------------------------------------------------------------------------------
// Splits and Q_0

/// Test-fold positions: a seeded shuffle cut into k near-equal contiguous blocks.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) {
    throw Error("kfold: k must be at least 2");
  }
  if (k > n) {
    throw Error("kfold: k exceeds the number of rows");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "kfold"));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                    order.begin() + static_cast<std::ptrdiff_t>(start + size));
    std::sort(folds[f].begin(), folds[f].end());
    start += size;
  }
  return folds;
}

struct FoldSplit {
  Dataset train;
  Dataset test;
};

inline std::vector<std::size_t> complement(const std::vector<std::size_t>& sorted_positions, std::size_t n) {
  std::vector<std::size_t> out;
  out.reserve(n - sorted_positions.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (j < sorted_positions.size() && sorted_positions[j] == i) {
      ++j;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

inline std::vector<FoldSplit> kfold(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
  const auto folds = kfold_indices(dataset.size(), k, seed);
  std::vector<FoldSplit> out;
  out.reserve(k);
  for (const auto& test : folds) {
    const auto train = complement(test, dataset.size());
    out.push_back({dataset.subset(train), dataset.subset(test)});
  }
  return out;
}

/// Per-group smoothed empirical conditionals with an exactly uniform sensitive marginal.
inline InitialDensity build_initial(const Dataset& train, double smoothing) {
  if (!(smoothing >= 0.0)) {
    throw Error("build_initial: smoothing must be nonnegative");
  }
  const auto& s = train.schema();
  std::vector<std::vector<double>> counts(s.group_count(), std::vector<double>(s.x_cell_count(), smoothing));
  std::vector<double> group_weight(s.group_count(), 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto row = train.row(i);
    const auto g = static_cast<std::size_t>(row[s.sensitive_index()]);
    counts[g][s.x_index(row)] += train.weight(i);
    group_weight[g] += train.weight(i);
  }
  for (std::size_t g = 0; g < s.group_count(); ++g) {
    if (!(group_weight[g] > 0.0)) {
      throw Error("unrepresented sensitive value");
    }
    const double total = std::accumulate(counts[g].begin(), counts[g].end(), 0.0);
    for (auto& v : counts[g]) {
      v /= total;
    }
  }
  return InitialDensity(s, std::move(counts));
}

// ---------------------------------------------------------------------------------------------
// Gaussian mixture

struct MixtureParams {
  std::vector<double> mu{-0.5, 0.7};
  std::vector<double> sigma{0.4, 0.2};
  double s = 0.9;  ///< P(a = 1)
  std::size_t n = 5000;
  std::uint64_t seed = 0;

  void validate() const {
    if (mu.size() != 2 || sigma.size() != 2) {
      throw Error("mixture: two groups expected");
    }
    for (std::size_t a = 0; a < 2; ++a) {
      if (!(sigma[a] > 0.0) || !std::isfinite(sigma[a]) || !std::isfinite(mu[a])) {
        throw Error("mixture: sigma must be positive and parameters finite");
      }
    }
    if (!(s >= 0.0 && s <= 1.0)) {
      throw Error("mixture: s must lie in [0, 1]");
    }
    if (n < 1) {
      throw Error("mixture: n must be at least 1");
    }
  }
};

struct MixturePoint {
  double x = 0.0;
  int a = 0;
};

/// a ~ Bernoulli(s), x ~ N(mu_a, sigma_a), drawn in that order per point (Box-Muller normals).
inline std::vector<MixturePoint> generate_mixture(const MixtureParams& params) {
  params.validate();
  Rng rng(derive_seed(params.seed, "mixture"));
  std::vector<MixturePoint> out(params.n);
  for (auto& pt : out) {
    pt.a = rng.bernoulli(params.s) ? 1 : 0;
    const auto a = static_cast<std::size_t>(pt.a);
    pt.x = rng.normal(params.mu[a], params.sigma[a]);
  }
  return out;
}

inline void write_mixture_csv(std::ostream& out, std::span<const MixturePoint> points) {
  out << "x,a\n";
  char buf[40];
  for (const auto& pt : points) {
    std::snprintf(buf, sizeof buf, "%.17g", pt.x);
    out << buf << ',' << pt.a << '\n';
  }
}

/// Schema (x: ordinal bins, a: binary sensitive) for binned mixture samples.
inline AttributeSchema mixture_schema(int bins) {
  return AttributeSchema({{"x", bins, AttributeKind::kOrdinal}, {"a", 2, AttributeKind::kCategorical}}, 1);
}

inline Dataset bin_mixture(std::span<const MixturePoint> points, const Binner& binner) {
  Dataset ds(mixture_schema(binner.bins()));
  ds.reserve(points.size());
  for (const auto& pt : points) {
    const int coords[2] = {binner(pt.x), pt.a};
    ds.add_row(coords);
  }
  return ds;
}

}  // namespace fbde

#endif  // FBDE_DATA_HPP
