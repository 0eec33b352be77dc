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

#ifndef FBDE_NUMERIC_HPP
#define FBDE_NUMERIC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

/**
 * \file
 * \brief Error type, log-space helpers and the seeded random source shared by every module.
 */

namespace fbde {

/// Raised for every contract violation in the library (bad input, degenerate table, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kLn2 = std::numbers::ln2;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Stable log(sum(exp(v))). Returns -inf for an empty range or all -inf entries.
inline double log_sum_exp(std::span<const double> values) {
  double peak = kNegInf;
  for (double v : values) {
    peak = std::max(peak, v);
  }
  if (peak == kNegInf) {
    return kNegInf;
  }
  double acc = 0.0;
  for (double v : values) {
    acc += std::exp(v - peak);
  }
  return peak + std::log(acc);
}

/// log(x) with log(0) mapped to -inf instead of raising a pole error.
inline double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

/**
 * Seeded pseudo-random source.
 *
 * Reproducibility contract: the engine is std::mt19937_64 (its output sequence is fixed by the
 * standard), uniforms take the top 53 bits, and normals use the Box-Muller transform with the
 * second variate cached. No implementation-defined std distribution is used anywhere.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_{seed} {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) {
      throw Error("Rng::below: empty range");
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = engine_();
    while (r >= limit) {
      r = engine_();
    }
    return r % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
      u1 = uniform();
    }
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Named sub-seed: every phase of a run draws from its own stream derived from one root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view phase, std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a offset basis
  for (unsigned char ch : phase) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return detail::splitmix64(detail::splitmix64(root ^ h) + index);
}

}  // namespace fbde

#endif  // FBDE_NUMERIC_HPP
