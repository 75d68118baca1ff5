// Copyright 2026 The LeaderLab Authors.
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

#include "leaderlab/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include <fmt/format.h>

#include "leaderlab/error.hpp"

namespace leaderlab {

CredenceProfile CredenceProfile::Validate(std::span<const int> raw,
                                          std::optional<std::size_t> n_options) {
  if (raw.size() < 2 || (n_options && raw.size() != *n_options)) {
    throw ValidationError(
        "WrongOptionCount",
        fmt::format("credence profile has {} options, expected {}", raw.size(),
                    n_options ? fmt::format("{}", *n_options) : ">= 2"));
  }
  for (int v : raw) {
    if (v < 0) {
      throw ValidationError("NegativeAllocation",
                            fmt::format("allocation {} is negative", v));
    }
  }
  long long total = 0;
  for (int v : raw) {
    if (v > 100) {
      throw ValidationError("SumNot100",
                            fmt::format("allocation {} exceeds 100", v));
    }
    total += v;
  }
  if (total != 100) {
    throw ValidationError("SumNot100",
                          fmt::format("allocations sum to {}, not 100", total));
  }
  return CredenceProfile(std::vector<int>(raw.begin(), raw.end()));
}

CredenceProfile RoundToPercentages(std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.size() < 2 || !(total > 0.0)) {
    throw ValidationError("WrongOptionCount",
                          "cannot round an empty or zero-mass profile");
  }
  std::vector<int> out(weights.size());
  std::vector<double> remainder(weights.size());
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = 100.0 * std::max(weights[i], 0.0) / total;
    out[i] = static_cast<int>(std::floor(exact + 1e-9));
    remainder[i] = exact - out[i];
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + 1e-9;
  });
  for (std::size_t k = 0; assigned < 100; ++k, ++assigned) {
    ++out[order[k % order.size()]];
  }
  return CredenceProfile(std::move(out));
}

CredenceProfile CredenceProfile::UniformOver(const std::vector<bool>& support) {
  std::vector<double> weights(support.size());
  for (std::size_t i = 0; i < support.size(); ++i) weights[i] = support[i];
  return RoundToPercentages(weights);
}

CredenceProfile CredenceProfile::Flat(std::size_t n_options) {
  return UniformOver(std::vector<bool>(n_options, true));
}

int L1Distance(const CredenceProfile& a, const CredenceProfile& b) {
  if (a.size() != b.size()) {
    throw ValidationError("OptionCountMismatch",
                          fmt::format("profiles have {} and {} options",
                                      a.size(), b.size()));
  }
  int l1 = 0;
  for (std::size_t k = 0; k < a.size(); ++k) l1 += std::abs(a[k] - b[k]);
  return l1;
}

DimensionScore ScoreDimension(const CredenceProfile& submitted,
                              const CredenceProfile& key, ScoringRule rule) {
  DimensionScore score;
  score.l1_distance = L1Distance(submitted, key);
  score.is_optimal = score.l1_distance <= kOptimalTolerance;
  if (rule == ScoringRule::kTotalVariation) {
    score.value = 1.0 - score.l1_distance / 200.0;
  } else {
    // Squared distance between two distributions is at most 2.
    double sq = 0.0;
    for (std::size_t k = 0; k < key.size(); ++k) {
      const double d = (submitted[k] - key[k]) / 100.0;
      sq += d * d;
    }
    score.value = 1.0 - sq / 2.0;
  }
  return score;
}

double ScorePuzzle(std::span<const CredenceProfile> submissions,
                   std::span<const CredenceProfile> keys, ScoringRule rule) {
  if (keys.empty() || submissions.size() != keys.size()) {
    throw ValidationError("MissingDimension",
                          fmt::format("{} submissions for {} dimensions",
                                      submissions.size(), keys.size()));
  }
  double sum = 0.0;
  for (std::size_t d = 0; d < keys.size(); ++d) {
    sum += ScoreDimension(submissions[d], keys[d], rule).value;
  }
  return sum / static_cast<double>(keys.size());
}

std::vector<double> Standardize(std::span<const double> values) {
  if (values.size() < 2) {
    throw ValidationError("TooFewValues", "standardize needs at least 2 values");
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    throw ValidationError("ZeroVariance", "values have zero variance");
  }
  std::vector<double> z(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - mean) / sd;
  return z;
}

}  // namespace leaderlab
