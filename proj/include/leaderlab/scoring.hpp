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

#ifndef LEADERLAB_SCORING_HPP_
#define LEADERLAB_SCORING_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace leaderlab {

class CredenceProfile;
CredenceProfile RoundToPercentages(std::span<const double> weights);

// Per-option integer percentages. Only constructible through Validate() or
// the uniform factories, so every instance satisfies: each allocation in
// [0, 100] and the allocations sum to exactly 100.
class CredenceProfile {
 public:
  // Throws SumNot100, NegativeAllocation or WrongOptionCount. When
  // n_options is given the profile must have exactly that many entries.
  static CredenceProfile Validate(std::span<const int> raw,
                                  std::optional<std::size_t> n_options = {});

  // Uniform over the options flagged true; largest-remainder rounding with
  // ties broken by lowest option index (3 survivors -> 34/33/33).
  static CredenceProfile UniformOver(const std::vector<bool>& support);
  static CredenceProfile Flat(std::size_t n_options);

  std::span<const int> allocations() const { return allocations_; }
  std::size_t size() const { return allocations_.size(); }
  int operator[](std::size_t i) const { return allocations_[i]; }

  friend bool operator==(const CredenceProfile&,
                         const CredenceProfile&) = default;

 private:
  friend CredenceProfile RoundToPercentages(std::span<const double> weights);

  explicit CredenceProfile(std::vector<int> allocations)
      : allocations_(std::move(allocations)) {}

  std::vector<int> allocations_;
};

// Rounds a real-valued probability vector (any positive total) to integer
// percentages with the same largest-remainder rule as UniformOver.
CredenceProfile RoundToPercentages(std::span<const double> weights);

// L1 points at or below which a dimension answer counts as optimal.
inline constexpr int kOptimalTolerance = 5;

enum class ScoringRule {
  kTotalVariation,  // default: 1 - L1 / 200
  kQuadratic,       // Brier-style, sensitivity analysis only
};

struct DimensionScore {
  double value = 0.0;
  bool is_optimal = false;
  int l1_distance = 0;
};

int L1Distance(const CredenceProfile& a, const CredenceProfile& b);

// Throws OptionCountMismatch.
DimensionScore ScoreDimension(
    const CredenceProfile& submitted, const CredenceProfile& key,
    ScoringRule rule = ScoringRule::kTotalVariation);

// Unweighted mean of per-dimension values. Throws MissingDimension when the
// submission count differs from the key count.
double ScorePuzzle(std::span<const CredenceProfile> submissions,
                   std::span<const CredenceProfile> keys,
                   ScoringRule rule = ScoringRule::kTotalVariation);

// Sample z-scores (n - 1 denominator). Throws TooFewValues, ZeroVariance.
std::vector<double> Standardize(std::span<const double> values);

}  // namespace leaderlab

#endif  // LEADERLAB_SCORING_HPP_
