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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "leaderlab/scoring.hpp"
#include "testing.hpp"

namespace {

using leaderlab::CredenceProfile;
using leaderlab::testing::ErrorCode;

CredenceProfile P(std::vector<int> v) { return CredenceProfile::Validate(v); }

// Random valid profile over n options.
CredenceProfile RandomProfile(std::mt19937_64& rng, std::size_t n) {
  std::vector<int> cuts = {0, 100};
  std::uniform_int_distribution<int> d(0, 100);
  for (std::size_t i = 0; i + 1 < n; ++i) cuts.push_back(d(rng));
  std::sort(cuts.begin(), cuts.end());
  std::vector<int> v;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) v.push_back(cuts[i + 1] - cuts[i]);
  return CredenceProfile::Validate(v);
}

}  // namespace

TEST_CASE("validate credence") {
  CHECK_NOTHROW(P({50, 17, 0, 0, 33}));
  CHECK(ErrorCode([] { P({20, 20, 20, 20, 21}); }) == "SumNot100");
  CHECK(ErrorCode([] { P({110, -10, 0, 0, 0}); }) == "NegativeAllocation");
  CHECK(ErrorCode([] { CredenceProfile::Validate(std::vector<int>{50, 50}, 5); }) ==
        "WrongOptionCount");
  CHECK(ErrorCode([] { P({}); }) == "WrongOptionCount");
  CHECK(ErrorCode([] { P({101, 0, 0, 0, -1}); }) == "NegativeAllocation");
}

TEST_CASE("uniform profiles use largest remainder with low-index ties") {
  CHECK(CredenceProfile::Flat(5) == P({20, 20, 20, 20, 20}));
  CHECK(CredenceProfile::UniformOver({true, true, true, false, false}) ==
        P({34, 33, 33, 0, 0}));
  CHECK(CredenceProfile::UniformOver({true, false, false, false, true}) ==
        P({50, 0, 0, 0, 50}));
  CHECK(CredenceProfile::Flat(3) == P({34, 33, 33}));
  CHECK(CredenceProfile::Flat(6) == P({17, 17, 17, 17, 16, 16}));
  CHECK(CredenceProfile::Flat(7) == P({15, 15, 14, 14, 14, 14, 14}));
}

TEST_CASE("worked scoring examples") {
  const auto key = P({50, 0, 0, 0, 50});
  auto same = leaderlab::ScoreDimension(key, key);
  CHECK(same.value == 1.0);
  CHECK(same.is_optimal);
  CHECK(same.l1_distance == 0);

  auto good = leaderlab::ScoreDimension(P({50, 17, 0, 0, 33}), key);
  CHECK(good.l1_distance == 34);
  CHECK(good.value == doctest::Approx(0.83).epsilon(1e-15));
  CHECK_FALSE(good.is_optimal);

  auto bad = leaderlab::ScoreDimension(P({28, 18, 18, 18, 18}), key);
  CHECK(bad.l1_distance == 108);
  CHECK(bad.value == doctest::Approx(0.46).epsilon(1e-15));

  auto flat = leaderlab::ScoreDimension(CredenceProfile::Flat(5), key);
  CHECK(flat.l1_distance == 120);
  CHECK(flat.value == doctest::Approx(0.40).epsilon(1e-15));
  CHECK_FALSE(flat.is_optimal);
}

TEST_CASE("optimal tolerance boundary") {
  const auto key = P({34, 33, 33, 0, 0});
  // Exact thirds are not integers; a rotated rounding is within tolerance.
  CHECK(leaderlab::ScoreDimension(P({33, 34, 33, 0, 0}), key).is_optimal);
  auto three_off = leaderlab::ScoreDimension(P({31, 33, 33, 3, 0}), key);
  CHECK(three_off.l1_distance == 6);
  CHECK_FALSE(three_off.is_optimal);
  auto edge = leaderlab::ScoreDimension(P({32, 33, 33, 2, 0}), key);
  CHECK(edge.l1_distance == 4);
  CHECK(edge.is_optimal);
}

TEST_CASE("option count mismatch") {
  CHECK(ErrorCode([] {
          leaderlab::ScoreDimension(P({50, 50}), P({20, 20, 20, 20, 20}));
        }) == "OptionCountMismatch");
}

TEST_CASE("score puzzle averages dimensions") {
  const std::vector<CredenceProfile> keys = {P({50, 0, 0, 0, 50}), P({100, 0, 0, 0, 0})};
  CHECK(leaderlab::ScorePuzzle(keys, keys) == 1.0);
  const std::vector<CredenceProfile> subs = {CredenceProfile::Flat(5),
                                             P({50, 17, 0, 0, 33})};
  const std::vector<CredenceProfile> keys2 = {P({50, 0, 0, 0, 50}), P({50, 0, 0, 0, 50})};
  CHECK(leaderlab::ScorePuzzle(subs, keys2) == doctest::Approx(0.615).epsilon(1e-15));
  const std::vector<CredenceProfile> one = {keys[0]};
  CHECK(ErrorCode([&] { leaderlab::ScorePuzzle(one, keys); }) == "MissingDimension");
}

TEST_CASE("quadratic rule is available but not default") {
  const auto key = P({100, 0, 0, 0, 0});
  auto q = leaderlab::ScoreDimension(CredenceProfile::Flat(5), key,
                                     leaderlab::ScoringRule::kQuadratic);
  // 1 - (0.8^2 + 4 * 0.2^2) / 2
  CHECK(q.value == doctest::Approx(1.0 - (0.64 + 4 * 0.04) / 2.0));
  auto tv = leaderlab::ScoreDimension(CredenceProfile::Flat(5), key);
  CHECK(tv.value == doctest::Approx(0.2));
}

TEST_CASE("scoring properties over random profiles") {
  std::mt19937_64 rng(11);
  for (int it = 0; it < 2000; ++it) {
    const std::size_t n = 2 + rng() % 6;
    auto a = RandomProfile(rng, n);
    auto b = RandomProfile(rng, n);
    auto s = leaderlab::ScoreDimension(a, b);
    CHECK(s.value >= 0.0);
    CHECK(s.value <= 1.0);
    CHECK(s.value == doctest::Approx(1.0 - s.l1_distance / 200.0));
    CHECK(s.l1_distance % 2 == 0);
    CHECK((s.value == 0.0) == (s.l1_distance == 200));
    CHECK(leaderlab::ScoreDimension(b, b).is_optimal);

    // Joint permutation symmetry.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> pa(n), pb(n);
    for (std::size_t k = 0; k < n; ++k) {
      pa[k] = a[perm[k]];
      pb[k] = b[perm[k]];
    }
    CHECK(leaderlab::ScoreDimension(P(pa), P(pb)).value == s.value);

    // Moving one point between options changes the value by at most 1/100.
    std::vector<int> moved(a.allocations().begin(), a.allocations().end());
    std::size_t from = rng() % n, to = rng() % n;
    if (moved[from] > 0 && from != to) {
      --moved[from];
      ++moved[to];
      double delta = std::abs(leaderlab::ScoreDimension(P(moved), b).value - s.value);
      CHECK(delta <= 0.01 + 1e-12);
    }
  }
}

TEST_CASE("round to percentages") {
  const std::vector<double> w = {0.35, 0.1, 0.1, 0.1, 0.35};
  CHECK(leaderlab::RoundToPercentages(w) == P({35, 10, 10, 10, 35}));
  const std::vector<double> thirds = {1, 1, 1};
  CHECK(leaderlab::RoundToPercentages(thirds) == P({34, 33, 33}));
  const std::vector<double> zero = {0, 0};
  CHECK(ErrorCode([&] { leaderlab::RoundToPercentages(zero); }) != "");
}

TEST_CASE("standardize") {
  const std::vector<double> v = {1, 2, 3};
  auto z = leaderlab::Standardize(v);
  CHECK(z[0] == doctest::Approx(-1.0));
  CHECK(z[1] == doctest::Approx(0.0));
  CHECK(z[2] == doctest::Approx(1.0));
  const std::vector<double> c = {4, 4, 4};
  CHECK(ErrorCode([&] { leaderlab::Standardize(c); }) == "ZeroVariance");
  const std::vector<double> one = {4};
  CHECK(ErrorCode([&] { leaderlab::Standardize(one); }) == "TooFewValues");

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> x(50);
  for (auto& e : x) e = nd(rng);
  auto zx = leaderlab::Standardize(x);
  double mean = std::accumulate(zx.begin(), zx.end(), 0.0) / zx.size();
  double ss = 0.0;
  for (double e : zx) ss += (e - mean) * (e - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(std::sqrt(ss / (zx.size() - 1)) == doctest::Approx(1.0).epsilon(1e-12));
  for (double scale : {3.5, -2.0}) {
    std::vector<double> y;
    for (double e : x) y.push_back(scale * e + 7.0);
    auto zy = leaderlab::Standardize(y);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(zy[i] == doctest::Approx((scale > 0 ? 1 : -1) * zx[i]).epsilon(1e-9));
    }
  }
}
