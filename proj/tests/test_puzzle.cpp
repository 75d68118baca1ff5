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
#include <map>
#include <set>
#include <vector>

#include "leaderlab/puzzle.hpp"
#include "leaderlab/scoring.hpp"
#include "testing.hpp"

namespace {

using leaderlab::Clue;
using leaderlab::ClueKind;
using leaderlab::CredenceProfile;
using leaderlab::Puzzle;
using leaderlab::PuzzleSpec;
using leaderlab::Role;
using leaderlab::testing::ErrorCode;

constexpr std::array<Role, 4> kSeats = {Role::kLeader, Role::kFollower1, Role::kFollower2,
                                        Role::kFollower3};

// Independent posterior: options not named by any disqualifying clue,
// spread uniformly with largest-remainder rounding.
std::vector<int> OraclePosterior(const std::vector<const Clue*>& clues, int dim,
                                 int n_options) {
  std::vector<bool> alive(n_options, true);
  for (const Clue* c : clues) {
    if (c->dimension == dim && c->kind == ClueKind::kDisqualifying) alive[c->option] = false;
  }
  const int survivors = static_cast<int>(std::count(alive.begin(), alive.end(), true));
  std::vector<int> out(n_options, 0);
  if (survivors == 0) return out;
  int assigned = 0;
  for (int k = 0; k < n_options; ++k) {
    if (alive[k]) {
      out[k] = 100 / survivors;
      assigned += out[k];
    }
  }
  for (int k = 0; k < n_options && assigned < 100; ++k) {
    if (alive[k]) {
      ++out[k];
      ++assigned;
    }
  }
  return out;
}

std::vector<int> Alloc(const CredenceProfile& p) {
  return {p.allocations().begin(), p.allocations().end()};
}

struct HandClue {
  int dimension;
  ClueKind kind;
  int option;
  std::optional<Role> owner;
};

// Two dimensions with five options each; public clues go to every seat.
Puzzle HandBuilt(const std::vector<HandClue>& specs) {
  Puzzle p;
  p.id = "hand";
  p.theme = "hand";
  p.scenario = "Hand-built puzzle.";
  for (int d = 0; d < 2; ++d) {
    leaderlab::Dimension dim;
    dim.name = "d" + std::to_string(d);
    dim.question = "Which?";
    dim.options = {"A", "B", "C", "D", "E"};
    p.dimensions.push_back(dim);
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Clue c;
    c.id = "c" + std::to_string(i);
    c.dimension = specs[i].dimension;
    c.kind = specs[i].kind;
    c.option = specs[i].option;
    c.owner = specs[i].owner;
    c.text = "clue " + std::to_string(i);
    p.clues.push_back(c);
    for (Role r : kSeats) {
      if (!c.owner || *c.owner == r) {
        p.assignments[leaderlab::RoleIndex(r)].push_back(static_cast<int>(i));
      }
    }
  }
  return p;
}

}  // namespace

TEST_CASE("default puzzle shape") {
  const PuzzleSpec spec;
  const Puzzle p = leaderlab::GeneratePuzzle(spec, 7);
  REQUIRE(p.dimensions.size() == 2);
  for (const auto& d : p.dimensions) CHECK(d.options.size() == 5);
  for (Role r : kSeats) {
    CHECK(p.CluesFor(r).size() == 8);
    for (int d = 0; d < 2; ++d) {
      auto clues = p.CluesFor(r, d);
      CHECK(clues.size() == 4);
      CHECK(std::count_if(clues.begin(), clues.end(),
                          [](const Clue* c) { return c->is_public(); }) == 2);
    }
  }
  for (const Clue& c : p.clues) {
    CHECK_FALSE(c.text.empty());
    if (c.is_public()) {
      for (Role r : kSeats) {
        auto own = p.CluesFor(r);
        CHECK(std::find(own.begin(), own.end(), &c) != own.end());
      }
    }
  }
  CHECK(Alloc(p.answer_keys[0]) == std::vector<int>{50, 0, 0, 0, 50});
  CHECK(Alloc(p.answer_keys[1]) == std::vector<int>{100, 0, 0, 0, 0});
}

TEST_CASE("generation is deterministic") {
  const PuzzleSpec spec;
  for (std::uint64_t seed : {0ull, 1ull, 7ull, 123456789ull}) {
    auto a = leaderlab::PuzzleToJson(leaderlab::GeneratePuzzle(spec, seed)).dump();
    auto b = leaderlab::PuzzleToJson(leaderlab::GeneratePuzzle(spec, seed)).dump();
    CHECK(a == b);
  }
  auto a = leaderlab::PuzzleToJson(leaderlab::GeneratePuzzle(spec, 1)).dump();
  auto b = leaderlab::PuzzleToJson(leaderlab::GeneratePuzzle(spec, 2)).dump();
  CHECK(a != b);
}

TEST_CASE("spec validation") {
  PuzzleSpec empty;
  empty.eliminated_options = {{}, {1, 2}};
  CHECK(ErrorCode([&] { leaderlab::GeneratePuzzle(empty, 1); }) == "InfeasibleSpec");
  PuzzleSpec all;
  all.eliminated_options = {{0, 1, 2, 3, 4}, {1}};
  CHECK(ErrorCode([&] { all.Validate(); }) == "InfeasibleSpec");
  PuzzleSpec single;
  single.eliminated_options = {{2}, {1, 2}};
  CHECK(ErrorCode([&] { single.Validate(); }) == "InfeasibleSpec");
  PuzzleSpec tiny;
  tiny.n_options = 1;
  CHECK(ErrorCode([&] { tiny.Validate(); }) == "InvalidSpec");
  PuzzleSpec frac;
  frac.public_fraction = 0.3;
  CHECK(ErrorCode([&] { frac.Validate(); }) == "InvalidSpec");
  PuzzleSpec dims;
  dims.n_dimensions = 3;
  CHECK(ErrorCode([&] { dims.Validate(); }) == "InvalidSpec");
  PuzzleSpec range;
  range.eliminated_options = {{1, 7}, {1, 2}};
  CHECK(ErrorCode([&] { range.Validate(); }) == "InvalidSpec");

  PuzzleSpec custom;
  custom.eliminated_options = {{0, 4}, {1, 2, 3}};
  const Puzzle p = leaderlab::GeneratePuzzle(custom, 3);
  CHECK(Alloc(p.answer_keys[0]) == std::vector<int>{0, 34, 33, 33, 0});
  CHECK(Alloc(p.answer_keys[1]) == std::vector<int>{50, 0, 0, 0, 50});
  CHECK(leaderlab::VerifyHiddenProfile(p).holds_hidden_profile);
}

TEST_CASE("derive answer key") {
  Puzzle p = HandBuilt({{0, ClueKind::kDisqualifying, 1, Role::kLeader},
                        {0, ClueKind::kDisqualifying, 2, Role::kFollower1},
                        {0, ClueKind::kDisqualifying, 3, Role::kFollower2},
                        {1, ClueKind::kDisqualifying, 0, Role::kLeader},
                        {1, ClueKind::kDisqualifying, 1, Role::kFollower1},
                        {1, ClueKind::kDisqualifying, 3, Role::kFollower2},
                        {1, ClueKind::kDisqualifying, 4, Role::kFollower3},
                        {0, ClueKind::kDistractor, 0, std::nullopt}});
  std::vector<const Clue*> all;
  for (const auto& c : p.clues) all.push_back(&c);
  CHECK(Alloc(leaderlab::DeriveAnswerKey(all, 0, 5)) == std::vector<int>{50, 0, 0, 0, 50});
  CHECK(Alloc(leaderlab::DeriveAnswerKey(all, 1, 5)) == std::vector<int>{0, 0, 100, 0, 0});
  CHECK(Alloc(leaderlab::DeriveAnswerKey({}, 0, 5)) == std::vector<int>{20, 20, 20, 20, 20});

  Puzzle dead = HandBuilt({{0, ClueKind::kDisqualifying, 0, Role::kLeader},
                           {0, ClueKind::kDisqualifying, 1, Role::kLeader},
                           {0, ClueKind::kDisqualifying, 2, Role::kLeader},
                           {0, ClueKind::kDisqualifying, 3, Role::kLeader},
                           {0, ClueKind::kDisqualifying, 4, Role::kLeader}});
  std::vector<const Clue*> dead_clues;
  for (const auto& c : dead.clues) dead_clues.push_back(&c);
  CHECK(ErrorCode([&] { leaderlab::DeriveAnswerKey(dead_clues, 0, 5); }) ==
        "AllOptionsEliminated");
}

TEST_CASE("verify hidden profile on hand-built puzzles") {
  Puzzle leader_knows_all = HandBuilt({{0, ClueKind::kDisqualifying, 1, Role::kLeader},
                                       {0, ClueKind::kDisqualifying, 2, Role::kLeader},
                                       {1, ClueKind::kDisqualifying, 3, Role::kLeader},
                                       {1, ClueKind::kDistractor, 0, Role::kFollower1}});
  auto report = leaderlab::VerifyHiddenProfile(leader_knows_all);
  CHECK_FALSE(report.holds_hidden_profile);
  CHECK(report.failing_roles == std::vector<Role>{Role::kLeader});

  Puzzle nothing = HandBuilt({{0, ClueKind::kDistractor, 1, std::nullopt},
                              {1, ClueKind::kDistractor, 2, Role::kFollower2}});
  auto vacuous = leaderlab::VerifyHiddenProfile(nothing);
  CHECK_FALSE(vacuous.holds_hidden_profile);
  CHECK(vacuous.failing_roles.size() == 4);
  for (const auto& per_role : vacuous.individual) {
    for (std::size_t d = 0; d < per_role.size(); ++d) CHECK(per_role[d] == vacuous.pooled[d]);
  }

  Puzzle spread = HandBuilt({{0, ClueKind::kDisqualifying, 1, Role::kLeader},
                             {0, ClueKind::kDisqualifying, 2, Role::kFollower1},
                             {1, ClueKind::kDisqualifying, 3, Role::kFollower2},
                             {1, ClueKind::kDisqualifying, 4, Role::kFollower3}});
  CHECK(leaderlab::VerifyHiddenProfile(spread).holds_hidden_profile);
}

TEST_CASE("generated puzzles against the elimination oracle") {
  const PuzzleSpec spec;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Puzzle p = leaderlab::GeneratePuzzle(spec, seed);
    std::vector<const Clue*> pooled;
    for (const auto& c : p.clues) pooled.push_back(&c);
    auto report = leaderlab::VerifyHiddenProfile(p);
    CHECK(report.holds_hidden_profile);
    for (int d = 0; d < 2; ++d) {
      const auto pooled_oracle = OraclePosterior(pooled, d, 5);
      CHECK(Alloc(p.answer_keys[d]) == pooled_oracle);
      CHECK(Alloc(report.pooled[d]) == pooled_oracle);
      int disq_total = 0;
      for (const auto& c : p.clues) {
        disq_total += c.dimension == d && c.kind == ClueKind::kDisqualifying;
      }
      for (Role r : kSeats) {
        const auto own = p.CluesFor(r);
        CHECK(OraclePosterior(own, d, 5) != pooled_oracle);
        CHECK(Alloc(report.individual[leaderlab::RoleIndex(r)][d]) ==
              OraclePosterior(own, d, 5));
        int held = 0;
        for (const Clue* c : own) {
          held += c->dimension == d && c->kind == ClueKind::kDisqualifying;
        }
        CHECK(held < disq_total);
      }
      // Deleting distractors changes nothing.
      std::vector<const Clue*> no_distractors;
      for (const Clue* c : pooled) {
        if (c->kind != ClueKind::kDistractor) no_distractors.push_back(c);
      }
      CHECK(leaderlab::DeriveAnswerKey(no_distractors, d, 5) == p.answer_keys[d]);
    }
  }
}

TEST_CASE("parallel forms") {
  const PuzzleSpec spec;
  for (std::uint64_t seed : {1ull, 3ull, 8ull, 21ull}) {
    const Puzzle p = leaderlab::GeneratePuzzle(spec, seed);
    const Puzzle f = leaderlab::MakeParallelForm(p, 3);
    CHECK(leaderlab::StructuralFingerprint(p) == leaderlab::StructuralFingerprint(f));
    CHECK(f.theme != p.theme);
    CHECK(f.id != p.id);
    CHECK(leaderlab::VerifyHiddenProfile(f).holds_hidden_profile);
    for (int d = 0; d < 2; ++d) {
      auto a = Alloc(p.answer_keys[d]);
      auto b = Alloc(f.answer_keys[d]);
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
    std::set<std::string> source_texts;
    for (const auto& c : p.clues) source_texts.insert(c.text);
    for (const auto& c : f.clues) CHECK(source_texts.count(c.text) == 0);
  }
}

TEST_CASE("puzzle json round trip and tamper detection") {
  const Puzzle p = leaderlab::GeneratePuzzle(PuzzleSpec{}, 42);
  auto doc = leaderlab::PuzzleToJson(p);
  CHECK(doc.at("format") == "leaderlab-puzzle/1");
  const Puzzle back = leaderlab::PuzzleFromJson(doc);
  CHECK(leaderlab::PuzzleToJson(back).dump() == doc.dump());

  auto wrong_format = doc;
  wrong_format["format"] = "leaderlab-puzzle/0";
  CHECK(ErrorCode([&] { leaderlab::PuzzleFromJson(wrong_format); }) == "InvalidPuzzle");

  auto wrong_key = doc;
  wrong_key["answer_keys"][1] = {20, 20, 20, 20, 20};
  CHECK(ErrorCode([&] { leaderlab::PuzzleFromJson(wrong_key); }) == "InvalidPuzzle");

  auto spec_doc = leaderlab::SpecToJson(PuzzleSpec{});
  auto spec_back = leaderlab::SpecFromJson(spec_doc);
  CHECK(spec_back.eliminated_options == PuzzleSpec{}.eliminated_options);
}

TEST_CASE("roles") {
  for (Role r : {Role::kLeader, Role::kFollower1, Role::kFollower2, Role::kFollower3,
                 Role::kAll}) {
    CHECK(leaderlab::ParseRole(leaderlab::RoleName(r)) == r);
  }
  CHECK(ErrorCode([] { leaderlab::ParseRole("Follower4"); }) == "UnknownRole");
}
