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

#ifndef LEADERLAB_PUZZLE_HPP_
#define LEADERLAB_PUZZLE_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leaderlab/scoring.hpp"

namespace leaderlab {

// Seats in a group. kAll is only meaningful as a message recipient
// (leader broadcast).
enum class Role : int { kLeader = 0, kFollower1, kFollower2, kFollower3, kAll };

inline constexpr std::size_t kRoleCount = 4;
inline constexpr std::array<Role, 3> kFollowers = {
    Role::kFollower1, Role::kFollower2, Role::kFollower3};

std::string_view RoleName(Role role);
// Throws UnknownRole.
Role ParseRole(std::string_view name);
inline std::size_t RoleIndex(Role role) { return static_cast<std::size_t>(role); }

struct PuzzleSpec {
  int n_options = 5;
  int n_dimensions = 2;
  int clues_per_member_per_dimension = 4;
  double public_fraction = 0.5;
  // Option indices the pooled clues must rule out, one set per dimension.
  std::vector<std::vector<int>> eliminated_options = {{1, 2, 3}, {1, 2, 3, 4}};
  std::uint64_t theme_seed = 0;

  int public_per_dimension() const;
  int private_per_role() const;
  // Throws InvalidSpec for violated field invariants and InfeasibleSpec when
  // the eliminations cannot be spread so that pooling is required.
  void Validate() const;
};

enum class ClueKind { kDisqualifying, kDistractor };

struct Clue {
  std::string id;
  int dimension = 0;
  ClueKind kind = ClueKind::kDistractor;
  // Disqualifying: the option ruled out. Distractor: the option the text
  // talks about (carries no information).
  int option = 0;
  // nullopt for public clues, otherwise the single role holding it.
  std::optional<Role> owner;
  std::string text;

  bool is_public() const { return !owner.has_value(); }
  bool Disqualifies(int opt) const {
    return kind == ClueKind::kDisqualifying && option == opt;
  }
};

struct Dimension {
  std::string name;      // "species"
  std::string question;  // "Which fish is it?"
  std::vector<std::string> options;
  // Lower-case words that mark a leader question as being about this
  // dimension.
  std::vector<std::string> keywords;
};

struct Puzzle {
  std::string id;
  PuzzleSpec spec;
  std::string theme;
  std::string scenario;
  std::vector<Dimension> dimensions;
  std::vector<Clue> clues;
  // Role -> indices into clues, ordered as the role sees them.
  std::array<std::vector<int>, kRoleCount> assignments;
  std::vector<CredenceProfile> answer_keys;

  std::vector<const Clue*> CluesFor(Role role) const;
  std::vector<const Clue*> CluesFor(Role role, int dimension) const;
};

struct VerificationReport {
  // [role][dimension]
  std::array<std::vector<CredenceProfile>, kRoleCount> individual;
  std::vector<CredenceProfile> pooled;
  bool holds_hidden_profile = false;
  std::vector<Role> failing_roles;
};

// Deterministic in (spec, rng_seed). Throws InvalidSpec / InfeasibleSpec.
Puzzle GeneratePuzzle(const PuzzleSpec& spec, std::uint64_t rng_seed);

// Uniform over options no Disqualifying clue of this dimension names.
// Throws AllOptionsEliminated.
CredenceProfile DeriveAnswerKey(const std::vector<const Clue*>& pooled_clues,
                                int dimension, int n_options);

VerificationReport VerifyHiddenProfile(const Puzzle& puzzle);

// Same skeleton, new theme text, options relabeled by a seeded permutation.
Puzzle MakeParallelForm(const Puzzle& puzzle, std::uint64_t theme_seed);

// Canonical structure summary: per role and dimension the sorted multiset
// of kind x visibility, per dimension the elimination count and the sorted
// answer key. Equal for a puzzle and any of its parallel forms.
nlohmann::json StructuralFingerprint(const Puzzle& puzzle);

// Checks assignments, clue semantics and the stored answer keys against
// each other. Throws InvalidPuzzle.
void ValidatePuzzle(const Puzzle& puzzle);

inline constexpr std::string_view kPuzzleFormat = "leaderlab-puzzle/1";

nlohmann::json PuzzleToJson(const Puzzle& puzzle);
// Throws InvalidPuzzle for wrong format tag or broken invariants.
Puzzle PuzzleFromJson(const nlohmann::json& doc);

nlohmann::json SpecToJson(const PuzzleSpec& spec);
PuzzleSpec SpecFromJson(const nlohmann::json& doc);

}  // namespace leaderlab

#endif  // LEADERLAB_PUZZLE_HPP_
