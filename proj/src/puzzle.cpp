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

#include "leaderlab/puzzle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <set>

#include <fmt/format.h>

#include "leaderlab/error.hpp"
#include "leaderlab/rng.hpp"

namespace leaderlab {
namespace {

struct ThemeDimension {
  const char* name;
  const char* question;
  const char* article;  // prefix before the option label in "so it's not ..."
  std::vector<std::string> keywords;
  std::vector<std::string> options;
  // Observation that rules out the matching option.
  std::vector<std::string> negations;
  // Irrelevant facts; "{}" is replaced by an option label.
  std::vector<std::string> distractors;
};

struct Theme {
  const char* key;
  const char* scenario;
  std::array<ThemeDimension, 2> dimensions;
};

const std::vector<Theme>& Themes() {
  static const std::vector<Theme> themes = {
      {"strange_fish",
       "A research vessel has recovered a rare fish that is visibly unwell. "
       "Your team must identify the species and diagnose the virus it is "
       "suffering from.",
       {{{"species",
          "Which species is the fish?",
          "the ",
          {"fish", "species", "type", "kind"},
          {"Blackfish", "Bluefish", "Redfish", "Yellowfish", "Greenfish"},
          {"the fish does not have a black dorsal fin",
           "the fish does not have blue striped gills",
           "the fish does not have a red underbelly",
           "the fish does not have yellow spotted scales",
           "the fish does not have a green forked tail"},
          {"{} migrate to access seasonal food resources",
           "{} are often found near coral reefs",
           "{} were first catalogued by a coastal survey team",
           "{} populations have grown in recent years",
           "{} are popular with recreational anglers",
           "{} can live for more than ten years"}},
         {"virus",
          "Which virus is the fish suffering from?",
          "",
          {"virus", "disease", "illness", "infection", "sick"},
          {"Finrot", "Gillpox", "Scaleblight", "Tailwilt", "Eyecloud"},
          {"the fish has no frayed fins",
           "the fish shows no white spots on its gills",
           "the scales of the fish are not flaking",
           "the fish swims without a drooping tail",
           "the eyes of the fish are perfectly clear"},
          {"{} was first described at a freshwater hatchery",
           "{} is more common in warm water",
           "{} outbreaks are reported to a central registry",
           "{} has been studied by several marine labs",
           "{} samples are stored in a national archive",
           "{} is named after the lake where it was found"}}}}},
      {"faulty_machine",
       "A packaging machine on the factory floor has stopped working. Your "
       "team must find which component failed and what caused the failure.",
       {{{"component",
          "Which component failed?",
          "the ",
          {"component", "part", "machine", "failed", "broken"},
          {"Gearbox", "Compressor", "Valve", "Sensor", "Motor"},
          {"the gearbox oil level is normal",
           "the compressor pressure reading is stable",
           "the valve opens and closes on command",
           "the sensor passes its self-test",
           "the motor draws its rated current"},
          {"the {} was repainted during the last refit",
           "the {} came from an overseas supplier",
           "the {} has a two-year warranty",
           "the {} is listed in the spare parts catalogue",
           "the {} was photographed for the training manual",
           "the {} weighs more than the operators expected"}},
         {"cause",
          "What caused the failure?",
          "",
          {"cause", "caused", "reason", "why"},
          {"Overheating", "Corrosion", "Vibration", "Contamination",
           "Overload"},
          {"the temperature logs never exceeded the limit",
           "there is no rust on any exposed metal",
           "the mounting bolts are all tight",
           "the intake filters are clean",
           "the load meter never passed its maximum"},
          {"{} is a common topic in maintenance training",
           "{} was discussed at the last safety meeting",
           "{} appears in the plant's risk register",
           "{} was covered in a trade magazine article",
           "{} is tracked on the quarterly dashboard",
           "{} has its own chapter in the operator handbook"}}}}},
      {"lost_shipment",
       "A shipment of medical supplies never arrived. Your team must work "
       "out which carrier handled it and at which depot it went missing.",
       {{{"carrier",
          "Which carrier handled the shipment?",
          "",
          {"carrier", "courier", "company", "shipper"},
          {"Swiftline", "Northway", "Bluejet", "Cargoria", "Parcelon"},
          {"the parcel was never scanned into the Swiftline network",
           "the label has no Northway route code",
           "the invoice carries no Bluejet account number",
           "no Cargoria driver signed the manifest",
           "the box lacks the orange Parcelon seal"},
          {"{} recently updated its company logo",
           "{} sponsors a local football club",
           "{} operates a fleet of electric vans",
           "{} was founded by two former pilots",
           "{} publishes a yearly sustainability report",
           "{} offers weekend deliveries in some regions"}},
         {"depot",
          "At which depot did the shipment go missing?",
          "",
          {"depot", "warehouse", "location", "where"},
          {"Ashford", "Brookfield", "Carlton", "Dunmore", "Elmstead"},
          {"the parcel left the Ashford depot on schedule",
           "the Brookfield inventory count matched exactly",
           "Carlton cameras show the parcel being loaded",
           "the Dunmore depot was closed for the holiday",
           "the Elmstead scanner logged the parcel leaving intact"},
          {"{} depot has a newly resurfaced car park",
           "{} depot hosts an open day every spring",
           "{} depot employs around forty people",
           "{} depot is next to a bakery",
           "{} depot switched to LED lighting last year",
           "{} depot won an award for tidy loading bays"}}}}},
      {"crop_failure",
       "A farm's wheat harvest has failed. Your team must identify the pest "
       "responsible and the field where the damage began.",
       {{{"pest",
          "Which pest is responsible?",
          "the ",
          {"pest", "insect", "bug", "culprit"},
          {"Aphid", "Weevil", "Locust", "Beetle", "Mite"},
          {"no honeydew residue was found on the leaves",
           "the grain kernels have no bore holes",
           "the plants were not stripped bare",
           "there are no chewed leaf edges",
           "no fine webbing was seen on the stems"},
          {"the {} appears on a regional wildlife poster",
           "the {} was the subject of a school science project",
           "the {} has a surprisingly long scientific name",
           "the {} is featured in a farming museum",
           "the {} is mentioned in an old folk song",
           "the {} was sketched by a visiting artist"}},
         {"field",
          "In which field did the damage begin?",
          "",
          {"field", "plot", "began", "started"},
          {"Northfield", "Southfield", "Eastfield", "Westfield",
           "Centerfield"},
          {"the Northfield soil samples were healthy",
           "Southfield was harvested a week early without losses",
           "the Eastfield plants were untouched in late June",
           "Westfield shows no damage near its borders",
           "Centerfield was still green when the damage spread"},
          {"{} has a wooden gate painted blue",
           "{} was once used to graze sheep",
           "{} is bordered by an old stone wall",
           "{} has a weather station in one corner",
           "{} was bought by the family in 1962",
           "{} hosts a scarecrow contest every autumn"}}}}},
      {"power_outage",
       "A neighbourhood lost power overnight. Your team must find which "
       "substation failed and what triggered the outage.",
       {{{"substation",
          "Which substation failed?",
          "",
          {"substation", "station", "site"},
          {"Alder", "Birch", "Cedar", "Hazel", "Maple"},
          {"the Alder substation kept its backup lights on",
           "Birch reported normal output all night",
           "the Cedar breakers never tripped",
           "Hazel was isolated for maintenance and carried no load",
           "the Maple control room logged no alarms"},
          {"{} substation was built in the 1970s",
           "{} substation has a mural on its outer wall",
           "{} substation is surrounded by tall hedges",
           "{} substation appears on the city heritage list",
           "{} substation is visited by school groups",
           "{} substation shares a road with a cinema"}},
         {"trigger",
          "What triggered the outage?",
          "",
          {"trigger", "triggered", "cause", "event"},
          {"Lightning", "Flooding", "Squirrel", "Surge", "Fire"},
          {"there was no storm activity overnight",
           "the underground vault is completely dry",
           "no animal remains were found near the transformer",
           "the voltage logs show no spike",
           "there are no scorch marks anywhere on site"},
          {"{} incidents are summarised in the annual report",
           "{} is one of the categories in the fault database",
           "{} was the theme of a recent staff workshop",
           "{} events are mapped on the control room wall",
           "{} is covered in the new-hire safety video",
           "{} statistics are shared with the regulator"}}}}},
  };
  return themes;
}

std::size_t ThemeIndex(std::string_view key) {
  const auto& themes = Themes();
  for (std::size_t i = 0; i < themes.size(); ++i) {
    if (key == themes[i].key) return i;
  }
  throw ValidationError("InvalidPuzzle", fmt::format("unknown theme '{}'", key));
}

std::string OptionLabel(const ThemeDimension& dim, int option) {
  if (option < static_cast<int>(dim.options.size())) return dim.options[option];
  return fmt::format("{}-{}", dim.options[option % dim.options.size()],
                     option / dim.options.size() + 1);
}

Dimension MakeDimension(const ThemeDimension& dim, int n_options) {
  Dimension out;
  out.name = dim.name;
  out.question = dim.question;
  out.keywords = dim.keywords;
  for (int k = 0; k < n_options; ++k) out.options.push_back(OptionLabel(dim, k));
  return out;
}

std::string RenderClue(const ThemeDimension& dim, const Clue& clue,
                       int report_number, std::size_t template_index) {
  const std::string label = OptionLabel(dim, clue.option);
  if (clue.kind == ClueKind::kDisqualifying) {
    const std::string negation =
        clue.option < static_cast<int>(dim.negations.size())
            ? dim.negations[clue.option]
            : fmt::format("the evidence does not match {}", label);
    return fmt::format("Report #{} indicates {} so it's not {}{}.",
                       report_number, negation, dim.article, label);
  }
  const std::string& tpl =
      dim.distractors[template_index % dim.distractors.size()];
  return fmt::format("Report #{} indicates that {}.", report_number,
                     fmt::format(fmt::runtime(tpl), label));
}

template <typename T>
void Shuffle(std::vector<T>& v, Rng& rng) {
  // Fisher-Yates with explicit draws so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

// Report numbers and distractor templates drawn fresh; used by both the
// generator and the parallel-form relabeling.
void RenderAll(Puzzle& puzzle, const Theme& theme, Rng& rng) {
  std::vector<int> numbers(puzzle.clues.size());
  std::iota(numbers.begin(), numbers.end(), 1);
  Shuffle(numbers, rng);
  std::vector<std::vector<std::size_t>> templates(puzzle.dimensions.size());
  for (std::size_t d = 0; d < templates.size(); ++d) {
    templates[d].resize(theme.dimensions[d % 2].distractors.size());
    std::iota(templates[d].begin(), templates[d].end(), 0);
    Shuffle(templates[d], rng);
  }
  std::vector<std::size_t> used(puzzle.dimensions.size(), 0);
  for (std::size_t i = 0; i < puzzle.clues.size(); ++i) {
    Clue& clue = puzzle.clues[i];
    const auto d = static_cast<std::size_t>(clue.dimension);
    std::size_t tpl = 0;
    if (clue.kind == ClueKind::kDistractor) {
      tpl = templates[d][used[d] % templates[d].size()];
      ++used[d];
    }
    clue.text = RenderClue(theme.dimensions[d % 2], clue, numbers[i], tpl);
  }
}

void DeriveKeys(Puzzle& puzzle) {
  std::vector<const Clue*> pooled;
  for (const Clue& c : puzzle.clues) pooled.push_back(&c);
  puzzle.answer_keys.clear();
  for (int d = 0; d < puzzle.spec.n_dimensions; ++d) {
    puzzle.answer_keys.push_back(
        DeriveAnswerKey(pooled, d, puzzle.spec.n_options));
  }
}

std::string KindName(ClueKind kind) {
  return kind == ClueKind::kDisqualifying ? "Disqualifying" : "Distractor";
}

ClueKind ParseKind(const std::string& s) {
  if (s == "Disqualifying") return ClueKind::kDisqualifying;
  if (s == "Distractor") return ClueKind::kDistractor;
  throw ValidationError("InvalidPuzzle", fmt::format("unknown clue kind '{}'", s));
}

}  // namespace

std::string_view RoleName(Role role) {
  switch (role) {
    case Role::kLeader: return "Leader";
    case Role::kFollower1: return "Follower1";
    case Role::kFollower2: return "Follower2";
    case Role::kFollower3: return "Follower3";
    case Role::kAll: return "All";
  }
  return "?";
}

Role ParseRole(std::string_view name) {
  for (Role r : {Role::kLeader, Role::kFollower1, Role::kFollower2,
                 Role::kFollower3, Role::kAll}) {
    if (RoleName(r) == name) return r;
  }
  throw ValidationError("UnknownRole", fmt::format("unknown role '{}'", name));
}

int PuzzleSpec::public_per_dimension() const {
  return static_cast<int>(
      std::lround(clues_per_member_per_dimension * public_fraction));
}

int PuzzleSpec::private_per_role() const {
  return clues_per_member_per_dimension - public_per_dimension();
}

void PuzzleSpec::Validate() const {
  auto invalid = [](const std::string& msg) {
    return ValidationError("InvalidSpec", msg);
  };
  if (n_options < 2) throw invalid("n_options must be at least 2");
  if (n_dimensions < 1) throw invalid("n_dimensions must be at least 1");
  if (clues_per_member_per_dimension < 1) {
    throw invalid("clues_per_member_per_dimension must be at least 1");
  }
  if (!(public_fraction >= 0.0 && public_fraction <= 1.0)) {
    throw invalid("public_fraction must lie in [0, 1]");
  }
  const double pub = clues_per_member_per_dimension * public_fraction;
  if (std::abs(pub - std::round(pub)) > 1e-9) {
    throw invalid(fmt::format(
        "clues_per_member_per_dimension x public_fraction = {} is not an "
        "integer", pub));
  }
  if (static_cast<int>(eliminated_options.size()) != n_dimensions) {
    throw invalid(fmt::format("eliminated_options has {} entries for {} "
                              "dimensions", eliminated_options.size(),
                              n_dimensions));
  }
  const int capacity = static_cast<int>(kRoleCount) * private_per_role();
  for (std::size_t d = 0; d < eliminated_options.size(); ++d) {
    const auto& elim = eliminated_options[d];
    std::set<int> seen;
    for (int opt : elim) {
      if (opt < 0 || opt >= n_options) {
        throw invalid(fmt::format("dimension {}: option {} out of range", d, opt));
      }
      if (!seen.insert(opt).second) {
        throw invalid(fmt::format("dimension {}: option {} listed twice", d, opt));
      }
    }
    const int e = static_cast<int>(elim.size());
    if (e == 0) {
      throw ValidationError("InfeasibleSpec",
                            fmt::format("dimension {}: at least one option "
                                        "must be ruled out", d));
    }
    if (e >= n_options) {
      throw ValidationError("InfeasibleSpec",
                            fmt::format("dimension {}: every option would be "
                                        "ruled out", d));
    }
    // A single elimination is necessarily known in full by whoever holds it.
    if (e < 2) {
      throw ValidationError(
          "InfeasibleSpec",
          fmt::format("dimension {}: one elimination cannot be split across "
                      "roles", d));
    }
    if (e > capacity) {
      throw ValidationError(
          "InfeasibleSpec",
          fmt::format("dimension {}: {} eliminations exceed {} private clue "
                      "slots", d, e, capacity));
    }
  }
}

std::vector<const Clue*> Puzzle::CluesFor(Role role) const {
  std::vector<const Clue*> out;
  for (int idx : assignments[RoleIndex(role)]) out.push_back(&clues[idx]);
  return out;
}

std::vector<const Clue*> Puzzle::CluesFor(Role role, int dimension) const {
  std::vector<const Clue*> out;
  for (int idx : assignments[RoleIndex(role)]) {
    if (clues[idx].dimension == dimension) out.push_back(&clues[idx]);
  }
  return out;
}

CredenceProfile DeriveAnswerKey(const std::vector<const Clue*>& pooled_clues,
                                int dimension, int n_options) {
  std::vector<bool> alive(static_cast<std::size_t>(n_options), true);
  for (const Clue* clue : pooled_clues) {
    if (clue->dimension == dimension && clue->kind == ClueKind::kDisqualifying &&
        clue->option >= 0 && clue->option < n_options) {
      alive[clue->option] = false;
    }
  }
  if (std::none_of(alive.begin(), alive.end(), [](bool b) { return b; })) {
    throw ValidationError("AllOptionsEliminated",
                          fmt::format("dimension {}: every option is ruled "
                                      "out", dimension));
  }
  return CredenceProfile::UniformOver(alive);
}

Puzzle GeneratePuzzle(const PuzzleSpec& spec, std::uint64_t rng_seed) {
  spec.Validate();
  Rng rng(DeriveSeed(rng_seed, spec.theme_seed));
  const auto& themes = Themes();
  const Theme& theme = themes[DeriveSeed(spec.theme_seed, rng_seed, 17) %
                              themes.size()];

  Puzzle puzzle;
  puzzle.id = fmt::format("{}-s{}", theme.key, rng_seed);
  puzzle.spec = spec;
  puzzle.theme = theme.key;
  puzzle.scenario = theme.scenario;
  for (int d = 0; d < spec.n_dimensions; ++d) {
    puzzle.dimensions.push_back(
        MakeDimension(theme.dimensions[d % 2], spec.n_options));
  }

  const int n_public = spec.public_per_dimension();
  const int n_private = spec.private_per_role();
  std::array<std::vector<int>, kRoleCount> per_role;
  auto add_clue = [&](int d, ClueKind kind, int option, std::optional<Role> owner) {
    Clue c;
    c.id = fmt::format("c{}", puzzle.clues.size());
    c.dimension = d;
    c.kind = kind;
    c.option = option;
    c.owner = owner;
    puzzle.clues.push_back(std::move(c));
    return static_cast<int>(puzzle.clues.size() - 1);
  };
  auto random_option = [&] {
    return static_cast<int>(rng() % static_cast<std::uint64_t>(spec.n_options));
  };

  for (int d = 0; d < spec.n_dimensions; ++d) {
    std::vector<int> public_ids;
    for (int k = 0; k < n_public; ++k) {
      public_ids.push_back(
          add_clue(d, ClueKind::kDistractor, random_option(), std::nullopt));
    }
    // Round-robin the eliminations over a shuffled role order so that
    // consecutive eliminations land with different roles.
    std::vector<Role> roles = {Role::kLeader, Role::kFollower1,
                               Role::kFollower2, Role::kFollower3};
    Shuffle(roles, rng);
    std::vector<int> elim = spec.eliminated_options[d];
    Shuffle(elim, rng);
    std::array<std::vector<int>, kRoleCount> disq_options;
    for (std::size_t j = 0; j < elim.size(); ++j) {
      disq_options[RoleIndex(roles[j % roles.size()])].push_back(elim[j]);
    }
    for (Role role : {Role::kLeader, Role::kFollower1, Role::kFollower2,
                      Role::kFollower3}) {
      std::vector<int> ids = public_ids;
      for (int opt : disq_options[RoleIndex(role)]) {
        ids.push_back(add_clue(d, ClueKind::kDisqualifying, opt, role));
      }
      while (static_cast<int>(ids.size()) < n_public + n_private) {
        ids.push_back(add_clue(d, ClueKind::kDistractor, random_option(), role));
      }
      Shuffle(ids, rng);
      auto& dst = per_role[RoleIndex(role)];
      dst.insert(dst.end(), ids.begin(), ids.end());
    }
  }
  puzzle.assignments = std::move(per_role);
  RenderAll(puzzle, theme, rng);
  DeriveKeys(puzzle);
  return puzzle;
}

VerificationReport VerifyHiddenProfile(const Puzzle& puzzle) {
  VerificationReport report;
  const int n_dims = static_cast<int>(puzzle.dimensions.size());
  const int n_options = puzzle.spec.n_options;
  std::vector<const Clue*> pooled;
  std::vector<bool> seen(puzzle.clues.size(), false);
  for (const auto& ids : puzzle.assignments) {
    for (int idx : ids) {
      if (!seen[idx]) pooled.push_back(&puzzle.clues[idx]);
      seen[idx] = true;
    }
  }
  for (int d = 0; d < n_dims; ++d) {
    report.pooled.push_back(DeriveAnswerKey(pooled, d, n_options));
  }
  report.holds_hidden_profile = true;
  for (std::size_t r = 0; r < kRoleCount; ++r) {
    const Role role = static_cast<Role>(r);
    const auto own = puzzle.CluesFor(role);
    bool fails = false;
    for (int d = 0; d < n_dims; ++d) {
      report.individual[r].push_back(DeriveAnswerKey(own, d, n_options));
      if (report.individual[r].back() == report.pooled[d]) fails = true;
    }
    if (fails) {
      report.failing_roles.push_back(role);
      report.holds_hidden_profile = false;
    }
  }
  return report;
}

Puzzle MakeParallelForm(const Puzzle& puzzle, std::uint64_t theme_seed) {
  const auto& themes = Themes();
  Rng rng(DeriveSeed(theme_seed, 0x9a7a11e1ULL));
  std::size_t theme_idx = DeriveSeed(theme_seed, 1) % themes.size();
  if (themes.size() > 1 && themes[theme_idx].key == puzzle.theme) {
    theme_idx = (theme_idx + 1) % themes.size();
  }
  const Theme& theme = themes[theme_idx];

  Puzzle out = puzzle;
  out.id = fmt::format("{}-pf{}", puzzle.id, theme_seed);
  out.theme = theme.key;
  out.scenario = theme.scenario;
  out.spec.theme_seed = theme_seed;
  out.dimensions.clear();
  const int n_options = puzzle.spec.n_options;
  std::vector<std::vector<int>> perm(puzzle.dimensions.size());
  for (std::size_t d = 0; d < puzzle.dimensions.size(); ++d) {
    out.dimensions.push_back(MakeDimension(theme.dimensions[d % 2], n_options));
    perm[d].resize(static_cast<std::size_t>(n_options));
    std::iota(perm[d].begin(), perm[d].end(), 0);
    Shuffle(perm[d], rng);
  }
  for (Clue& clue : out.clues) clue.option = perm[clue.dimension][clue.option];
  for (std::size_t d = 0; d < out.spec.eliminated_options.size(); ++d) {
    for (int& opt : out.spec.eliminated_options[d]) opt = perm[d][opt];
    std::sort(out.spec.eliminated_options[d].begin(),
              out.spec.eliminated_options[d].end());
  }
  RenderAll(out, theme, rng);
  DeriveKeys(out);
  return out;
}

nlohmann::json StructuralFingerprint(const Puzzle& puzzle) {
  nlohmann::json roles = nlohmann::json::object();
  for (std::size_t r = 0; r < kRoleCount; ++r) {
    nlohmann::json dims = nlohmann::json::array();
    for (std::size_t d = 0; d < puzzle.dimensions.size(); ++d) {
      std::vector<std::string> items;
      for (const Clue* c : puzzle.CluesFor(static_cast<Role>(r),
                                           static_cast<int>(d))) {
        items.push_back(KindName(c->kind) + "/" +
                        (c->is_public() ? "Public" : "Private"));
      }
      std::sort(items.begin(), items.end());
      dims.push_back(items);
    }
    roles[std::string(RoleName(static_cast<Role>(r)))] = dims;
  }
  nlohmann::json eliminated = nlohmann::json::array();
  nlohmann::json shapes = nlohmann::json::array();
  for (std::size_t d = 0; d < puzzle.answer_keys.size(); ++d) {
    const auto alloc = puzzle.answer_keys[d].allocations();
    std::vector<int> sorted(alloc.begin(), alloc.end());
    std::sort(sorted.begin(), sorted.end());
    shapes.push_back(sorted);
    eliminated.push_back(std::count(sorted.begin(), sorted.end(), 0));
  }
  return {{"roles", roles},
          {"eliminated_counts", eliminated},
          {"key_shapes", shapes}};
}

void ValidatePuzzle(const Puzzle& puzzle) {
  auto bad = [&](const std::string& msg) {
    return ValidationError("InvalidPuzzle",
                           fmt::format("puzzle {}: {}", puzzle.id, msg));
  };
  try {
    puzzle.spec.Validate();
  } catch (const Error& e) {
    throw bad(e.what());
  }
  const auto& spec = puzzle.spec;
  if (static_cast<int>(puzzle.dimensions.size()) != spec.n_dimensions ||
      static_cast<int>(puzzle.answer_keys.size()) != spec.n_dimensions) {
    throw bad("dimension count mismatch");
  }
  for (const auto& dim : puzzle.dimensions) {
    if (static_cast<int>(dim.options.size()) != spec.n_options) {
      throw bad("option label count mismatch");
    }
  }
  std::vector<int> holders(puzzle.clues.size(), 0);
  for (std::size_t r = 0; r < kRoleCount; ++r) {
    for (int idx : puzzle.assignments[r]) {
      if (idx < 0 || idx >= static_cast<int>(puzzle.clues.size())) {
        throw bad("assignment references a missing clue");
      }
      ++holders[idx];
      const Clue& c = puzzle.clues[idx];
      if (!c.is_public() && RoleIndex(*c.owner) != r) {
        throw bad(fmt::format("private clue {} assigned to a non-owner", c.id));
      }
    }
    for (int d = 0; d < spec.n_dimensions; ++d) {
      int pub = 0, priv = 0;
      for (const Clue* c : puzzle.CluesFor(static_cast<Role>(r), d)) {
        (c->is_public() ? pub : priv)++;
      }
      if (pub != spec.public_per_dimension() || priv != spec.private_per_role()) {
        throw bad(fmt::format("role {} holds {} public / {} private clues in "
                              "dimension {}",
                              RoleName(static_cast<Role>(r)), pub, priv, d));
      }
    }
  }
  for (std::size_t i = 0; i < puzzle.clues.size(); ++i) {
    const Clue& c = puzzle.clues[i];
    if (c.text.empty()) throw bad(fmt::format("clue {} has empty text", c.id));
    if (c.dimension < 0 || c.dimension >= spec.n_dimensions ||
        c.option < 0 || c.option >= spec.n_options) {
      throw bad(fmt::format("clue {} out of range", c.id));
    }
    const int expected = c.is_public() ? static_cast<int>(kRoleCount) : 1;
    if (holders[i] != expected) {
      throw bad(fmt::format("clue {} held by {} roles", c.id, holders[i]));
    }
  }
  std::vector<const Clue*> pooled;
  for (const Clue& c : puzzle.clues) pooled.push_back(&c);
  for (int d = 0; d < spec.n_dimensions; ++d) {
    if (!(DeriveAnswerKey(pooled, d, spec.n_options) == puzzle.answer_keys[d])) {
      throw bad(fmt::format("answer key {} does not follow from the clues", d));
    }
  }
}

nlohmann::json SpecToJson(const PuzzleSpec& spec) {
  return {{"n_options", spec.n_options},
          {"n_dimensions", spec.n_dimensions},
          {"clues_per_member_per_dimension", spec.clues_per_member_per_dimension},
          {"public_fraction", spec.public_fraction},
          {"eliminated_options", spec.eliminated_options},
          {"theme_seed", spec.theme_seed}};
}

PuzzleSpec SpecFromJson(const nlohmann::json& doc) {
  PuzzleSpec spec;
  try {
    spec.n_options = doc.value("n_options", spec.n_options);
    spec.n_dimensions = doc.value("n_dimensions", spec.n_dimensions);
    spec.clues_per_member_per_dimension = doc.value(
        "clues_per_member_per_dimension", spec.clues_per_member_per_dimension);
    spec.public_fraction = doc.value("public_fraction", spec.public_fraction);
    if (doc.contains("eliminated_options")) {
      spec.eliminated_options =
          doc.at("eliminated_options").get<std::vector<std::vector<int>>>();
    }
    spec.theme_seed = doc.value("theme_seed", spec.theme_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("InvalidSpec", e.what());
  }
  return spec;
}

nlohmann::json PuzzleToJson(const Puzzle& puzzle) {
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& d : puzzle.dimensions) {
    dims.push_back({{"name", d.name},
                    {"question", d.question},
                    {"options", d.options},
                    {"keywords", d.keywords}});
  }
  nlohmann::json clues = nlohmann::json::array();
  for (const auto& c : puzzle.clues) {
    clues.push_back(
        {{"id", c.id},
         {"dimension", c.dimension},
         {"kind", KindName(c.kind)},
         {"option", c.option},
         {"visibility", c.is_public() ? "Public" : "Private"},
         {"owner", c.owner ? nlohmann::json(RoleName(*c.owner)) : nlohmann::json()},
         {"text", c.text}});
  }
  nlohmann::json assignments = nlohmann::json::object();
  for (std::size_t r = 0; r < kRoleCount; ++r) {
    nlohmann::json ids = nlohmann::json::array();
    for (int idx : puzzle.assignments[r]) ids.push_back(puzzle.clues[idx].id);
    assignments[std::string(RoleName(static_cast<Role>(r)))] = ids;
  }
  nlohmann::json keys = nlohmann::json::array();
  for (const auto& k : puzzle.answer_keys) {
    keys.push_back(std::vector<int>(k.allocations().begin(), k.allocations().end()));
  }
  return {{"format", kPuzzleFormat},
          {"id", puzzle.id},
          {"spec", SpecToJson(puzzle.spec)},
          {"theme", puzzle.theme},
          {"scenario", puzzle.scenario},
          {"dimensions", dims},
          {"clues", clues},
          {"assignments", assignments},
          {"answer_keys", keys},
          {"structural_fingerprint", StructuralFingerprint(puzzle)}};
}

Puzzle PuzzleFromJson(const nlohmann::json& doc) {
  Puzzle p;
  try {
    if (doc.value("format", std::string()) != kPuzzleFormat) {
      throw ValidationError("InvalidPuzzle",
                            fmt::format("expected format '{}'", kPuzzleFormat));
    }
    p.id = doc.at("id").get<std::string>();
    p.spec = SpecFromJson(doc.at("spec"));
    p.theme = doc.at("theme").get<std::string>();
    ThemeIndex(p.theme);
    p.scenario = doc.at("scenario").get<std::string>();
    for (const auto& d : doc.at("dimensions")) {
      Dimension dim;
      dim.name = d.at("name").get<std::string>();
      dim.question = d.at("question").get<std::string>();
      dim.options = d.at("options").get<std::vector<std::string>>();
      dim.keywords = d.value("keywords", std::vector<std::string>{});
      p.dimensions.push_back(std::move(dim));
    }
    std::map<std::string, int> index;
    for (const auto& c : doc.at("clues")) {
      Clue clue;
      clue.id = c.at("id").get<std::string>();
      clue.dimension = c.at("dimension").get<int>();
      clue.kind = ParseKind(c.at("kind").get<std::string>());
      clue.option = c.at("option").get<int>();
      const auto vis = c.at("visibility").get<std::string>();
      if (vis == "Private") {
        clue.owner = ParseRole(c.at("owner").get<std::string>());
      } else if (vis != "Public") {
        throw ValidationError("InvalidPuzzle", "visibility must be Public or Private");
      }
      clue.text = c.at("text").get<std::string>();
      index[clue.id] = static_cast<int>(p.clues.size());
      p.clues.push_back(std::move(clue));
    }
    for (std::size_t r = 0; r < kRoleCount; ++r) {
      const auto name = std::string(RoleName(static_cast<Role>(r)));
      for (const auto& id : doc.at("assignments").at(name)) {
        auto it = index.find(id.get<std::string>());
        if (it == index.end()) {
          throw ValidationError("InvalidPuzzle", "assignment names unknown clue");
        }
        p.assignments[r].push_back(it->second);
      }
    }
    for (const auto& k : doc.at("answer_keys")) {
      const auto raw = k.get<std::vector<int>>();
      p.answer_keys.push_back(CredenceProfile::Validate(raw));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("InvalidPuzzle", e.what());
  } catch (const Error& e) {
    if (e.code() == "InvalidPuzzle") throw;
    throw ValidationError("InvalidPuzzle", e.what(), e.code());
  }
  ValidatePuzzle(p);
  if (doc.contains("structural_fingerprint") &&
      doc.at("structural_fingerprint") != StructuralFingerprint(p)) {
    throw ValidationError("InvalidPuzzle", "structural fingerprint mismatch");
  }
  return p;
}

}  // namespace leaderlab
