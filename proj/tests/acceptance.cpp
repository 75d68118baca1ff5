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

// Acceptance runner: one PASS/FAIL line per criterion. Optional arguments
// select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "leaderlab/error.hpp"
#include "leaderlab/estimator.hpp"
#include "leaderlab/metrics.hpp"
#include "leaderlab/orchestrator.hpp"
#include "leaderlab/puzzle.hpp"
#include "leaderlab/scoring.hpp"
#include "leaderlab/service.hpp"
#include "leaderlab/session.hpp"
#include "oracles.hpp"
#include "testing.hpp"

namespace {

namespace fs = std::filesystem;
using leaderlab::Clue;
using leaderlab::ClueKind;
using leaderlab::CredenceProfile;
using leaderlab::FitMethod;
using leaderlab::ManualClock;
using leaderlab::Puzzle;
using leaderlab::Role;
using leaderlab::Session;
using leaderlab::SessionEvent;
using leaderlab::testing::Groups;
using nlohmann::json;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

constexpr std::array<Role, 4> kSeats = {Role::kLeader, Role::kFollower1, Role::kFollower2,
                                        Role::kFollower3};

double Pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<int> Alloc(const CredenceProfile& p) {
  return {p.allocations().begin(), p.allocations().end()};
}

// Surviving options shared out evenly, remainder to the lowest indices.
std::vector<int> OraclePosterior(const std::vector<const Clue*>& clues, int dim, int n_options) {
  std::vector<bool> alive(n_options, true);
  for (const Clue* c : clues) {
    if (c->dimension == dim && c->kind == ClueKind::kDisqualifying) alive[c->option] = false;
  }
  const int survivors = static_cast<int>(std::count(alive.begin(), alive.end(), true));
  std::vector<int> out(n_options, 0);
  if (survivors == 0) return out;
  int left = 100;
  for (int k = 0; k < n_options; ++k) {
    if (alive[k]) left -= out[k] = 100 / survivors;
  }
  for (int k = 0; k < n_options && left > 0; ++k) {
    if (alive[k]) {
      ++out[k];
      --left;
    }
  }
  return out;
}

Puzzle StripDistractors(const Puzzle& p) {
  Puzzle out = p;
  out.clues.clear();
  std::vector<int> remap(p.clues.size(), -1);
  for (std::size_t i = 0; i < p.clues.size(); ++i) {
    if (p.clues[i].kind == ClueKind::kDistractor) continue;
    remap[i] = static_cast<int>(out.clues.size());
    out.clues.push_back(p.clues[i]);
  }
  for (auto& seat : out.assignments) {
    std::vector<int> kept;
    for (int idx : seat) {
      if (remap[idx] >= 0) kept.push_back(remap[idx]);
    }
    seat = kept;
  }
  return out;
}

Outcome PuzzleIntegrity() {
  const auto start = std::chrono::steady_clock::now();
  const leaderlab::PuzzleSpec spec;
  int good = 0;
  std::string first_bad;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Puzzle p = leaderlab::GeneratePuzzle(spec, seed);
    const int n_opt = spec.n_options;
    const auto report = leaderlab::VerifyHiddenProfile(p);
    bool ok = report.holds_hidden_profile && report.failing_roles.empty();
    std::vector<const Clue*> pooled;
    for (const auto& c : p.clues) pooled.push_back(&c);
    const Puzzle stripped = StripDistractors(p);
    const auto stripped_report = leaderlab::VerifyHiddenProfile(stripped);
    ok = ok && stripped_report.holds_hidden_profile;
    std::vector<const Clue*> no_distractors;
    for (const Clue* c : pooled) {
      if (c->kind != ClueKind::kDistractor) no_distractors.push_back(c);
    }
    for (int d = 0; d < spec.n_dimensions; ++d) {
      const auto key = OraclePosterior(pooled, d, n_opt);
      ok = ok && Alloc(p.answer_keys[d]) == key && Alloc(report.pooled[d]) == key;
      ok = ok && Alloc(leaderlab::DeriveAnswerKey(no_distractors, d, n_opt)) == key;
      ok = ok && OraclePosterior(no_distractors, d, n_opt) == key;
      ok = ok && stripped_report.pooled[d] == report.pooled[d];
      for (Role r : kSeats) {
        const std::size_t i = leaderlab::RoleIndex(r);
        const auto own = OraclePosterior(p.CluesFor(r), d, n_opt);
        ok = ok && Alloc(report.individual[i][d]) == own;
        ok = ok && stripped_report.individual[i][d] == report.individual[i][d];
      }
      bool someone_misses = false;
      for (Role r : kSeats) {
        someone_misses = someone_misses || OraclePosterior(p.CluesFor(r), d, n_opt) != key;
      }
      ok = ok && someone_misses;
    }
    for (Role r : kSeats) {
      bool differs = false;
      for (int d = 0; d < spec.n_dimensions; ++d) {
        differs = differs || OraclePosterior(p.CluesFor(r), d, n_opt) !=
                                 OraclePosterior(pooled, d, n_opt);
      }
      ok = ok && differs;
    }
    if (ok) {
      ++good;
    } else if (first_bad.empty()) {
      first_bad = fmt::format(", first failure seed {}", seed);
    }
  }
  const double secs = Seconds(start);
  return {good == 1000 && secs < 30.0,
          fmt::format("{}/1000 puzzles hold, {:.2f} s{}", good, secs, first_bad)};
}

Outcome ScoringExamples() {
  const auto key = CredenceProfile::Validate(std::vector<int>{50, 0, 0, 0, 50});
  struct Case {
    std::vector<int> submitted;
    int l1;
    double expected;
  };
  const std::vector<Case> cases = {{{50, 0, 0, 0, 50}, 0, 1.0},
                                   {{50, 17, 0, 0, 33}, 34, 0.83},
                                   {{28, 18, 18, 18, 18}, 108, 0.46},
                                   {{20, 20, 20, 20, 20}, 120, 0.40}};
  bool ok = true;
  std::string got;
  for (const auto& c : cases) {
    const auto s = leaderlab::ScoreDimension(CredenceProfile::Validate(c.submitted), key);
    ok = ok && s.l1_distance == c.l1 && std::abs(s.value - c.expected) <= 1e-15 &&
         std::lround(s.value * 100) == std::lround(c.expected * 100);
    got += fmt::format("{}{:.2f}", got.empty() ? "" : " / ", s.value);
  }
  ok = ok && CredenceProfile::Flat(5) == CredenceProfile::Validate(cases[3].submitted);
  return {ok, got};
}

Outcome EstimatorOracle() {
  std::mt19937_64 rng(2026);
  int good = 0;
  double worst_ll = 0.0, worst_par = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const int leaders = std::uniform_int_distribution<int>(5, 60)(rng);
    const int per = std::uniform_int_distribution<int>(2, 8)(rng);
    const double sa = rep % 10 == 0 ? 0.0 : std::uniform_real_distribution<double>(0.05, 1.2)(rng);
    const double se = std::uniform_real_distribution<double>(0.2, 1.5)(rng);
    const double mu = std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    const Groups groups = leaderlab::testing::SimulateGroups(rng, leaders, per, sa, se, mu);
    const auto fit = leaderlab::FitVarianceComponents(groups, FitMethod::kML);
    const auto oracle = leaderlab::testing::OracleFit(groups, false);
    const double dll = std::abs(fit.log_likelihood - oracle.loglik);
    const double dpar = std::max(std::abs(fit.sigma_alpha * fit.sigma_alpha -
                                          oracle.sigma_alpha * oracle.sigma_alpha),
                                 std::abs(fit.sigma_e * fit.sigma_e -
                                          oracle.sigma_e * oracle.sigma_e));
    worst_ll = std::max(worst_ll, dll);
    worst_par = std::max(worst_par, dpar);
    good += dll < 1e-6 && dpar < 1e-4;
  }
  return {good == 100, fmt::format("{}/100 match, max |dloglik| {:.2e}, max |dvar| {:.2e}",
                                   good, worst_ll, worst_par)};
}

Outcome ProfileCoverage() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4242);
  const double truth = 0.65;
  int covered = 0, bounded = 0;
  const int reps = 1000;
  for (int rep = 0; rep < reps; ++rep) {
    const Groups groups = leaderlab::testing::SimulateGroups(rng, 250, 6, truth, truth, 0.0);
    const auto fit = leaderlab::FitVarianceComponents(groups, FitMethod::kREML);
    const auto ci = leaderlab::ProfileLikelihoodCi(fit, groups, 0.95);
    bounded += ci.upper_bounded;
    covered += ci.lower <= truth && truth <= ci.upper;
  }
  const double secs = Seconds(start);
  const double rate = 100.0 * covered / reps;
  return {rate >= 93.0 && rate <= 97.0 && secs < 600.0,
          fmt::format("coverage {:.1f}% over {} reps ({} bounded), {:.1f} s", rate, reps,
                      bounded, secs)};
}

Outcome EndToEnd() {
  const int reps = 20;
  double sa_sum = 0.0, r2_sum = 0.0;
  int fits = 0;
  double sa_lo = 1e9, sa_hi = -1e9, r2_lo = 1e9, r2_hi = -1e9;
  for (int rep = 0; rep < reps; ++rep) {
    leaderlab::SyntheticConfig c;
    c.seed = 1000 + rep;
    c.write_logs = false;
    c.workers = 4;
    const auto ds = leaderlab::RunSyntheticExperiment(c);
    const auto report =
        leaderlab::Analyze(ds.observations, {"task_skill"}, FitMethod::kREML, 0, rep);
    for (const auto& t : report.tests) {
      sa_sum += t.fit.sigma_alpha;
      r2_sum += t.fixed_effects_r2;
      sa_lo = std::min(sa_lo, t.fit.sigma_alpha);
      sa_hi = std::max(sa_hi, t.fit.sigma_alpha);
      r2_lo = std::min(r2_lo, t.fixed_effects_r2);
      r2_hi = std::max(r2_hi, t.fixed_effects_r2);
      ++fits;
    }
  }
  const double sa = sa_sum / fits, r2 = r2_sum / fits;
  return {std::abs(sa - 0.65) <= 0.05 && r2 >= 0.45 && r2 <= 0.60,
          fmt::format("mean sigma_alpha {:.4f} (range {:.3f}-{:.3f}), mean FE R2 {:.4f} "
                      "(range {:.3f}-{:.3f}), {} fits",
                      sa, sa_lo, sa_hi, r2, r2_lo, r2_hi, fits)};
}

Outcome Disattenuation() {
  std::mt19937_64 rng(808);
  std::normal_distribution<double> z;
  const int n = 250, reps = 200;
  const double latent = 0.8, rel = 0.7;
  const double noise_sd = std::sqrt((1.0 - rel) / rel);
  // Group-level noise that gives leader means the same reliability.
  const int m = 6;
  const double group_sd = std::sqrt(m * (1.0 - rel) / rel);
  double r_sum = 0.0, rho_sum = 0.0, grouped_sum = 0.0;
  bool identity = true, spearman = true;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<double> x(n), y(n);
    Groups gx(n), gy(n);
    for (int i = 0; i < n; ++i) {
      const double tx = z(rng);
      const double ty = latent * tx + std::sqrt(1.0 - latent * latent) * z(rng);
      x[i] = tx + noise_sd * z(rng);
      y[i] = ty + noise_sd * z(rng);
      for (int g = 0; g < m; ++g) {
        gx[i].push_back(tx + group_sd * z(rng));
        gy[i].push_back(ty + group_sd * z(rng));
      }
    }
    const auto report = leaderlab::DisattenuatedCorrelation(x, y, rel, rel, 0, rep);
    const double r = Pearson(x, y);
    spearman = spearman && std::abs(report.raw_r - r) < 1e-12 &&
               std::abs(report.disattenuated_rho - std::clamp(r / rel, -1.0, 1.0)) < 1e-12;
    r_sum += report.raw_r;
    rho_sum += report.disattenuated_rho;
    const auto unit = leaderlab::DisattenuatedCorrelation(x, y, 1.0, 1.0, 0, rep);
    identity = identity && unit.disattenuated_rho == unit.raw_r;
    grouped_sum +=
        leaderlab::DisattenuatedCorrelation(gx, gy, FitMethod::kREML, 0, rep).disattenuated_rho;
  }
  const double r = r_sum / reps, rho = rho_sum / reps, grouped = grouped_sum / reps;
  return {std::abs(r - 0.56) <= 0.05 && std::abs(rho - 0.80) <= 0.05 &&
              std::abs(grouped - 0.80) <= 0.05 && identity && spearman,
          fmt::format("mean r {:.4f}, mean rho {:.4f}, estimated-reliability rho {:.4f}, "
                      "rel=1 identity {}",
                      r, rho, grouped, identity ? "exact" : "broken")};
}

// Private clue texts of follower seats that no follower message carried.
std::vector<std::string> UnsentPrivate(const Puzzle& puzzle,
                                       const std::vector<SessionEvent>& events) {
  std::string sent;
  for (const auto& e : events) {
    if (const auto* m = e.message(); m && m->sender != Role::kLeader) sent += m->text + "\n";
  }
  std::vector<std::string> out;
  for (const auto& c : puzzle.clues) {
    if (c.owner && *c.owner != Role::kLeader && sent.find(c.text) == std::string::npos) {
      out.push_back(c.text);
    }
  }
  return out;
}

bool FollowerToFollower(const SessionEvent& e) {
  const auto* m = e.message();
  return m && m->sender != Role::kLeader && m->recipient != Role::kLeader;
}

Outcome TopologyAndLeakage() {
  std::mt19937_64 rng(77);
  const auto puzzle = std::make_shared<const Puzzle>(
      leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, 5));
  const std::array<Role, 5> roles = {Role::kLeader, Role::kFollower1, Role::kFollower2,
                                     Role::kFollower3, Role::kAll};
  int attempts = 0, rejected_ff = 0, ff_attempts = 0, ff_delivered = 0;
  for (int s = 0; attempts < 10'000; ++s) {
    ManualClock clock;
    leaderlab::SessionConfig cfg;
    cfg.session_id = fmt::format("fuzz{}", s);
    cfg.leader_id = "L";
    cfg.follower_ids = {"a", "b", "c"};
    cfg.clock = clock.AsClock();
    auto session = Session::Create(cfg, puzzle);
    for (int i = 0; i < 100 && attempts < 10'000; ++i, ++attempts) {
      const Role from = roles[rng() % 4];
      const Role to = roles[rng() % 5];
      const bool ff = from != Role::kLeader && to != Role::kLeader;
      ff_attempts += ff;
      try {
        session.PostMessage(from, to, fmt::format("msg {} {}", s, i));
      } catch (const leaderlab::Error& e) {
        rejected_ff += ff && std::string(e.code()) == "StarTopologyViolation";
      }
    }
    for (const auto& e : session.events()) ff_delivered += FollowerToFollower(e);
  }

  ManualClock clock;
  leaderlab::ServiceOptions options;
  for (std::uint64_t s = 100; s < 112; ++s) {
    options.bank.push_back(leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, s));
  }
  options.clock = clock.AsClock();
  const auto bank = options.bank;
  leaderlab::SessionService svc(std::move(options));
  const std::array<const char*, 4> targets = {"Follower1", "Follower2", "Follower3", "All"};
  const std::array<const char*, 3> policies = {"oracle", "withholding", "chatty"};
  int leaks = 0, key_leaks = 0, service_ff = 0, sessions = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Puzzle& puzzle = bank[rep % bank.size()];
    const auto created = svc.CreateSession(
        json{{"puzzle_id", puzzle.id}, {"follower_policy", policies[rng() % 3]}}.dump());
    if (created.status != 201) continue;
    ++sessions;
    const std::string id = created.body["session_id"];
    const int n = static_cast<int>(rng() % 14);
    for (int i = 0; i < n; ++i) {
      const auto& dim = puzzle.dimensions[rng() % puzzle.dimensions.size()];
      const auto& word = dim.keywords[rng() % dim.keywords.size()];
      const std::string text = rng() % 2 ? "What do you know about the " + word + "?"
                                         : "Is it " + dim.options[rng() % dim.options.size()] + "?";
      svc.PostMessage(id, json{{"recipient", targets[rng() % 4]}, {"text", text}}.dump());
    }
    if (rng() % 3 == 0) {
      json profiles = json::array();
      for (std::size_t d = 0; d < puzzle.dimensions.size(); ++d) {
        profiles.push_back(Alloc(CredenceProfile::Flat(puzzle.dimensions[d].options.size())));
      }
      svc.SubmitAnswers(id, json{{"profiles", profiles}}.dump());
    }
    const auto events = svc.EventsOf(id);
    const std::string dumped = svc.GetView(id).body.dump() + svc.GetEvents(id, 0).body.dump();
    for (const auto& text : UnsentPrivate(puzzle, events)) {
      leaks += dumped.find(text) != std::string::npos;
    }
    key_leaks += dumped.find("answer_key") != std::string::npos;
    for (const auto& key : puzzle.answer_keys) {
      key_leaks += dumped.find(json(Alloc(key)).dump()) != std::string::npos;
    }
    for (const auto& e : events) service_ff += FollowerToFollower(e);
  }
  const bool ok = attempts == 10'000 && ff_delivered == 0 && rejected_ff == ff_attempts &&
                  sessions == 1000 && leaks == 0 && key_leaks == 0 && service_ff == 0;
  return {ok, fmt::format("{} fuzzed messages, {} follower-follower attempts all rejected: {}, "
                          "delivered {}; {} service sessions, {} clue leaks, {} key leaks",
                          attempts, ff_attempts, rejected_ff == ff_attempts ? "yes" : "no",
                          ff_delivered + service_ff, sessions, leaks, key_leaks)};
}

leaderlab::Transcript Chat(const std::vector<std::tuple<Role, Role, std::string>>& lines) {
  std::vector<SessionEvent> evs;
  std::int64_t id = 0;
  for (const auto& [from, to, text] : lines) {
    evs.push_back({static_cast<std::int64_t>(evs.size() + 1), 0,
                   leaderlab::events::Message{from, to, text, ++id, false}});
  }
  return leaderlab::Transcript(evs);
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome MetricsDeterminism() {
  constexpr Role L = Role::kLeader;
  constexpr Role F1 = Role::kFollower1;
  const auto& we = leaderlab::Lexicon::PluralPronouns();
  std::vector<std::string> wrong;
  auto expect = [&](const char* what, double got, double want) {
    if (got != want) wrong.push_back(fmt::format("{}={}", what, got));
  };
  expect("words", leaderlab::CountWords(Chat({{L, F1, "what color is it"}}), L), 4);
  expect("questions", leaderlab::CountQuestions(Chat({{L, F1, "any clues? what about color?"}}), L), 2);
  expect("questions0", leaderlab::CountQuestions(Chat({{L, F1, "I think it's A."}}), L), 0);
  expect("turns3", leaderlab::CountTurns(Chat({{L, F1, "a"}, {F1, L, "b"}, {L, F1, "c"}})), 3);
  expect("turns2", leaderlab::CountTurns(Chat({{L, F1, "a"}, {L, F1, "b"}, {F1, L, "c"}})), 2);
  expect("turns0", leaderlab::CountTurns(leaderlab::Transcript()), 0);
  expect("lets", leaderlab::LexiconRate(Chat({{L, F1, "let's pool what we know"}}), L, we), 40.0);
  expect("western", leaderlab::LexiconRate(Chat({{L, F1, "The western region"}}), L, we), 0.0);

  leaderlab::testing::TempDir dir;
  leaderlab::SyntheticConfig c;
  c.n_leaders = 40;
  c.seed = 31;
  c.workers = 2;
  c.follower_policy = leaderlab::ParsePolicy("chatty");
  std::vector<std::string> csv;
  for (const char* run : {"a", "b"}) {
    leaderlab::ExportResults(leaderlab::RunSyntheticExperiment(c), dir / run, 0);
    csv.push_back(Slurp(dir.path() / run / "metrics.csv") +
                  Slurp(dir.path() / run / "metrics_z.csv"));
  }
  for (int again = 0; again < 2; ++again) {
    const auto table = leaderlab::ComputeMetricsTable(leaderlab::LoadSessionLogs(dir / "a/logs"));
    csv.push_back(leaderlab::MetricsToCsv(table.raw) + leaderlab::MetricsToCsv(table.standardized));
  }
  const bool identical = !csv[0].empty() && csv[0] == csv[1] && csv[2] == csv[3] &&
                         csv[0] == csv[2];
  return {wrong.empty() && identical,
          fmt::format("worked examples {}, CSVs ({} bytes) {}",
                      wrong.empty() ? "exact" : "off: " + fmt::format("{}", fmt::join(wrong, " ")),
                      csv[0].size(), identical ? "byte-identical across runs" : "differ")};
}

Outcome ReplayEquivalence() {
  std::mt19937_64 rng(909);
  const std::vector<std::shared_ptr<const Puzzle>> puzzles = {
      std::make_shared<const Puzzle>(leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, 21)),
      std::make_shared<const Puzzle>(leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, 22))};
  const std::array<Role, 5> roles = {Role::kLeader, Role::kFollower1, Role::kFollower2,
                                     Role::kFollower3, Role::kAll};
  int same = 0, finalized = 0, expired = 0;
  const int reps = 1000;
  for (int rep = 0; rep < reps; ++rep) {
    const auto& puzzle = puzzles[rep % 2];
    ManualClock clock(rng() % 100000);
    leaderlab::SessionConfig cfg;
    cfg.session_id = fmt::format("r{}", rep);
    cfg.leader_id = "L";
    cfg.follower_ids = {"a", "b", "c"};
    cfg.time_limit_ms = 2000;
    cfg.grace_ms = 500;
    cfg.rng_seed = rng();
    cfg.clock = clock.AsClock();
    auto s = Session::Create(cfg, puzzle);
    const int steps = static_cast<int>(rng() % 60);
    for (int i = 0; i < steps; ++i) {
      clock.Advance(rng() % 90);
      try {
        switch (rng() % 20) {
          case 0: {
            std::vector<std::vector<int>> profiles;
            for (const auto& dim : puzzle->dimensions) {
              const int k = static_cast<int>(dim.options.size());
              std::vector<int> p(k, 0);
              int left = 100;
              for (int j = 0; j + 1 < k; ++j) {
                p[j] = static_cast<int>(rng() % (left + 1));
                left -= p[j];
              }
              p[k - 1] = left + (rng() % 10 == 0 ? 1 : 0);
              if (rng() % 8 == 0) p.clear();
              profiles.push_back(p);
            }
            s.SubmitAnswers(rng() % 6 ? Role::kLeader : Role::kFollower2, profiles);
            break;
          }
          case 1:
            s.RecordReplyFailure(roles[1 + rng() % 3], s.last_seq(), "timeout");
            break;
          case 2:
            s.Refresh();
            break;
          default:
            s.PostMessage(roles[rng() % 4], roles[rng() % 5], fmt::format("m{} \"q\"\n", i));
        }
      } catch (const leaderlab::Error&) {
      }
    }
    if (rng() % 3 == 0) {
      clock.Advance(2000 + rng() % 1000);
      s.Refresh();
    }
    finalized += s.result().has_value();
    expired += s.status() == leaderlab::SessionStatus::kExpired;

    std::vector<SessionEvent> parsed;
    std::istringstream in(leaderlab::EventsToJsonLines(s.events()));
    for (std::string line; std::getline(in, line);) {
      parsed.push_back(leaderlab::EventFromJson(json::parse(line)));
    }
    const auto replayed = Session::Replay(parsed, puzzle, clock.AsClock());
    same += replayed.SameState(s) && replayed.result() == s.result() &&
            leaderlab::LeaderView(replayed) == leaderlab::LeaderView(s);
  }
  return {same == reps, fmt::format("{}/{} sessions replay identically ({} finalized, {} expired)",
                                    same, reps, finalized, expired)};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "puzzle integrity", PuzzleIntegrity},
      {2, "scoring worked examples", ScoringExamples},
      {3, "estimator oracle equivalence", EstimatorOracle},
      {4, "profile likelihood coverage", ProfileCoverage},
      {5, "end-to-end recovery", EndToEnd},
      {6, "disattenuation", Disattenuation},
      {7, "topology and leakage", TopologyAndLeakage},
      {8, "metrics determinism", MetricsDeterminism},
      {9, "replay equivalence", ReplayEquivalence},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, fmt::format("exception: {}", e.what())};
    }
    failures += !out.pass;
    std::printf("%s [%d] %s: %s\n", out.pass ? "PASS" : "FAIL", c.number, c.name,
                out.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
