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

#include "leaderlab/orchestrator.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include <fmt/format.h>

#include "leaderlab/error.hpp"
#include "leaderlab/rng.hpp"
#include "leaderlab/scoring.hpp"

namespace leaderlab {
namespace fs = std::filesystem;
namespace {

constexpr std::uint64_t kStreamLatents = 1;
constexpr std::uint64_t kStreamOrder = 2;
constexpr std::uint64_t kStreamSchedule = 3;
constexpr std::uint64_t kStreamPuzzles = 4;
constexpr std::uint64_t kStreamSessions = 5;
constexpr std::uint64_t kStreamBootstrap = 6;

std::string Num(double v) { return fmt::format("{}", v); }

double Logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename T>
void Shuffle(std::vector<T>& v, Rng& rng) {
  // Fisher-Yates; std::shuffle is implementation-defined.
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

double Normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

double Uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::string> BankFor(const PuzzleBank& bank, const std::string& test) {
  return test == kConditionAi ? bank.ai : bank.human;
}

// Scripted leader: asks every follower about every dimension; skill moves
// question style, follow-ups, inclusive and positive wording, and how much
// of the pooled evidence ends up in the submitted credences.
class ScriptedLeader {
 public:
  ScriptedLeader(double skill, double question_bias, double integration_weight,
                 std::uint64_t seed)
      : skill_(skill), question_bias_(question_bias), weight_(integration_weight),
        rng_(seed) {}

  void Run(Session& session, ManualClock& clock, const AgentPolicy& policy) {
    const Puzzle& puzzle = session.puzzle();
    if (Uniform(rng_) < Logistic(skill_)) {
      Send(session, clock, policy, Role::kAll,
           "Hi everyone, let's pool our clues and work through this together.");
    }
    for (Role f : kFollowers) {
      for (std::size_t d = 0; d < puzzle.dimensions.size(); ++d) {
        const Dimension& dim = puzzle.dimensions[d];
        const std::string topic = dim.keywords.empty() ? dim.name : dim.keywords.front();
        std::string text;
        if (Uniform(rng_) < Logistic(0.5 + skill_ + question_bias_)) {
          text = fmt::format("What do your notes say about the {}?", topic);
        } else {
          text = fmt::format("Tell me what your notes say about the {}.", topic);
        }
        if (Uniform(rng_) < Logistic(skill_ - 0.5)) text += " Thanks!";
        Send(session, clock, policy, f, text);
        if (Uniform(rng_) < Logistic(skill_ - 1.0)) {
          Send(session, clock, policy, f,
               fmt::format("Great, anything else on the {} that we should know?",
                           topic));
        }
      }
    }
    if (session.status() == SessionStatus::kFinalized) return;
    clock.Advance(5'000);
    session.SubmitAnswers(Role::kLeader, Credences(session));
  }

 private:
  void Send(Session& session, ManualClock& clock, const AgentPolicy& policy,
            Role recipient, const std::string& text) {
    clock.Advance(3'000 + static_cast<std::int64_t>(rng_() % 3'000));
    session.PostMessage(Role::kLeader, recipient, text);
    std::vector<Role> targets;
    if (recipient == Role::kAll) {
      targets.assign(kFollowers.begin(), kFollowers.end());
    } else {
      targets.push_back(recipient);
    }
    for (Role f : targets) {
      std::string reply = FollowerRespond(policy, MakeFollowerContext(session, f));
      clock.Advance(2'000 + static_cast<std::int64_t>(rng_() % 2'000));
      session.PostMessage(f, Role::kLeader, reply);
    }
  }

  // Eliminations the leader can see: its own clues plus every disqualifying
  // clue whose text a follower has sent.
  std::vector<std::vector<int>> Credences(const Session& session) const {
    const Puzzle& puzzle = session.puzzle();
    std::string heard;
    const Transcript transcript = session.transcript();
    for (const SessionEvent* e : transcript.Messages()) {
      if (e->message()->sender != Role::kLeader) heard += e->message()->text + "\n";
    }
    std::vector<std::vector<bool>> alive;
    for (const auto& dim : puzzle.dimensions) {
      alive.emplace_back(dim.options.size(), true);
    }
    auto known = [&](const Clue& c) {
      if (c.is_public() || c.owner == Role::kLeader) return true;
      return heard.find(c.text) != std::string::npos;
    };
    for (const Clue& c : puzzle.clues) {
      if (c.kind == ClueKind::kDisqualifying && known(c)) {
        alive[c.dimension][c.option] = false;
      }
    }
    std::vector<std::vector<int>> out;
    for (std::size_t d = 0; d < alive.size(); ++d) {
      const std::size_t n = alive[d].size();
      if (std::none_of(alive[d].begin(), alive[d].end(), [](bool b) { return b; })) {
        alive[d].assign(n, true);
      }
      auto learned = CredenceProfile::UniformOver(alive[d]);
      auto flat = CredenceProfile::Flat(n);
      std::vector<double> mix(n);
      for (std::size_t k = 0; k < n; ++k) {
        mix[k] = weight_ * learned[k] + (1.0 - weight_) * flat[k];
      }
      auto p = RoundToPercentages(mix);
      out.emplace_back(p.allocations().begin(), p.allocations().end());
    }
    return out;
  }

  double skill_;
  double question_bias_;
  double weight_;
  Rng rng_;
};

double MeanFlatDistance(const Puzzle& puzzle) {
  double sum = 0.0;
  for (const auto& key : puzzle.answer_keys) {
    sum += L1Distance(CredenceProfile::Flat(key.size()), key) / 200.0;
  }
  return sum / puzzle.answer_keys.size();
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::int64_t CsvRows(std::string_view text) {
  std::int64_t lines = std::count(text.begin(), text.end(), '\n');
  return std::max<std::int64_t>(lines - 1, 0);
}

nlohmann::json Finite(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

ExperimentPlan BuildPlan(const std::vector<PlanLeader>& leaders, const PuzzleBank& bank,
                         std::uint64_t seed, int sessions_per_condition) {
  std::vector<std::string> conditions;
  if (!bank.ai.empty()) conditions.push_back(kConditionAi);
  if (!bank.human.empty()) conditions.push_back(kConditionHuman);
  if (conditions.empty()) {
    throw ValidationError("InsufficientPuzzles", "puzzle bank is empty");
  }
  for (const auto& c : conditions) {
    auto ids = BankFor(bank, c);
    std::set<std::string> unique(ids.begin(), ids.end());
    if (static_cast<int>(unique.size()) < sessions_per_condition) {
      throw ValidationError(
          "InsufficientPuzzles",
          fmt::format("condition {} has {} distinct puzzles, need {}", c,
                      unique.size(), sessions_per_condition));
    }
  }
  if (conditions.size() == 2 && bank.ai.size() != bank.human.size()) {
    throw ValidationError("InsufficientPuzzles",
                          "parallel forms must pair one-to-one across conditions");
  }
  ExperimentPlan plan;
  plan.rng_seed = seed;
  plan.sessions_per_condition = sessions_per_condition;
  plan.leaders = leaders;

  std::vector<std::size_t> order(leaders.size());
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng(DeriveSeed(seed, kStreamOrder));
  Shuffle(order, order_rng);
  const std::size_t first_half = leaders.size() / 2;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& cond = plan.leaders[order[k]].condition_order;
    cond = conditions;
    if (conditions.size() == 2 && k >= first_half) std::swap(cond[0], cond[1]);
  }

  for (std::size_t i = 0; i < plan.leaders.size(); ++i) {
    const PlanLeader& leader = plan.leaders[i];
    for (std::size_t c = 0; c < leader.condition_order.size(); ++c) {
      const std::string& test = leader.condition_order[c];
      auto ids = BankFor(bank, test);
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      Rng rng(DeriveSeed(seed, kStreamSchedule + (test == kConditionAi ? 0 : 100), i));
      Shuffle(ids, rng);
      for (int s = 0; s < sessions_per_condition; ++s) {
        plan.sessions.push_back({fmt::format("{}-{}-{}", leader.leader_id, test, s + 1),
                                 leader.leader_id, test, s, ids[s]});
      }
    }
  }
  return plan;
}

void ValidatePlan(const ExperimentPlan& plan) {
  auto fail = [](const std::string& msg) { throw ValidationError("InvalidPlan", msg); };
  if (plan.sessions_per_condition < 1) fail("sessions_per_condition must be >= 1");
  std::map<std::string, const PlanLeader*> leaders;
  std::map<std::string, int> first_counts;
  for (const auto& l : plan.leaders) {
    if (l.leader_id.empty()) fail("empty leader id");
    if (!leaders.emplace(l.leader_id, &l).second) {
      fail(fmt::format("duplicate leader {}", l.leader_id));
    }
    std::set<std::string> conds(l.condition_order.begin(), l.condition_order.end());
    if (conds.size() != l.condition_order.size() || conds.empty()) {
      fail(fmt::format("leader {} has an invalid condition order", l.leader_id));
    }
    for (const auto& c : conds) {
      if (c != kConditionAi && c != kConditionHuman) {
        fail(fmt::format("leader {} has unknown condition {}", l.leader_id, c));
      }
    }
    ++first_counts[l.condition_order.front()];
  }
  std::set<std::string> session_ids;
  std::map<std::pair<std::string, std::string>, std::vector<const PlanSession*>> blocks;
  for (const auto& s : plan.sessions) {
    if (!session_ids.insert(s.session_id).second) {
      fail(fmt::format("duplicate session id {}", s.session_id));
    }
    auto it = leaders.find(s.leader_id);
    if (it == leaders.end()) {
      fail(fmt::format("session {} names unknown leader {}", s.session_id, s.leader_id));
    }
    const auto& order = it->second->condition_order;
    if (std::find(order.begin(), order.end(), s.test) == order.end()) {
      fail(fmt::format("session {} uses condition {} outside the leader's order",
                       s.session_id, s.test));
    }
    blocks[{s.leader_id, s.test}].push_back(&s);
  }
  for (const auto& l : plan.leaders) {
    for (const auto& c : l.condition_order) {
      const auto& block = blocks[{l.leader_id, c}];
      if (static_cast<int>(block.size()) != plan.sessions_per_condition) {
        fail(fmt::format("leader {} has {} sessions in condition {}, expected {}",
                         l.leader_id, block.size(), c, plan.sessions_per_condition));
      }
      std::set<std::string> puzzles;
      std::set<int> slots;
      for (const PlanSession* s : block) {
        if (!puzzles.insert(s->puzzle_id).second) {
          fail(fmt::format("leader {} repeats puzzle {} in condition {}", l.leader_id,
                           s->puzzle_id, c));
        }
        slots.insert(s->slot);
      }
      if (static_cast<int>(slots.size()) != plan.sessions_per_condition ||
          *slots.begin() != 0 || *slots.rbegin() != plan.sessions_per_condition - 1) {
        fail(fmt::format("leader {} has malformed slots in condition {}", l.leader_id, c));
      }
    }
  }
  bool two_conditions = std::any_of(plan.leaders.begin(), plan.leaders.end(),
                                    [](const PlanLeader& l) {
                                      return l.condition_order.size() == 2;
                                    });
  if (two_conditions) {
    int a = first_counts[kConditionAi];
    int h = first_counts[kConditionHuman];
    if (std::abs(a - h) > 1) {
      fail(fmt::format("condition order split {}/{} is unbalanced", a, h));
    }
  }
}

nlohmann::json PlanToJson(const ExperimentPlan& plan) {
  nlohmann::json leaders = nlohmann::json::array();
  for (const auto& l : plan.leaders) {
    leaders.push_back({{"leader_id", l.leader_id},
                       {"covariates", l.covariates},
                       {"condition_order", l.condition_order}});
  }
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& s : plan.sessions) {
    sessions.push_back({{"session_id", s.session_id},
                        {"leader_id", s.leader_id},
                        {"test", s.test},
                        {"slot", s.slot},
                        {"puzzle_id", s.puzzle_id}});
  }
  return {{"rng_seed", plan.rng_seed},
          {"sessions_per_condition", plan.sessions_per_condition},
          {"leaders", leaders},
          {"sessions", sessions}};
}

ExperimentPlan PlanFromJson(const nlohmann::json& doc) {
  try {
    ExperimentPlan plan;
    plan.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    plan.sessions_per_condition = doc.at("sessions_per_condition").get<int>();
    for (const auto& l : doc.at("leaders")) {
      plan.leaders.push_back(
          {l.at("leader_id").get<std::string>(),
           l.value("covariates", std::map<std::string, double>{}),
           l.at("condition_order").get<std::vector<std::string>>()});
    }
    for (const auto& s : doc.at("sessions")) {
      plan.sessions.push_back({s.at("session_id").get<std::string>(),
                               s.at("leader_id").get<std::string>(),
                               s.at("test").get<std::string>(), s.at("slot").get<int>(),
                               s.at("puzzle_id").get<std::string>()});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("InvalidPlan", e.what());
  }
}

GroupScoreModel GroupScoreModel::Fit(std::span<const GroupObservation> history,
                                     std::vector<std::string> leader_covariates) {
  if (history.empty()) throw ValidationError("NoObservations", "no observations");
  std::set<std::string> follower;
  for (const auto& [name, v] : history.front().covariates) {
    if (name.rfind("follower_", 0) == 0) follower.insert(name);
  }
  for (const auto& o : history) {
    for (auto it = follower.begin(); it != follower.end();) {
      it = o.covariates.count(*it) ? std::next(it) : follower.erase(it);
    }
  }
  std::vector<std::string> names = leader_covariates;
  names.insert(names.end(), follower.begin(), follower.end());
  std::vector<std::string> kept;
  std::vector<std::vector<double>> columns;
  for (const auto& name : names) {
    std::vector<double> col;
    for (const auto& o : history) {
      auto it = o.covariates.find(name);
      if (it == o.covariates.end()) {
        throw ValidationError("CovariateMissing",
                              fmt::format("group {} has no value for '{}'", o.group_id,
                                          name),
                              name);
      }
      col.push_back(it->second);
    }
    if (std::any_of(col.begin(), col.end(), [&](double v) { return v != col.front(); })) {
      kept.push_back(name);
      columns.push_back(std::move(col));
    }
  }
  std::vector<std::vector<double>> x(history.size(), std::vector<double>(kept.size()));
  std::vector<double> y;
  for (std::size_t i = 0; i < history.size(); ++i) {
    y.push_back(history[i].score);
    for (std::size_t j = 0; j < kept.size(); ++j) x[i][j] = columns[j][i];
  }
  OlsFit ols = FitOls(x, y, kept);
  GroupScoreModel model;
  model.fitted_ = true;
  model.intercept_ = ols.coef[0];
  for (std::size_t j = 0; j < kept.size(); ++j) model.coef_[kept[j]] = ols.coef[j + 1];
  return model;
}

double GroupScoreModel::Predict(const std::map<std::string, double>& covariates) const {
  if (!fitted_) throw ValidationError("ModelNotFitted", "group score model is not fitted");
  double y = intercept_;
  for (const auto& [name, b] : coef_) {
    auto it = covariates.find(name);
    if (it != covariates.end()) y += b * it->second;
  }
  return y;
}

void SyntheticConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("InvalidConfig", msg); };
  if (n_leaders < 2) fail("n_leaders must be >= 2");
  if (groups_per_leader < 2) fail("groups_per_leader must be >= 2");
  if (!(sigma_alpha >= 0.0) || !std::isfinite(sigma_alpha)) fail("sigma_alpha must be >= 0");
  if (!(sigma_e >= 0.0) || !std::isfinite(sigma_e)) fail("sigma_e must be >= 0");
  if (!std::isfinite(task_skill_effect)) fail("task_skill_effect must be finite");
  if (!(cross_condition_correlation >= -1.0 && cross_condition_correlation <= 1.0)) {
    fail("cross_condition_correlation must lie in [-1, 1]");
  }
  if (conditions.empty() || conditions.size() > 2) fail("conditions must list 1 or 2 tests");
  std::set<std::string> uniq(conditions.begin(), conditions.end());
  if (uniq.size() != conditions.size()) fail("conditions must be distinct");
  for (const auto& c : conditions) {
    if (c != kConditionAi && c != kConditionHuman) {
      fail(fmt::format("unknown condition '{}'", c));
    }
  }
  if (workers < 1) fail("workers must be >= 1");
  if (!(integration_slope > 0.0) || !std::isfinite(integration_slope)) {
    fail("integration_slope must be positive");
  }
  puzzle_spec.Validate();
}

SyntheticConfig SyntheticConfigFromJson(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("InvalidConfig", "config must be an object");
  static const std::set<std::string> known = {
      "n_leaders", "groups_per_leader", "sigma_alpha", "sigma_e", "task_skill_effect",
      "cross_condition_correlation", "conditions", "seed", "follower_policy", "workers",
      "write_logs", "integration_slope", "puzzle_spec"};
  for (const auto& [k, v] : doc.items()) {
    if (!known.count(k)) {
      throw ValidationError("InvalidConfig", fmt::format("unknown key '{}'", k), k);
    }
  }
  SyntheticConfig c;
  try {
    c.n_leaders = doc.value("n_leaders", c.n_leaders);
    c.groups_per_leader = doc.value("groups_per_leader", c.groups_per_leader);
    c.sigma_alpha = doc.value("sigma_alpha", c.sigma_alpha);
    c.sigma_e = doc.value("sigma_e", c.sigma_e);
    c.task_skill_effect = doc.value("task_skill_effect", c.task_skill_effect);
    c.cross_condition_correlation =
        doc.value("cross_condition_correlation", c.cross_condition_correlation);
    c.conditions = doc.value("conditions", c.conditions);
    c.seed = doc.value("seed", c.seed);
    c.workers = doc.value("workers", c.workers);
    c.write_logs = doc.value("write_logs", c.write_logs);
    c.integration_slope = doc.value("integration_slope", c.integration_slope);
    if (doc.contains("puzzle_spec")) c.puzzle_spec = SpecFromJson(doc.at("puzzle_spec"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("InvalidConfig", e.what());
  }
  if (doc.contains("follower_policy")) c.follower_policy = ParsePolicy(doc.at("follower_policy"));
  c.Validate();
  return c;
}

nlohmann::json SyntheticConfigToJson(const SyntheticConfig& c) {
  return {{"n_leaders", c.n_leaders},
          {"groups_per_leader", c.groups_per_leader},
          {"sigma_alpha", c.sigma_alpha},
          {"sigma_e", c.sigma_e},
          {"task_skill_effect", c.task_skill_effect},
          {"cross_condition_correlation", c.cross_condition_correlation},
          {"conditions", c.conditions},
          {"seed", c.seed},
          {"follower_policy", PolicyName(c.follower_policy)},
          {"workers", c.workers},
          {"write_logs", c.write_logs},
          {"integration_slope", c.integration_slope},
          {"puzzle_spec", SpecToJson(c.puzzle_spec)}};
}

double ScoreToSkillScale(double score, const Puzzle& puzzle, double slope) {
  const double c = MeanFlatDistance(puzzle);
  if (!(c > 0.0)) {
    throw ValidationError("DegenerateData", "answer keys equal the flat profile");
  }
  return (score - 1.0 + 0.5 * c) / (slope * c);
}

SyntheticDataset RunSyntheticExperiment(const SyntheticConfig& config) {
  config.Validate();
  SyntheticDataset ds;
  ds.config = config;

  // Two spare puzzles beyond the per-leader need.
  const int bank_size = config.groups_per_leader + 2;
  PuzzleBank bank;
  std::map<std::string, std::shared_ptr<const Puzzle>> by_id;
  for (int k = 0; k < bank_size; ++k) {
    auto ai = std::make_shared<const Puzzle>(
        GeneratePuzzle(config.puzzle_spec, DeriveSeed(config.seed, kStreamPuzzles, k)));
    auto human = std::make_shared<const Puzzle>(
        MakeParallelForm(*ai, DeriveSeed(config.seed, kStreamPuzzles + 1, k)));
    for (const auto& c : config.conditions) {
      auto p = c == kConditionAi ? ai : human;
      (c == kConditionAi ? bank.ai : bank.human).push_back(p->id);
      by_id[p->id] = p;
      ds.puzzles.push_back(p);
    }
  }

  const int width = static_cast<int>(std::to_string(config.n_leaders).size());
  Rng latent_rng(DeriveSeed(config.seed, kStreamLatents));
  const double rho = config.cross_condition_correlation;
  std::vector<PlanLeader> plan_leaders;
  for (int i = 0; i < config.n_leaders; ++i) {
    SimulatedLeader l;
    l.leader_id = fmt::format("L{:0{}}", i + 1, width);
    const double task_skill = Normal(latent_rng);
    const double fluid_iq = 0.5 * task_skill + std::sqrt(0.75) * Normal(latent_rng);
    const double typing = Normal(latent_rng);
    const double z1 = Normal(latent_rng);
    const double z2 = Normal(latent_rng);
    l.covariates = {{"task_skill", task_skill}, {"fluid_iq", fluid_iq}, {"typing", typing}};
    l.latent_alpha[kConditionAi] = config.sigma_alpha * z1;
    l.latent_alpha[kConditionHuman] =
        config.sigma_alpha * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
    l.question_bias = 0.5 * Normal(latent_rng);
    plan_leaders.push_back({l.leader_id, l.covariates, {}});
    ds.leaders.push_back(std::move(l));
  }
  ds.plan = BuildPlan(plan_leaders, bank, config.seed, config.groups_per_leader);
  ValidatePlan(ds.plan);

  std::map<std::string, std::size_t> leader_index;
  for (std::size_t i = 0; i < ds.leaders.size(); ++i) leader_index[ds.leaders[i].leader_id] = i;

  const std::size_t n_sessions = ds.plan.sessions.size();
  ds.observations.resize(n_sessions);
  ds.sessions.resize(n_sessions);
  std::vector<std::exception_ptr> errors(n_sessions);
  std::atomic<std::size_t> next{0};

  auto run_one = [&](std::size_t k) {
    const PlanSession& ps = ds.plan.sessions[k];
    const SimulatedLeader& leader = ds.leaders[leader_index.at(ps.leader_id)];
    Rng rng(DeriveSeed(config.seed, kStreamSessions, k));
    const double noise = config.sigma_e * Normal(rng);
    const double skill = config.task_skill_effect * leader.covariates.at("task_skill") +
                         leader.latent_alpha.at(ps.test) + noise;
    const double weight = std::clamp(0.5 + config.integration_slope * skill, 0.0, 1.0);

    ManualClock clock(0);
    SessionConfig sc;
    sc.session_id = ps.session_id;
    sc.puzzle_id = ps.puzzle_id;
    sc.leader_id = ps.leader_id;
    sc.test = ps.test;
    if (ps.test == kConditionAi) {
      sc.follower_ids = {"agent-1", "agent-2", "agent-3"};
    } else {
      for (int f = 1; f <= 3; ++f) {
        sc.follower_ids.push_back(fmt::format("{}-{}-f{}", ps.leader_id, ps.slot + 1, f));
      }
    }
    sc.clock = clock.AsClock();
    sc.rng_seed = rng();
    const auto& puzzle = by_id.at(ps.puzzle_id);
    Session session = Session::Create(sc, puzzle);
    ScriptedLeader scripted(skill, leader.question_bias, weight, rng());
    scripted.Run(session, clock, config.follower_policy);
    const auto result = session.result();
    if (!result) throw ValidationError("SessionIncomplete", ps.session_id);

    GroupObservation obs;
    obs.group_id = ps.session_id;
    obs.leader_id = ps.leader_id;
    obs.test = ps.test;
    obs.score = ScoreToSkillScale(result->score, *puzzle, config.integration_slope);
    obs.covariates = leader.covariates;
    ds.observations[k] = std::move(obs);
    ds.sessions[k] = {ps.session_id, session.events()};
  };

  auto worker = [&] {
    for (std::size_t k = next.fetch_add(1); k < n_sessions; k = next.fetch_add(1)) {
      try {
        run_one(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min<int>(config.workers, static_cast<int>(n_sessions));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return ds;
}

AnalysisReport Analyze(std::span<const GroupObservation> obs,
                       const std::vector<std::string>& covariates, FitMethod method,
                       int bootstrap_reps, std::uint64_t seed) {
  AnalysisReport report;
  report.covariates = covariates;
  report.method = method;
  std::map<std::string, std::vector<std::vector<double>>> raw_groups, resid_groups;
  std::map<std::string, std::vector<std::string>> leader_ids;
  for (const auto& test : TestsIn(obs)) {
    auto sub = FilterTest(obs, test);
    TestAnalysis ta;
    ta.test = test;
    ta.total_contribution = TotalContribution(sub);
    auto resid = Residualize(sub, covariates);
    ta.effects = LeaderEffects(sub, resid);
    auto groups = GroupByLeader(sub, resid);
    ta.fit = FitVarianceComponents(groups, method);
    if (!ta.fit.within_degenerate) ta.fit.ci_95 = ProfileLikelihoodCi(ta.fit, groups);
    ta.reliability = Reliability(ta.fit, ta.fit.harmonic_m);
    ta.fixed_effects_r2 = FixedEffectsR2(sub);
    std::vector<double> scores;
    for (const auto& o : sub) scores.push_back(o.score);
    raw_groups[test] = GroupByLeader(sub, scores);
    resid_groups[test] = std::move(groups);
    for (const auto& e : ta.effects) leader_ids[test].push_back(e.leader_id);
    report.tests.push_back(std::move(ta));
  }
  if (raw_groups.count(kConditionAi) && raw_groups.count(kConditionHuman)) {
    // Pair leaders present in both conditions.
    const auto& ids_ai = leader_ids[kConditionAi];
    const auto& ids_h = leader_ids[kConditionHuman];
    std::map<std::string, std::size_t> pos_h;
    for (std::size_t i = 0; i < ids_h.size(); ++i) pos_h[ids_h[i]] = i;
    std::vector<std::vector<double>> ra, rh, ea, eh;
    for (std::size_t i = 0; i < ids_ai.size(); ++i) {
      auto it = pos_h.find(ids_ai[i]);
      if (it == pos_h.end()) continue;
      ra.push_back(raw_groups[kConditionAi][i]);
      rh.push_back(raw_groups[kConditionHuman][it->second]);
      ea.push_back(resid_groups[kConditionAi][i]);
      eh.push_back(resid_groups[kConditionHuman][it->second]);
    }
    if (ra.size() >= 3) {
      report.total_correlation = DisattenuatedCorrelation(
          ra, rh, method, bootstrap_reps, DeriveSeed(seed, kStreamBootstrap, 0));
      report.alpha_correlation = DisattenuatedCorrelation(
          ea, eh, method, bootstrap_reps, DeriveSeed(seed, kStreamBootstrap, 1));
    }
  }
  return report;
}

nlohmann::json AnalysisToJson(const AnalysisReport& report) {
  nlohmann::json tests = nlohmann::json::object();
  for (const auto& t : report.tests) {
    tests[t.test] = {{"fit", FitToJson(t.fit)},
                     {"reliability", Finite(t.reliability)},
                     {"fixed_effects_r2", t.fixed_effects_r2},
                     {"n_leaders", t.effects.size()}};
  }
  nlohmann::json out = {{"method", MethodName(report.method)},
                        {"covariates", report.covariates},
                        {"tests", tests}};
  out["total_contribution_correlation"] =
      report.total_correlation ? CorrelationToJson(*report.total_correlation)
                               : nlohmann::json(nullptr);
  out["alpha_correlation"] = report.alpha_correlation
                                 ? CorrelationToJson(*report.alpha_correlation)
                                 : nlohmann::json(nullptr);
  return out;
}

std::string EffectsToCsv(const AnalysisReport& report) {
  std::string out = "test,leader_id,groups,total_contribution,alpha\n";
  for (const auto& t : report.tests) {
    for (std::size_t i = 0; i < t.effects.size(); ++i) {
      out += fmt::format("{},{},{},{},{}\n", t.test, t.effects[i].leader_id,
                         t.effects[i].groups, Num(t.total_contribution[i].value),
                         Num(t.effects[i].value));
    }
  }
  return out;
}

std::string Sha256Hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kInternal, "HashFailed", "sha256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

nlohmann::json ManifestToJson(const std::vector<ManifestEntry>& entries) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json f = {{"path", e.path}, {"bytes", e.bytes}, {"sha256", e.sha256}};
    if (e.rows >= 0) f["rows"] = e.rows;
    files.push_back(f);
  }
  return {{"format", "leaderlab-manifest/1"}, {"files", files}};
}

void WriteFileAtomic(const std::string& path, std::string_view text) {
  const fs::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError(fmt::format("write to {} failed", tmp.string()));
  }
  fs::rename(tmp, target, ec);
  if (ec) throw IoError(fmt::format("cannot rename {}: {}", tmp.string(), ec.message()));
}

std::vector<ManifestEntry> ExportResults(const SyntheticDataset& ds,
                                         const std::string& directory,
                                         int bootstrap_reps) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec || !fs::is_directory(directory)) {
    throw IoError(fmt::format("cannot create {}", directory));
  }
  std::map<std::string, std::string> files;  // relative path -> content

  files["observations.csv"] = ObservationsToCsv(ds.observations);

  std::string truth = "leader_id,test,latent_alpha,task_skill,fluid_iq,typing\n";
  for (const auto& l : ds.leaders) {
    for (const auto& c : ds.config.conditions) {
      truth += fmt::format("{},{},{},{},{},{}\n", l.leader_id, c,
                           Num(l.latent_alpha.at(c)), Num(l.covariates.at("task_skill")),
                           Num(l.covariates.at("fluid_iq")),
                           Num(l.covariates.at("typing")));
    }
  }
  files["truth.csv"] = truth;

  nlohmann::json fit = {{"config", SyntheticConfigToJson(ds.config)}};
  if (ds.observations.empty()) {
    AnalysisReport empty;
    empty.covariates = {"task_skill"};
    files["effects.csv"] = EffectsToCsv(empty);
    fit["analysis"] = AnalysisToJson(empty);
  } else {
    AnalysisReport report = Analyze(ds.observations, {"task_skill"}, FitMethod::kREML,
                                    bootstrap_reps, ds.config.seed);
    files["effects.csv"] = EffectsToCsv(report);
    fit["analysis"] = AnalysisToJson(report);
  }
  files["fit.json"] = fit.dump(2) + "\n";

  std::map<std::pair<std::string, std::string>, LeaderSessions> grouped;
  for (const auto& rec : ds.sessions) {
    if (rec.events.empty()) continue;
    const auto& created = std::get<events::Created>(rec.events.front().body);
    auto& ls = grouped[{created.test, created.leader_id}];
    ls.leader_id = created.leader_id;
    ls.test = created.test;
    ls.transcripts.emplace_back(rec.events);
  }
  std::vector<LeaderSessions> sessions;
  for (auto& [key, ls] : grouped) sessions.push_back(std::move(ls));
  MetricsTable metrics;
  if (!sessions.empty()) metrics = ComputeMetricsTable(sessions);
  files["metrics.csv"] = MetricsToCsv(metrics.raw);
  files["metrics_z.csv"] = MetricsToCsv(metrics.standardized);

  if (ds.config.write_logs) {
    for (const auto& rec : ds.sessions) {
      files["logs/" + rec.session_id + ".jsonl"] = EventsToJsonLines(rec.events);
    }
  }

  std::vector<ManifestEntry> entries;
  for (const auto& [rel, content] : files) {
    WriteFileAtomic((fs::path(directory) / rel).string(), content);
    ManifestEntry e;
    e.path = rel;
    e.bytes = content.size();
    e.sha256 = Sha256Hex(content);
    if (rel.size() > 4 && rel.substr(rel.size() - 4) == ".csv") e.rows = CsvRows(content);
    entries.push_back(std::move(e));
  }
  WriteFileAtomic((fs::path(directory) / "manifest.json").string(),
                  ManifestToJson(entries).dump(2) + "\n");
  return entries;
}

std::vector<Puzzle> LoadPuzzleDir(const std::string& directory) {
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) {
    throw IoError(fmt::format("{} is not a directory", directory));
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Puzzle> out;
  std::set<std::string> ids;
  for (const auto& p : paths) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(ReadFile(p));
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("InvalidPuzzle",
                            fmt::format("{}: {}", p.string(), e.what()));
    }
    Puzzle puzzle = PuzzleFromJson(doc);
    if (!ids.insert(puzzle.id).second) {
      throw ValidationError("InvalidPuzzle", fmt::format("duplicate puzzle id {}", puzzle.id));
    }
    out.push_back(std::move(puzzle));
  }
  std::sort(out.begin(), out.end(),
            [](const Puzzle& a, const Puzzle& b) { return a.id < b.id; });
  return out;
}

std::vector<std::string> WritePuzzleBank(const PuzzleSpec& spec, std::uint64_t seed,
                                         int count, bool parallel_forms,
                                         const std::string& directory) {
  if (count < 1) throw ValidationError("InvalidSpec", "count must be >= 1");
  spec.Validate();
  std::vector<std::string> written;
  for (int k = 0; k < count; ++k) {
    Puzzle p = GeneratePuzzle(spec, seed + static_cast<std::uint64_t>(k));
    auto path = (fs::path(directory) / (p.id + ".json")).string();
    WriteFileAtomic(path, PuzzleToJson(p).dump(2) + "\n");
    written.push_back(path);
    if (parallel_forms) {
      Puzzle pf = MakeParallelForm(p, DeriveSeed(seed, k, 1));
      auto pf_path = (fs::path(directory) / (pf.id + ".json")).string();
      WriteFileAtomic(pf_path, PuzzleToJson(pf).dump(2) + "\n");
      written.push_back(pf_path);
    }
  }
  return written;
}

}  // namespace leaderlab
