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

#ifndef LEADERLAB_ORCHESTRATOR_HPP_
#define LEADERLAB_ORCHESTRATOR_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaderlab/estimator.hpp"
#include "leaderlab/followers.hpp"
#include "leaderlab/metrics.hpp"
#include "leaderlab/puzzle.hpp"
#include "leaderlab/session.hpp"

namespace leaderlab {

inline constexpr int kSessionsPerCondition = 6;
inline constexpr const char* kConditionAi = "AI";
inline constexpr const char* kConditionHuman = "Human";

// Puzzle ids per condition. human[k] is the parallel form of ai[k].
struct PuzzleBank {
  std::vector<std::string> ai;
  std::vector<std::string> human;
};

struct PlanLeader {
  std::string leader_id;
  std::map<std::string, double> covariates;
  std::vector<std::string> condition_order;  // e.g. {"AI", "Human"}
};

struct PlanSession {
  std::string session_id;
  std::string leader_id;
  std::string test;
  int slot = 0;  // 0-based position within the leader's condition block
  std::string puzzle_id;
};

struct ExperimentPlan {
  std::vector<PlanLeader> leaders;
  std::vector<PlanSession> sessions;
  std::uint64_t rng_seed = 0;
  int sessions_per_condition = kSessionsPerCondition;
};

// Seeded condition-order split (sizes differ by at most one) and per-leader
// puzzle schedules drawn without repetition. Throws InsufficientPuzzles.
ExperimentPlan BuildPlan(const std::vector<PlanLeader>& leaders,
                         const PuzzleBank& bank, std::uint64_t seed,
                         int sessions_per_condition = kSessionsPerCondition);

// Throws InvalidPlan naming the first violated invariant.
void ValidatePlan(const ExperimentPlan& plan);

nlohmann::json PlanToJson(const ExperimentPlan& plan);
ExperimentPlan PlanFromJson(const nlohmann::json& doc);

// Linear prediction of group score from leader (and follower) skills.
class GroupScoreModel {
 public:
  // Leader covariates default to task_skill and fluid_iq; any follower_*
  // covariate present on every observation is added. Throws RankDeficient,
  // CovariateMissing.
  static GroupScoreModel Fit(std::span<const GroupObservation> history,
                             std::vector<std::string> leader_covariates = {
                                 "task_skill", "fluid_iq"});

  GroupScoreModel() = default;
  bool fitted() const { return fitted_; }
  // Covariates absent from `covariates` count as 0. Throws ModelNotFitted.
  double Predict(const std::map<std::string, double>& covariates) const;
  const std::map<std::string, double>& coefficients() const { return coef_; }
  double intercept() const { return intercept_; }

 private:
  bool fitted_ = false;
  double intercept_ = 0.0;
  std::map<std::string, double> coef_;
};

struct SyntheticConfig {
  int n_leaders = 250;
  int groups_per_leader = kSessionsPerCondition;
  double sigma_alpha = 0.65;
  double sigma_e = 0.65;
  // Loading of the standardized task_skill covariate on the group score.
  double task_skill_effect = 0.1;
  double cross_condition_correlation = 0.8;
  std::vector<std::string> conditions = {kConditionAi, kConditionHuman};
  std::uint64_t seed = 0;
  AgentPolicy follower_policy = OraclePolicy{};
  int workers = 1;
  bool write_logs = true;
  // Change in clue-integration weight per unit of session skill.
  double integration_slope = 0.1;
  PuzzleSpec puzzle_spec;

  // Throws InvalidConfig.
  void Validate() const;
};

// Unknown keys are rejected. Throws InvalidConfig, InvalidPolicy.
SyntheticConfig SyntheticConfigFromJson(const nlohmann::json& doc);
nlohmann::json SyntheticConfigToJson(const SyntheticConfig& config);

struct SimulatedLeader {
  std::string leader_id;
  std::map<std::string, double> covariates;
  // Latent contribution per condition.
  std::map<std::string, double> latent_alpha;
  double question_bias = 0.0;
};

struct SessionRecord {
  std::string session_id;
  std::vector<SessionEvent> events;
};

struct SyntheticDataset {
  SyntheticConfig config;
  ExperimentPlan plan;
  std::vector<std::shared_ptr<const Puzzle>> puzzles;
  std::vector<SimulatedLeader> leaders;
  std::vector<GroupObservation> observations;  // plan order
  std::vector<SessionRecord> sessions;         // plan order
};

// Runs every planned session through the session engine with scripted
// leaders and the configured follower policy.
SyntheticDataset RunSyntheticExperiment(const SyntheticConfig& config);

// Group score on the skill scale recovered from a finalized score.
double ScoreToSkillScale(double score, const Puzzle& puzzle, double slope);

struct TestAnalysis {
  std::string test;
  std::vector<LeaderValue> total_contribution;
  std::vector<LeaderValue> effects;
  VarianceFit fit;
  double reliability = 0.0;
  double fixed_effects_r2 = 0.0;
};

struct AnalysisReport {
  std::vector<std::string> covariates;
  FitMethod method = FitMethod::kREML;
  std::vector<TestAnalysis> tests;
  // Between-condition correlations when both conditions are present.
  std::optional<CorrelationReport> total_correlation;
  std::optional<CorrelationReport> alpha_correlation;
};

// Residualization, leader effects and variance components per test, plus
// the cross-condition correlations.
AnalysisReport Analyze(std::span<const GroupObservation> obs,
                       const std::vector<std::string>& covariates,
                       FitMethod method = FitMethod::kREML,
                       int bootstrap_reps = 2000, std::uint64_t seed = 0);

nlohmann::json AnalysisToJson(const AnalysisReport& report);
std::string EffectsToCsv(const AnalysisReport& report);

struct ManifestEntry {
  std::string path;  // relative, '/'-separated
  std::uint64_t bytes = 0;
  std::string sha256;
  std::int64_t rows = -1;  // data rows for CSV files
};

std::string Sha256Hex(std::string_view data);
nlohmann::json ManifestToJson(const std::vector<ManifestEntry>& entries);

// Writes observations.csv, effects.csv, fit.json, metrics.csv,
// metrics_z.csv, truth.csv, logs/ and manifest.json. Throws IoError.
std::vector<ManifestEntry> ExportResults(const SyntheticDataset& dataset,
                                         const std::string& directory,
                                         int bootstrap_reps = 2000);

// Puzzle files (*.json) in a directory, sorted by id. Throws IoError and
// the puzzle parse errors.
std::vector<Puzzle> LoadPuzzleDir(const std::string& directory);
// k-th puzzle uses seed + k; parallel forms get id suffix "-pf...". Returns
// the written file paths.
std::vector<std::string> WritePuzzleBank(const PuzzleSpec& spec, std::uint64_t seed,
                                         int count, bool parallel_forms,
                                         const std::string& directory);

// Writes text to path atomically (temp file + rename). Throws IoError.
void WriteFileAtomic(const std::string& path, std::string_view text);

}  // namespace leaderlab

#endif  // LEADERLAB_ORCHESTRATOR_HPP_
