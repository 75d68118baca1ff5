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

#ifndef LEADERLAB_ESTIMATOR_HPP_
#define LEADERLAB_ESTIMATOR_HPP_

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaderlab/metrics.hpp"

namespace leaderlab {

// One group's standardized score together with the covariates of the
// leader who led it.
struct GroupObservation {
  std::string group_id;
  std::string leader_id;
  std::string test = "AI";  // "AI" or "Human"
  double score = 0.0;
  std::map<std::string, double> covariates;
};

// Observations of one test, in input order.
std::vector<GroupObservation> FilterTest(std::span<const GroupObservation> obs,
                                         const std::string& test);
std::vector<std::string> TestsIn(std::span<const GroupObservation> obs);

// Reads group_id,leader_id,test,score[,covariate...] with a header row.
// Throws InvalidCsv.
std::vector<GroupObservation> ReadObservationsCsv(const std::string& path);
std::vector<GroupObservation> ParseObservationsCsv(const std::string& text);
std::string ObservationsToCsv(std::span<const GroupObservation> obs);

struct LeaderValue {
  std::string leader_id;
  std::string test;
  double value = 0.0;
  int groups = 0;
};

// Mean group score per (test, leader), sorted by (test, leader_id).
// Throws NoObservations.
std::vector<LeaderValue> TotalContribution(std::span<const GroupObservation> obs);

// OLS residuals of score on an intercept plus the selected leader
// covariates. Covariates that are constant across the sample are dropped
// (they are absorbed by the intercept). Throws CovariateMissing,
// RankDeficient.
std::vector<double> Residualize(std::span<const GroupObservation> obs,
                                const std::vector<std::string>& covariates);

// Per-leader mean residual, same ordering as TotalContribution.
std::vector<LeaderValue> LeaderEffects(std::span<const GroupObservation> obs,
                                       std::span<const double> residuals);

// Values grouped by leader (ordering as LeaderEffects).
std::vector<std::vector<double>> GroupByLeader(
    std::span<const GroupObservation> obs, std::span<const double> values);

enum class FitMethod { kML, kREML };
std::string MethodName(FitMethod method);
// "ml" | "reml" (case-insensitive). Throws InvalidMethod.
FitMethod ParseMethod(const std::string& name);

struct ProfileInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  bool lower_clamped = false;
  // False when the upper root could not be bracketed; upper is +inf.
  bool upper_bounded = true;
};

struct VarianceFit {
  double sigma_alpha = 0.0;
  double sigma_e = 0.0;
  double mu = 0.0;  // fixed intercept (GLS)
  double log_likelihood = 0.0;
  FitMethod method = FitMethod::kREML;
  bool boundary = false;           // sigma_alpha estimated at 0
  bool within_degenerate = false;  // no within-leader variation
  bool converged = true;
  int evaluations = 0;
  std::size_t n_leaders = 0;
  std::size_t n_obs = 0;
  double harmonic_m = 0.0;  // harmonic mean of groups per leader
  std::optional<ProfileInterval> ci_95;
};

// One-way random-effects fit of y_gi = mu + alpha_i + e_gi with
// alpha_i ~ N(0, sigma_alpha^2) and e_gi ~ N(0, sigma_e^2). Throws
// DegenerateData, NonConvergence.
VarianceFit FitVarianceComponents(const std::vector<std::vector<double>>& groups,
                                  FitMethod method = FitMethod::kREML);

// Log-likelihood (restricted for REML) at the given variances with mu at its
// GLS value.
double VarianceLogLikelihood(const std::vector<std::vector<double>>& groups,
                             double sigma_alpha2, double sigma_e2,
                             FitMethod method);

// Profile log-likelihood of sigma_alpha, maximized over sigma_e (and mu).
double ProfileLogLikelihood(const std::vector<std::vector<double>>& groups,
                            double sigma_alpha, FitMethod method);

// Likelihood-ratio interval {s : 2 (l_hat - l_p(s)) <= chi2_1(level)}.
ProfileInterval ProfileLikelihoodCi(const VarianceFit& fit,
                                    const std::vector<std::vector<double>>& groups,
                                    double level = 0.95);

// sigma_alpha^2 / (sigma_alpha^2 + sigma_e^2 / m).
double Reliability(const VarianceFit& fit, double groups_per_leader);
double Reliability(double sigma_alpha, double sigma_e, double groups_per_leader);
double HarmonicMean(std::span<const double> values);

struct CorrelationReport {
  double raw_r = 0.0;
  double disattenuated_rho = 0.0;
  bool clamped = false;
  double rel_x = 1.0;
  double rel_y = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int bootstrap_reps = 0;
  int bootstrap_failures = 0;
  std::size_t n = 0;
  double p_value = 1.0;
};

// Spearman correction with fixed reliabilities; the bootstrap resamples
// leaders and keeps rel_x, rel_y fixed. Throws MismatchedPairs,
// ZeroReliability.
CorrelationReport DisattenuatedCorrelation(std::span<const double> x,
                                           std::span<const double> y,
                                           double rel_x, double rel_y,
                                           int bootstrap_reps = 2000,
                                           std::uint64_t seed = 0);

// Same, starting from each leader's group values in both conditions: the
// leader-level values are group means and the reliabilities come from a
// variance-component fit per condition, refitted inside every bootstrap
// resample.
CorrelationReport DisattenuatedCorrelation(
    const std::vector<std::vector<double>>& x_groups,
    const std::vector<std::vector<double>>& y_groups, FitMethod method,
    int bootstrap_reps = 2000, std::uint64_t seed = 0);

// R^2 of score regressed on leader indicator dummies.
double FixedEffectsR2(std::span<const GroupObservation> obs);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

double PearsonR(std::span<const double> x, std::span<const double> y);
// Pearson r with a two-sided t-test. Throws TooFewValues, ZeroVariance,
// MismatchedPairs.
Correlation Correlate(std::span<const double> x, std::span<const double> y);

// self - actual, both percentiles in [0, 100]. Throws OutOfRange.
double Overplacement(double self_percentile, double actual_percentile);

struct OlsFit {
  std::vector<std::string> names;  // "intercept" first
  std::vector<double> coef;
  std::vector<double> robust_se;  // HC1
  std::vector<double> t;
  std::vector<double> p_value;
  double r2 = 0.0;
  std::size_t n = 0;
  std::vector<double> residuals;
};

// Ordinary least squares with intercept and HC1 standard errors.
// x is row-major: x[i] holds the predictors for observation i. Throws
// RankDeficient.
OlsFit FitOls(const std::vector<std::vector<double>>& x, std::span<const double> y,
              const std::vector<std::string>& names);

struct RegressionModel {
  std::string test;
  std::vector<std::string> predictors;
  OlsFit fit;
};

// Twelve models: for each metric a univariate model per test, then the
// joint five-predictor model per test. The outcome alpha is standardized
// within test before fitting. Rows are joined on (leader_id, test).
std::vector<RegressionModel> MetricRegressions(
    const std::vector<LeaderValue>& alphas, const std::vector<MetricsRow>& metrics);

nlohmann::json FitToJson(const VarianceFit& fit);
nlohmann::json CorrelationToJson(const CorrelationReport& report);
nlohmann::json RegressionsToJson(const std::vector<RegressionModel>& models);

}  // namespace leaderlab

#endif  // LEADERLAB_ESTIMATOR_HPP_
