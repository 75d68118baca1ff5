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

#include "leaderlab/estimator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <utility>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "leaderlab/error.hpp"
#include "leaderlab/rng.hpp"
#include "leaderlab/scoring.hpp"

namespace leaderlab {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr int kBrentBits = 40;

std::string Trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(Trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ValidationError("InvalidCsv", "unterminated quote");
  out.push_back(Trim(cur));
  return out;
}

double ParseNumber(const std::string& cell, std::size_t line_no) {
  try {
    std::size_t used = 0;
    double v = std::stod(cell, &used);
    if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("InvalidCsv",
                          fmt::format("line {}: '{}' is not a finite number",
                                      line_no, cell));
  }
}

std::string Num(double v) { return fmt::format("{}", v); }

using LeaderKey = std::pair<std::string, std::string>;  // (test, leader)

std::map<LeaderKey, std::vector<std::size_t>> IndexByLeader(
    std::span<const GroupObservation> obs) {
  std::map<LeaderKey, std::vector<std::size_t>> index;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    index[{obs[k].test, obs[k].leader_id}].push_back(k);
  }
  return index;
}

// Sufficient statistics of the one-way model.
struct Summary {
  std::vector<double> m;
  std::vector<double> mean;
  double ssw = 0.0;
  double n_obs = 0.0;
  std::size_t n_leaders = 0;
};

Summary Summarize(const std::vector<std::vector<double>>& groups) {
  Summary s;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    double mean = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
    double ss = 0.0;
    for (double v : g) {
      if (!std::isfinite(v)) {
        throw ValidationError("NonFiniteValue", "observations must be finite");
      }
      ss += (v - mean) * (v - mean);
    }
    s.m.push_back(static_cast<double>(g.size()));
    s.mean.push_back(mean);
    s.ssw += ss;
    s.n_obs += g.size();
  }
  s.n_leaders = s.m.size();
  return s;
}

// Weighted statistics for variance ratio lambda = sigma_alpha^2 / sigma^2.
struct RatioTerms {
  double mu = 0.0;
  double q = 0.0;        // SSW + sum w~ (ybar - mu)^2
  double log_det = 0.0;  // sum log(1 + m lambda)
  double sum_w = 0.0;    // sum m / (1 + m lambda)
};

RatioTerms Terms(const Summary& s, double lambda) {
  RatioTerms t;
  double sw = 0.0, swy = 0.0;
  for (std::size_t i = 0; i < s.n_leaders; ++i) {
    double w = s.m[i] / (1.0 + s.m[i] * lambda);
    sw += w;
    swy += w * s.mean[i];
    t.log_det += std::log1p(s.m[i] * lambda);
  }
  t.mu = swy / sw;
  t.sum_w = sw;
  double q = s.ssw;
  for (std::size_t i = 0; i < s.n_leaders; ++i) {
    double w = s.m[i] / (1.0 + s.m[i] * lambda);
    q += w * (s.mean[i] - t.mu) * (s.mean[i] - t.mu);
  }
  t.q = q;
  return t;
}

double EffectiveN(const Summary& s, FitMethod method) {
  return method == FitMethod::kREML ? s.n_obs - 1.0 : s.n_obs;
}

// Log-likelihood maximized over sigma^2 for a fixed ratio lambda.
double RatioProfile(const Summary& s, double lambda, FitMethod method,
                    double* sigma2_out = nullptr) {
  RatioTerms t = Terms(s, lambda);
  double n_eff = EffectiveN(s, method);
  double sigma2 = t.q / n_eff;
  if (sigma2_out) *sigma2_out = sigma2;
  double ll = n_eff * kLog2Pi + n_eff * std::log(sigma2) + n_eff + t.log_det;
  if (method == FitMethod::kREML) ll += std::log(t.sum_w);
  return -0.5 * ll;
}

double LogLik(const Summary& s, double sa2, double se2, FitMethod method) {
  double sw = 0.0, swy = 0.0, log_det = 0.0;
  for (std::size_t i = 0; i < s.n_leaders; ++i) {
    double d = se2 + s.m[i] * sa2;
    double w = s.m[i] / d;
    sw += w;
    swy += w * s.mean[i];
    log_det += (s.m[i] - 1.0) * std::log(se2) + std::log(d);
  }
  double mu = swy / sw;
  double q = s.ssw / se2;
  for (std::size_t i = 0; i < s.n_leaders; ++i) {
    double w = s.m[i] / (se2 + s.m[i] * sa2);
    q += w * (s.mean[i] - mu) * (s.mean[i] - mu);
  }
  double n_eff = EffectiveN(s, method);
  double ll = n_eff * kLog2Pi + log_det + q;
  if (method == FitMethod::kREML) ll += std::log(sw);
  return -0.5 * ll;
}

double ProfileAt(const Summary& s, double sigma_alpha, FitMethod method,
                 double scale_lo, double scale_hi) {
  double sa2 = sigma_alpha * sigma_alpha;
  auto neg = [&](double log_se2) {
    return -LogLik(s, sa2, std::exp(log_se2), method);
  };
  constexpr int kScan = 16;
  double lo = std::log(scale_lo) - 4.0;
  double hi = std::log(scale_hi) + 4.0;
  double step = (hi - lo) / (kScan - 1);
  int best = 0;
  double best_val = neg(lo);
  for (int k = 1; k < kScan; ++k) {
    double v = neg(lo + k * step);
    if (v < best_val) {
      best_val = v;
      best = k;
    }
  }
  double a = lo + std::max(best - 1, 0) * step;
  double b = lo + std::min(best + 1, kScan - 1) * step;
  if (best == 0) a -= 8.0 * step;
  if (best == kScan - 1) b += 8.0 * step;
  auto [x, fx] = boost::math::tools::brent_find_minima(neg, a, b, kBrentBits);
  return -std::min(fx, best_val);
}

struct Scale {
  double lo;
  double hi;
};

Scale ScaleOf(const Summary& s) {
  double grand = 0.0;
  for (std::size_t i = 0; i < s.n_leaders; ++i) grand += s.m[i] * s.mean[i];
  grand /= s.n_obs;
  double ssb = 0.0;
  for (std::size_t i = 0; i < s.n_leaders; ++i) {
    ssb += s.m[i] * (s.mean[i] - grand) * (s.mean[i] - grand);
  }
  double total = (s.ssw + ssb) / s.n_obs;
  double within = s.n_obs > s.n_leaders ? s.ssw / (s.n_obs - s.n_leaders) : total;
  double lo = std::min(total, within);
  double hi = std::max(total, within);
  if (lo <= 0.0) lo = hi;
  return {lo, hi};
}

double Quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  double h = (v.size() - 1) * p;
  std::size_t k = static_cast<std::size_t>(std::floor(h));
  if (k + 1 >= v.size()) return v.back();
  return v[k] + (h - k) * (v[k + 1] - v[k]);
}

double Clamp1(double r, bool* clamped) {
  if (r > 1.0) {
    *clamped = true;
    return 1.0;
  }
  if (r < -1.0) {
    *clamped = true;
    return -1.0;
  }
  return r;
}

void CheckReliability(double rel, const char* name) {
  if (!(rel > 0.0)) {
    throw ValidationError("ZeroReliability",
                          fmt::format("{} must be positive, got {}", name, rel));
  }
  if (rel > 1.0) {
    throw ValidationError("InvalidReliability",
                          fmt::format("{} must be at most 1, got {}", name, rel));
  }
}

double LeaderMean(const std::vector<double>& g) {
  return std::accumulate(g.begin(), g.end(), 0.0) / g.size();
}

double HarmonicGroups(const std::vector<std::vector<double>>& groups) {
  std::vector<double> m;
  for (const auto& g : groups) m.push_back(static_cast<double>(g.size()));
  return HarmonicMean(m);
}

nlohmann::json Finite(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::vector<GroupObservation> FilterTest(std::span<const GroupObservation> obs,
                                         const std::string& test) {
  std::vector<GroupObservation> out;
  for (const auto& o : obs) {
    if (o.test == test) out.push_back(o);
  }
  return out;
}

std::vector<std::string> TestsIn(std::span<const GroupObservation> obs) {
  std::set<std::string> tests;
  for (const auto& o : obs) tests.insert(o.test);
  return {tests.begin(), tests.end()};
}

std::vector<GroupObservation> ParseObservationsCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    header = SplitCsvLine(line);
  }
  if (header.empty()) throw ValidationError("InvalidCsv", "missing header row");
  int col_group = -1, col_leader = -1, col_test = -1, col_score = -1;
  std::vector<std::pair<int, std::string>> covariate_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "group_id") col_group = static_cast<int>(c);
    else if (h == "leader_id") col_leader = static_cast<int>(c);
    else if (h == "test") col_test = static_cast<int>(c);
    else if (h == "score") col_score = static_cast<int>(c);
    else if (!h.empty()) covariate_cols.emplace_back(static_cast<int>(c), h);
  }
  if (col_leader < 0 || col_score < 0) {
    throw ValidationError("InvalidCsv", "header needs leader_id and score columns");
  }
  std::vector<GroupObservation> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    auto cells = SplitCsvLine(line);
    if (cells.size() != header.size()) {
      throw ValidationError("InvalidCsv",
                            fmt::format("line {}: expected {} fields, got {}",
                                        line_no, header.size(), cells.size()));
    }
    GroupObservation o;
    o.group_id = col_group >= 0 ? cells[col_group] : fmt::format("g{}", out.size() + 1);
    o.leader_id = cells[col_leader];
    if (o.leader_id.empty()) {
      throw ValidationError("InvalidCsv", fmt::format("line {}: empty leader_id", line_no));
    }
    if (col_test >= 0) o.test = cells[col_test];
    if (o.test != "AI" && o.test != "Human") {
      throw ValidationError("InvalidCsv",
                            fmt::format("line {}: test must be AI or Human", line_no));
    }
    o.score = ParseNumber(cells[col_score], line_no);
    for (const auto& [c, name] : covariate_cols) {
      if (!cells[c].empty()) o.covariates[name] = ParseNumber(cells[c], line_no);
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<GroupObservation> ReadObservationsCsv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read {}", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseObservationsCsv(buf.str());
}

std::string ObservationsToCsv(std::span<const GroupObservation> obs) {
  std::set<std::string> names;
  for (const auto& o : obs) {
    for (const auto& [k, v] : o.covariates) names.insert(k);
  }
  std::string out = "group_id,leader_id,test,score";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (const auto& o : obs) {
    out += fmt::format("{},{},{},{}", o.group_id, o.leader_id, o.test, Num(o.score));
    for (const auto& n : names) {
      auto it = o.covariates.find(n);
      out += ",";
      if (it != o.covariates.end()) out += Num(it->second);
    }
    out += "\n";
  }
  return out;
}

std::vector<LeaderValue> TotalContribution(std::span<const GroupObservation> obs) {
  if (obs.empty()) throw ValidationError("NoObservations", "no observations");
  std::vector<LeaderValue> out;
  for (const auto& [key, idx] : IndexByLeader(obs)) {
    double sum = 0.0;
    for (auto k : idx) sum += obs[k].score;
    out.push_back({key.second, key.first, sum / idx.size(),
                   static_cast<int>(idx.size())});
  }
  return out;
}

std::vector<double> Residualize(std::span<const GroupObservation> obs,
                                const std::vector<std::string>& covariates) {
  if (obs.empty()) throw ValidationError("NoObservations", "no observations");
  std::vector<std::string> kept;
  std::vector<std::vector<double>> columns;
  for (const auto& name : covariates) {
    std::vector<double> col;
    for (const auto& o : obs) {
      auto it = o.covariates.find(name);
      if (it == o.covariates.end()) {
        throw ValidationError("CovariateMissing",
                              fmt::format("group {} has no value for '{}'",
                                          o.group_id, name),
                              name);
      }
      col.push_back(it->second);
    }
    bool constant = std::all_of(col.begin(), col.end(),
                                [&](double v) { return v == col.front(); });
    if (!constant) {
      kept.push_back(name);
      columns.push_back(std::move(col));
    }
  }
  std::vector<std::vector<double>> x(obs.size(), std::vector<double>(kept.size()));
  std::vector<double> y(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    y[i] = obs[i].score;
    for (std::size_t j = 0; j < kept.size(); ++j) x[i][j] = columns[j][i];
  }
  return FitOls(x, y, kept).residuals;
}

std::vector<std::vector<double>> GroupByLeader(std::span<const GroupObservation> obs,
                                               std::span<const double> values) {
  if (values.size() != obs.size()) {
    throw ValidationError("MismatchedPairs", "one value per observation required");
  }
  std::vector<std::vector<double>> out;
  for (const auto& [key, idx] : IndexByLeader(obs)) {
    std::vector<double> g;
    for (auto k : idx) g.push_back(values[k]);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<LeaderValue> LeaderEffects(std::span<const GroupObservation> obs,
                                       std::span<const double> residuals) {
  if (residuals.size() != obs.size()) {
    throw ValidationError("MismatchedPairs", "one residual per observation required");
  }
  std::vector<LeaderValue> out;
  for (const auto& [key, idx] : IndexByLeader(obs)) {
    double sum = 0.0;
    for (auto k : idx) sum += residuals[k];
    out.push_back({key.second, key.first, sum / idx.size(),
                   static_cast<int>(idx.size())});
  }
  return out;
}

std::string MethodName(FitMethod method) {
  return method == FitMethod::kML ? "ml" : "reml";
}

FitMethod ParseMethod(const std::string& name) {
  std::string lower;
  for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "ml") return FitMethod::kML;
  if (lower == "reml") return FitMethod::kREML;
  throw ValidationError("InvalidMethod", fmt::format("unknown method '{}'", name));
}

double VarianceLogLikelihood(const std::vector<std::vector<double>>& groups,
                             double sigma_alpha2, double sigma_e2, FitMethod method) {
  if (sigma_alpha2 < 0.0 || !(sigma_e2 > 0.0)) {
    throw ValidationError("InvalidVariance", "need sigma_alpha2 >= 0 and sigma_e2 > 0");
  }
  return LogLik(Summarize(groups), sigma_alpha2, sigma_e2, method);
}

VarianceFit FitVarianceComponents(const std::vector<std::vector<double>>& groups,
                                  FitMethod method) {
  Summary s = Summarize(groups);
  std::size_t replicated = 0;
  for (double m : s.m) replicated += m >= 2 ? 1 : 0;
  if (s.n_leaders < 2 || replicated < 1) {
    throw ValidationError("DegenerateData",
                          "need at least 2 leaders and a leader with 2 groups");
  }
  VarianceFit fit;
  fit.method = method;
  fit.n_leaders = s.n_leaders;
  fit.n_obs = static_cast<std::size_t>(s.n_obs);
  fit.harmonic_m = HarmonicMean(s.m);

  double mean_of_means =
      std::accumulate(s.mean.begin(), s.mean.end(), 0.0) / s.n_leaders;
  double ss_means = 0.0;
  for (double y : s.mean) ss_means += (y - mean_of_means) * (y - mean_of_means);

  if (s.ssw == 0.0) {
    if (ss_means == 0.0) {
      throw ValidationError("DegenerateData", "all observations are equal");
    }
    double denom = method == FitMethod::kML ? s.n_leaders : s.n_leaders - 1.0;
    fit.sigma_alpha = std::sqrt(ss_means / denom);
    fit.sigma_e = 0.0;
    fit.mu = mean_of_means;
    fit.within_degenerate = true;
    fit.log_likelihood = std::numeric_limits<double>::infinity();
    return fit;
  }

  constexpr int kGrid = 161;
  constexpr double kLogLo = -20.0, kLogHi = 12.0;
  const double step = (kLogHi - kLogLo) / (kGrid - 1);
  auto profile = [&](double lambda) { return RatioProfile(s, lambda, method); };

  // Index 0 is lambda = 0 exactly; index k >= 1 is exp(kLogLo + (k-1) step).
  auto lambda_at = [&](int k) {
    return k == 0 ? 0.0 : std::exp(kLogLo + (k - 1) * step);
  };
  int best = 0;
  double best_ll = profile(0.0);
  for (int k = 1; k <= kGrid; ++k) {
    double ll = profile(lambda_at(k));
    if (ll > best_ll) {
      best_ll = ll;
      best = k;
    }
  }
  fit.evaluations = kGrid + 1;
  if (best == kGrid) {
    throw NumericalError("NonConvergence",
                         fmt::format("variance ratio diverges (log ratio > {}, "
                                     "loglik {})",
                                     kLogHi, best_ll));
  }
  double lambda = lambda_at(best);
  if (best <= 1) {
    std::uintmax_t iters = 200;
    auto [x, fx] = boost::math::tools::brent_find_minima(
        [&](double l) { return -profile(l); }, 0.0, lambda_at(2), kBrentBits, iters);
    fit.evaluations += static_cast<int>(iters);
    if (-fx > best_ll) {
      best_ll = -fx;
      lambda = x;
    }
    if (profile(0.0) >= best_ll) {
      best_ll = profile(0.0);
      lambda = 0.0;
    }
  } else {
    std::uintmax_t iters = 200;
    double a = kLogLo + (best - 2) * step;
    double b = kLogLo + best * step;
    auto [x, fx] = boost::math::tools::brent_find_minima(
        [&](double t) { return -profile(std::exp(t)); }, a, b, kBrentBits, iters);
    fit.evaluations += static_cast<int>(iters);
    if (iters >= 200) fit.converged = false;
    if (-fx > best_ll) {
      best_ll = -fx;
      lambda = std::exp(x);
    }
  }
  double sigma2 = 0.0;
  RatioProfile(s, lambda, method, &sigma2);
  fit.log_likelihood = best_ll;
  fit.sigma_e = std::sqrt(sigma2);
  fit.sigma_alpha = std::sqrt(lambda * sigma2);
  fit.mu = Terms(s, lambda).mu;
  fit.boundary = lambda == 0.0;
  return fit;
}

double ProfileLogLikelihood(const std::vector<std::vector<double>>& groups,
                            double sigma_alpha, FitMethod method) {
  if (sigma_alpha < 0.0) {
    throw ValidationError("InvalidVariance", "sigma_alpha must be non-negative");
  }
  Summary s = Summarize(groups);
  if (s.ssw == 0.0) {
    throw ValidationError("DegenerateData", "no within-leader variation");
  }
  Scale sc = ScaleOf(s);
  return ProfileAt(s, sigma_alpha, method, sc.lo, sc.hi);
}

ProfileInterval ProfileLikelihoodCi(const VarianceFit& fit,
                                    const std::vector<std::vector<double>>& groups,
                                    double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ValidationError("InvalidLevel", "level must lie in (0, 1)");
  }
  if (!fit.converged || fit.within_degenerate) {
    throw NumericalError("NonConvergence",
                         "profile interval needs a converged, non-degenerate fit");
  }
  Summary s = Summarize(groups);
  Scale sc = ScaleOf(s);
  const double crit =
      boost::math::quantile(boost::math::chi_squared_distribution<double>(1.0), level);
  auto deviance = [&](double sa) {
    return 2.0 * (fit.log_likelihood - ProfileAt(s, sa, fit.method, sc.lo, sc.hi)) - crit;
  };
  ProfileInterval ci;
  ci.level = level;
  boost::math::tools::eps_tolerance<double> tol(45);

  const double hat = fit.sigma_alpha;
  double h = 0.1 * std::max({hat, fit.sigma_e, 1e-8});
  double inner = hat;
  double outer = hat + h;
  double d_outer = deviance(outer);
  int doublings = 0;
  while (d_outer <= 0.0 && doublings < 60) {
    inner = outer;
    h *= 2.0;
    outer = hat + h;
    d_outer = deviance(outer);
    ++doublings;
  }
  if (d_outer <= 0.0 || !std::isfinite(d_outer)) {
    ci.upper = std::numeric_limits<double>::infinity();
    ci.upper_bounded = false;
  } else {
    std::uintmax_t iters = 100;
    auto [a, b] = boost::math::tools::toms748_solve(deviance, inner, outer,
                                                    deviance(inner), d_outer, tol, iters);
    ci.upper = 0.5 * (a + b);
  }

  if (fit.boundary || hat == 0.0) {
    ci.lower = 0.0;
    ci.lower_clamped = true;
  } else {
    double d0 = deviance(0.0);
    if (d0 <= 0.0) {
      ci.lower = 0.0;
      ci.lower_clamped = true;
    } else {
      std::uintmax_t iters = 100;
      auto [a, b] = boost::math::tools::toms748_solve(deviance, 0.0, hat, d0,
                                                      deviance(hat), tol, iters);
      ci.lower = 0.5 * (a + b);
    }
  }
  return ci;
}

double HarmonicMean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("TooFewValues", "no values");
  double inv = 0.0;
  for (double v : values) {
    if (!(v > 0.0)) throw ValidationError("InvalidGroupCount", "counts must be positive");
    inv += 1.0 / v;
  }
  return values.size() / inv;
}

double Reliability(double sigma_alpha, double sigma_e, double groups_per_leader) {
  if (!(groups_per_leader >= 1.0)) {
    throw ValidationError("InvalidGroupCount", "groups per leader must be >= 1");
  }
  double sa2 = sigma_alpha * sigma_alpha;
  double noise = sigma_e * sigma_e / groups_per_leader;
  if (sa2 + noise == 0.0) return 0.0;
  return sa2 / (sa2 + noise);
}

double Reliability(const VarianceFit& fit, double groups_per_leader) {
  return Reliability(fit.sigma_alpha, fit.sigma_e, groups_per_leader);
}

double PearsonR(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError("MismatchedPairs",
                          fmt::format("{} x values vs {} y values", x.size(), y.size()));
  }
  if (x.size() < 2) throw ValidationError("TooFewValues", "need at least 2 pairs");
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw ValidationError("ZeroVariance", "correlation undefined for a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Correlation Correlate(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ValidationError("MismatchedPairs",
                          fmt::format("{} x values vs {} y values", x.size(), y.size()));
  }
  if (x.size() < 3) throw ValidationError("TooFewValues", "need at least 3 pairs");
  Correlation c;
  c.n = x.size();
  c.r = PearsonR(x, y);
  double df = static_cast<double>(c.n) - 2.0;
  if (std::abs(c.r) >= 1.0) {
    c.p_value = 0.0;
  } else {
    double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
    boost::math::students_t_distribution<double> dist(df);
    c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

CorrelationReport DisattenuatedCorrelation(std::span<const double> x,
                                           std::span<const double> y, double rel_x,
                                           double rel_y, int bootstrap_reps,
                                           std::uint64_t seed) {
  if (x.size() != y.size()) {
    throw ValidationError("MismatchedPairs",
                          fmt::format("{} x values vs {} y values", x.size(), y.size()));
  }
  CheckReliability(rel_x, "rel_x");
  CheckReliability(rel_y, "rel_y");
  CorrelationReport rep;
  rep.n = x.size();
  rep.rel_x = rel_x;
  rep.rel_y = rel_y;
  rep.raw_r = PearsonR(x, y);
  if (rep.n >= 3) rep.p_value = Correlate(x, y).p_value;
  const double denom = std::sqrt(rel_x * rel_y);
  rep.disattenuated_rho = Clamp1(rep.raw_r / denom, &rep.clamped);

  std::vector<double> draws;
  std::vector<double> bx(rep.n), by(rep.n);
  for (int b = 0; b < bootstrap_reps; ++b) {
    Rng rng(DeriveSeed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<std::size_t> pick(0, rep.n - 1);
    for (std::size_t i = 0; i < rep.n; ++i) {
      std::size_t k = pick(rng);
      bx[i] = x[k];
      by[i] = y[k];
    }
    try {
      bool unused = false;
      draws.push_back(Clamp1(PearsonR(bx, by) / denom, &unused));
    } catch (const Error&) {
      ++rep.bootstrap_failures;
    }
  }
  rep.bootstrap_reps = bootstrap_reps;
  if (!draws.empty()) {
    rep.ci_low = Quantile(draws, 0.025);
    rep.ci_high = Quantile(draws, 0.975);
  } else {
    rep.ci_low = rep.ci_high = rep.disattenuated_rho;
  }
  return rep;
}

CorrelationReport DisattenuatedCorrelation(
    const std::vector<std::vector<double>>& x_groups,
    const std::vector<std::vector<double>>& y_groups, FitMethod method,
    int bootstrap_reps, std::uint64_t seed) {
  if (x_groups.size() != y_groups.size()) {
    throw ValidationError("MismatchedPairs",
                          fmt::format("{} x leaders vs {} y leaders", x_groups.size(),
                                      y_groups.size()));
  }
  auto estimate = [&](const std::vector<std::vector<double>>& xg,
                      const std::vector<std::vector<double>>& yg, double* r,
                      double* rx, double* ry) {
    std::vector<double> xm, ym;
    for (const auto& g : xg) xm.push_back(LeaderMean(g));
    for (const auto& g : yg) ym.push_back(LeaderMean(g));
    *r = PearsonR(xm, ym);
    *rx = Reliability(FitVarianceComponents(xg, method), HarmonicGroups(xg));
    *ry = Reliability(FitVarianceComponents(yg, method), HarmonicGroups(yg));
  };
  double r = 0.0, rx = 0.0, ry = 0.0;
  estimate(x_groups, y_groups, &r, &rx, &ry);
  CheckReliability(rx, "rel_x");
  CheckReliability(ry, "rel_y");
  CorrelationReport rep;
  rep.n = x_groups.size();
  rep.raw_r = r;
  rep.rel_x = rx;
  rep.rel_y = ry;
  {
    std::vector<double> xm, ym;
    for (const auto& g : x_groups) xm.push_back(LeaderMean(g));
    for (const auto& g : y_groups) ym.push_back(LeaderMean(g));
    if (rep.n >= 3) rep.p_value = Correlate(xm, ym).p_value;
  }
  rep.disattenuated_rho = Clamp1(r / std::sqrt(rx * ry), &rep.clamped);

  std::vector<double> draws;
  std::vector<std::vector<double>> bx(rep.n), by(rep.n);
  for (int b = 0; b < bootstrap_reps; ++b) {
    Rng rng(DeriveSeed(seed, static_cast<std::uint64_t>(b)));
    std::uniform_int_distribution<std::size_t> pick(0, rep.n - 1);
    for (std::size_t i = 0; i < rep.n; ++i) {
      std::size_t k = pick(rng);
      bx[i] = x_groups[k];
      by[i] = y_groups[k];
    }
    try {
      double br = 0.0, brx = 0.0, bry = 0.0;
      estimate(bx, by, &br, &brx, &bry);
      if (!(brx > 0.0) || !(bry > 0.0)) {
        ++rep.bootstrap_failures;
        continue;
      }
      bool unused = false;
      draws.push_back(Clamp1(br / std::sqrt(brx * bry), &unused));
    } catch (const Error&) {
      ++rep.bootstrap_failures;
    }
  }
  rep.bootstrap_reps = bootstrap_reps;
  if (!draws.empty()) {
    rep.ci_low = Quantile(draws, 0.025);
    rep.ci_high = Quantile(draws, 0.975);
  } else {
    rep.ci_low = rep.ci_high = rep.disattenuated_rho;
  }
  return rep;
}

double FixedEffectsR2(std::span<const GroupObservation> obs) {
  auto index = IndexByLeader(obs);
  if (index.size() < 2) throw ValidationError("TooFewValues", "need at least 2 leaders");
  double grand = 0.0;
  for (const auto& o : obs) grand += o.score;
  grand /= obs.size();
  double sst = 0.0, ssb = 0.0;
  for (const auto& o : obs) sst += (o.score - grand) * (o.score - grand);
  for (const auto& [key, idx] : index) {
    double mean = 0.0;
    for (auto k : idx) mean += obs[k].score;
    mean /= idx.size();
    ssb += idx.size() * (mean - grand) * (mean - grand);
  }
  if (sst == 0.0) return 0.0;
  return std::clamp(ssb / sst, 0.0, 1.0);
}

double Overplacement(double self_percentile, double actual_percentile) {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 100.0)) {
      throw ValidationError("OutOfRange",
                            fmt::format("{} must lie in [0, 100], got {}", name, v));
    }
  };
  check(self_percentile, "self_percentile");
  check(actual_percentile, "actual_percentile");
  return self_percentile - actual_percentile;
}

OlsFit FitOls(const std::vector<std::vector<double>>& x, std::span<const double> y,
              const std::vector<std::string>& names) {
  const std::size_t n = y.size();
  const std::size_t p = names.size() + 1;
  if (x.size() != n) throw ValidationError("MismatchedPairs", "one row per outcome");
  if (n < p) {
    throw ValidationError("RankDeficient",
                          fmt::format("{} observations for {} coefficients", n, p));
  }
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd Y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() != p - 1) {
      throw ValidationError("MismatchedPairs", "row width differs from predictor count");
    }
    X(i, 0) = 1.0;
    for (std::size_t j = 0; j + 1 < p; ++j) X(i, j + 1) = x[i][j];
    Y(i) = y[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < p) {
    throw ValidationError("RankDeficient",
                          fmt::format("design matrix rank {} < {}", qr.rank(), p));
  }
  Eigen::VectorXd beta = qr.solve(Y);
  Eigen::VectorXd resid = Y - X * beta;

  OlsFit fit;
  fit.n = n;
  fit.names.push_back("intercept");
  fit.names.insert(fit.names.end(), names.begin(), names.end());
  fit.coef.assign(beta.data(), beta.data() + p);
  fit.residuals.assign(resid.data(), resid.data() + n);
  double ybar = Y.mean();
  double sst = (Y.array() - ybar).square().sum();
  double ssr = resid.squaredNorm();
  fit.r2 = sst > 0.0 ? 1.0 - ssr / sst : 0.0;

  Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();
  Eigen::MatrixXd meat = X.transpose() * resid.array().square().matrix().asDiagonal() * X;
  double df = static_cast<double>(n) - static_cast<double>(p);
  double hc1 = df > 0 ? static_cast<double>(n) / df : 0.0;
  Eigen::MatrixXd cov = xtx_inv * meat * xtx_inv * hc1;
  for (std::size_t j = 0; j < p; ++j) {
    double se = std::sqrt(std::max(cov(j, j), 0.0));
    fit.robust_se.push_back(se);
    double t = se > 0.0 ? beta(j) / se : 0.0;
    fit.t.push_back(t);
    if (df > 0 && se > 0.0) {
      boost::math::students_t_distribution<double> dist(df);
      fit.p_value.push_back(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
    } else {
      fit.p_value.push_back(1.0);
    }
  }
  return fit;
}

std::vector<RegressionModel> MetricRegressions(const std::vector<LeaderValue>& alphas,
                                               const std::vector<MetricsRow>& metrics) {
  std::map<LeaderKey, const MetricsRow*> by_key;
  for (const auto& row : metrics) by_key[{row.test, row.leader_id}] = &row;
  std::map<std::string, std::vector<std::pair<double, std::array<double, 5>>>> per_test;
  for (const auto& a : alphas) {
    auto it = by_key.find({a.test, a.leader_id});
    if (it == by_key.end()) continue;
    per_test[a.test].emplace_back(a.value, it->second->metrics.values());
  }
  std::vector<RegressionModel> models;
  for (const auto& [test, rows] : per_test) {
    std::vector<double> y;
    for (const auto& r : rows) y.push_back(r.first);
    if (y.size() < 3) {
      throw ValidationError("TooFewValues",
                            fmt::format("test '{}' has {} joined leaders", test, y.size()));
    }
    y = Standardize(y);
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
      std::vector<std::vector<double>> x;
      for (const auto& r : rows) x.push_back({r.second[k]});
      RegressionModel m;
      m.test = test;
      m.predictors = {std::string(kMetricNames[k])};
      m.fit = FitOls(x, y, m.predictors);
      models.push_back(std::move(m));
    }
    std::vector<std::vector<double>> x;
    for (const auto& r : rows) x.emplace_back(r.second.begin(), r.second.end());
    RegressionModel joint;
    joint.test = test;
    for (auto name : kMetricNames) joint.predictors.emplace_back(name);
    joint.fit = FitOls(x, y, joint.predictors);
    models.push_back(std::move(joint));
  }
  return models;
}

nlohmann::json FitToJson(const VarianceFit& fit) {
  nlohmann::json j = {
      {"method", MethodName(fit.method)},
      {"sigma_alpha", fit.sigma_alpha},
      {"sigma_e", fit.sigma_e},
      {"mu", fit.mu},
      {"log_likelihood", Finite(fit.log_likelihood)},
      {"n_leaders", fit.n_leaders},
      {"n_obs", fit.n_obs},
      {"harmonic_groups_per_leader", fit.harmonic_m},
      {"diagnostics",
       {{"converged", fit.converged},
        {"boundary", fit.boundary},
        {"within_degenerate", fit.within_degenerate},
        {"evaluations", fit.evaluations}}},
  };
  if (fit.ci_95) {
    j["ci_95"] = {{"lower", fit.ci_95->lower},
                  {"upper", Finite(fit.ci_95->upper)},
                  {"level", fit.ci_95->level},
                  {"lower_clamped", fit.ci_95->lower_clamped},
                  {"upper_bounded", fit.ci_95->upper_bounded}};
  } else {
    j["ci_95"] = nullptr;
  }
  return j;
}

nlohmann::json CorrelationToJson(const CorrelationReport& r) {
  return {{"raw_r", r.raw_r},
          {"disattenuated_rho", r.disattenuated_rho},
          {"clamped", r.clamped},
          {"rel_x", r.rel_x},
          {"rel_y", r.rel_y},
          {"ci_95", {r.ci_low, r.ci_high}},
          {"bootstrap_reps", r.bootstrap_reps},
          {"bootstrap_failures", r.bootstrap_failures},
          {"n", r.n},
          {"p_value", r.p_value}};
}

nlohmann::json RegressionsToJson(const std::vector<RegressionModel>& models) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : models) {
    nlohmann::json coefs = nlohmann::json::array();
    for (std::size_t j = 0; j < m.fit.names.size(); ++j) {
      coefs.push_back({{"name", m.fit.names[j]},
                       {"estimate", m.fit.coef[j]},
                       {"robust_se", m.fit.robust_se[j]},
                       {"t", m.fit.t[j]},
                       {"p_value", m.fit.p_value[j]}});
    }
    out.push_back({{"test", m.test},
                   {"predictors", m.predictors},
                   {"r2", m.fit.r2},
                   {"n", m.fit.n},
                   {"coefficients", coefs}});
  }
  return out;
}

}  // namespace leaderlab
