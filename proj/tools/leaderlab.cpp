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

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "leaderlab/leaderlab.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitUpstream = 3;
constexpr int kExitNumerical = 4;

std::atomic<bool> g_stop{false};

int ExitCode(ll_status status) {
  switch (status) {
    case LL_OK: return kExitOk;
    case LL_ERR_VALIDATION: return kExitValidation;
    case LL_ERR_UPSTREAM: return kExitUpstream;
    case LL_ERR_NUMERICAL: return kExitNumerical;
    default: return 1;
  }
}

int Finish(ll_status status, char* summary) {
  if (status != LL_OK) {
    std::cerr << "error: " << ll_last_error_code() << ": " << ll_last_error_message()
              << "\n";
    return ExitCode(status);
  }
  if (summary) {
    std::cout << summary << "\n";
    ll_string_free(summary);
  }
  return kExitOk;
}

int Serve(const std::string& bank, const std::string& log_dir, const std::string& host,
          int port) {
  ll_server* server = nullptr;
  ll_status st = ll_server_create(bank.c_str(), log_dir.empty() ? nullptr : log_dir.c_str(),
                                  &server);
  if (st != LL_OK) return Finish(st, nullptr);
  int bound = 0;
  st = ll_server_bind(server, host.c_str(), port, &bound);
  if (st != LL_OK) {
    ll_server_free(server);
    return Finish(st, nullptr);
  }
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  std::thread watcher([server] {
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    ll_server_stop(server);
  });
  st = ll_server_listen(server);
  g_stop = true;
  watcher.join();
  ll_server_free(server);
  return Finish(st, nullptr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"leaderlab: AI leadership test toolkit"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> global_seed;
  app.add_option("--seed", global_seed, "Root RNG seed for the chosen command");

  auto* gen = app.add_subcommand("gen-puzzles", "Generate verified hidden-profile puzzles");
  std::string spec_path, gen_out;
  std::optional<std::uint64_t> gen_seed;
  int count = 1;
  bool parallel_forms = false;
  gen->add_option("--spec", spec_path, "Puzzle spec JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  gen->add_option("--seed", gen_seed, "Seed of the first puzzle");
  gen->add_option("--count", count, "Number of puzzles")->check(CLI::PositiveNumber);
  gen->add_flag("--parallel-forms", parallel_forms, "Also write a parallel form of each");
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* sim = app.add_subcommand("simulate", "Run a synthetic experiment end to end");
  std::string config_path, sim_out;
  int sim_boot = 2000;
  sim->add_option("--config", config_path, "Simulation config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--bootstrap-reps", sim_boot, "Bootstrap resamples for correlations")
      ->check(CLI::NonNegativeNumber);

  auto* est = app.add_subcommand("estimate", "Fit leader effects and variance components");
  std::string obs_path, covariates, method = "reml", est_out;
  int est_boot = 2000;
  est->add_option("--obs", obs_path, "Observations CSV")->required()->check(CLI::ExistingFile);
  est->add_option("--covariates", covariates, "Comma-separated leader covariates");
  est->add_option("--method", method, "ml or reml")->check(CLI::IsMember({"ml", "reml"}));
  est->add_option("--out", est_out, "Fit report JSON")->required();
  est->add_option("--bootstrap-reps", est_boot, "Bootstrap resamples for correlations")
      ->check(CLI::NonNegativeNumber);

  auto* met = app.add_subcommand("metrics", "Communication metrics from session logs");
  std::string logs_dir, met_out, lexicon_dir;
  met->add_option("--logs", logs_dir, "Directory of session logs")
      ->required()
      ->check(CLI::ExistingDirectory);
  met->add_option("--out", met_out, "Metrics CSV (z-scores go to *_z.csv)")->required();
  met->add_option("--lexicons", lexicon_dir, "Directory with replacement lexicon files")
      ->check(CLI::ExistingDirectory);

  auto* srv = app.add_subcommand("serve", "Serve the session API");
  int port = 8080;
  std::string bank, log_dir, host = "127.0.0.1";
  srv->add_option("--port", port, "TCP port (0 picks one)")->check(CLI::Range(0, 65535));
  srv->add_option("--bank", bank, "Puzzle bank directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  srv->add_option("--host", host, "Bind address");
  srv->add_option("--log-dir", log_dir, "Session log directory (replayed on start)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  char* summary = nullptr;
  ll_status st = LL_OK;
  if (*gen) {
    std::uint64_t seed = gen_seed.value_or(global_seed.value_or(0));
    st = ll_gen_puzzles(spec_path.c_str(), seed, count, parallel_forms ? 1 : 0,
                        gen_out.c_str(), &summary);
    return Finish(st, summary);
  }
  if (*sim) {
    std::int64_t seed = global_seed ? static_cast<std::int64_t>(*global_seed) : -1;
    st = ll_simulate(config_path.c_str(), seed, sim_out.c_str(), sim_boot, &summary);
    return Finish(st, summary);
  }
  if (*est) {
    st = ll_estimate(obs_path.c_str(), covariates.c_str(), method.c_str(), est_boot,
                     global_seed.value_or(0), est_out.c_str(), &summary);
    return Finish(st, summary);
  }
  if (*met) {
    st = ll_metrics(logs_dir.c_str(), lexicon_dir.c_str(), met_out.c_str(), &summary);
    return Finish(st, summary);
  }
  return Serve(bank, log_dir, host, port);
}
