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

#include "leaderlab/leaderlab.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "leaderlab/error.hpp"
#include "leaderlab/estimator.hpp"
#include "leaderlab/followers.hpp"
#include "leaderlab/metrics.hpp"
#include "leaderlab/orchestrator.hpp"
#include "leaderlab/puzzle.hpp"
#include "leaderlab/scoring.hpp"
#include "leaderlab/service.hpp"
#include "leaderlab/session.hpp"

struct ll_puzzle {
  std::shared_ptr<const leaderlab::Puzzle> puzzle;
};

struct ll_session {
  leaderlab::ManualClock clock;
  std::optional<leaderlab::Session> session;
  leaderlab::AgentPolicy policy;
};

struct ll_server {
  std::unique_ptr<leaderlab::HttpServer> http;
};

namespace {

namespace fs = std::filesystem;
using leaderlab::Error;
using leaderlab::ErrorKind;

thread_local std::string g_error_code;
thread_local std::string g_error_message;

ll_status SetError(ll_status status, std::string code, std::string message) {
  g_error_code = std::move(code);
  g_error_message = std::move(message);
  return status;
}

ll_status StatusOf(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return LL_ERR_VALIDATION;
    case ErrorKind::kUpstream: return LL_ERR_UPSTREAM;
    case ErrorKind::kNumerical: return LL_ERR_NUMERICAL;
    case ErrorKind::kIo: return LL_ERR_IO;
    case ErrorKind::kInternal: return LL_ERR_INTERNAL;
  }
  return LL_ERR_INTERNAL;
}

template <typename Fn>
ll_status Guard(Fn&& fn) {
  try {
    fn();
    return LL_OK;
  } catch (const Error& e) {
    std::string message = e.what();
    if (!e.detail().empty()) message += fmt::format(" ({})", e.detail());
    return SetError(StatusOf(e.kind()), e.code(), message);
  } catch (const nlohmann::json::exception& e) {
    return SetError(LL_ERR_VALIDATION, "InvalidJson", e.what());
  } catch (const std::bad_alloc&) {
    return SetError(LL_ERR_INTERNAL, "OutOfMemory", "allocation failed");
  } catch (const std::exception& e) {
    return SetError(LL_ERR_INTERNAL, "InternalError", e.what());
  }
}

void Require(const void* p, const char* name) {
  if (!p) {
    throw leaderlab::ValidationError("NullArgument", fmt::format("{} must not be NULL", name));
  }
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void Emit(char** out, const nlohmann::json& doc) {
  if (out) *out = Dup(doc.dump());
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw leaderlab::IoError(fmt::format("cannot read {}", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json ParseJson(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw leaderlab::ValidationError("InvalidJson", fmt::format("{}: {}", what, e.what()));
  }
}

std::vector<std::string> SplitComma(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    auto b = cur.find_first_not_of(" \t");
    auto e = cur.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

extern "C" {

const char* ll_version(void) { return "0.1.0"; }

const char* ll_last_error_code(void) { return g_error_code.c_str(); }

const char* ll_last_error_message(void) { return g_error_message.c_str(); }

void ll_string_free(char* s) { std::free(s); }

ll_status ll_puzzle_generate(const char* spec_json, uint64_t seed, ll_puzzle** out) {
  return Guard([&] {
    Require(out, "out");
    leaderlab::PuzzleSpec spec;
    if (spec_json) spec = leaderlab::SpecFromJson(ParseJson(spec_json, "spec"));
    auto p = std::make_shared<const leaderlab::Puzzle>(leaderlab::GeneratePuzzle(spec, seed));
    *out = new ll_puzzle{std::move(p)};
  });
}

ll_status ll_puzzle_from_json(const char* json, ll_puzzle** out) {
  return Guard([&] {
    Require(json, "json");
    Require(out, "out");
    auto p = std::make_shared<const leaderlab::Puzzle>(
        leaderlab::PuzzleFromJson(ParseJson(json, "puzzle")));
    *out = new ll_puzzle{std::move(p)};
  });
}

ll_status ll_puzzle_to_json(const ll_puzzle* puzzle, char** out) {
  return Guard([&] {
    Require(puzzle, "puzzle");
    Require(out, "out");
    *out = Dup(leaderlab::PuzzleToJson(*puzzle->puzzle).dump());
  });
}

ll_status ll_puzzle_parallel_form(const ll_puzzle* puzzle, uint64_t theme_seed,
                                  ll_puzzle** out) {
  return Guard([&] {
    Require(puzzle, "puzzle");
    Require(out, "out");
    auto p = std::make_shared<const leaderlab::Puzzle>(
        leaderlab::MakeParallelForm(*puzzle->puzzle, theme_seed));
    *out = new ll_puzzle{std::move(p)};
  });
}

ll_status ll_puzzle_verify(const ll_puzzle* puzzle, int* holds) {
  return Guard([&] {
    Require(puzzle, "puzzle");
    Require(holds, "holds");
    *holds = leaderlab::VerifyHiddenProfile(*puzzle->puzzle).holds_hidden_profile ? 1 : 0;
  });
}

const char* ll_puzzle_id(const ll_puzzle* puzzle) {
  return puzzle ? puzzle->puzzle->id.c_str() : "";
}

void ll_puzzle_free(ll_puzzle* puzzle) { delete puzzle; }

ll_status ll_score_dimension(const int* submitted, const int* key, size_t n_options,
                             double* value, int* optimal) {
  return Guard([&] {
    Require(submitted, "submitted");
    Require(key, "key");
    auto s = leaderlab::CredenceProfile::Validate({submitted, n_options});
    auto k = leaderlab::CredenceProfile::Validate({key, n_options});
    auto score = leaderlab::ScoreDimension(s, k);
    if (value) *value = score.value;
    if (optimal) *optimal = score.is_optimal ? 1 : 0;
  });
}

ll_status ll_session_create(const ll_puzzle* puzzle, const char* config_json,
                            ll_session** out) {
  return Guard([&] {
    Require(puzzle, "puzzle");
    Require(out, "out");
    nlohmann::json cfg = nlohmann::json::object();
    if (config_json) cfg = ParseJson(config_json, "session config");
    auto s = std::make_unique<ll_session>();
    leaderlab::SessionConfig config;
    config.session_id = cfg.value("session_id", std::string("session-1"));
    config.puzzle_id = puzzle->puzzle->id;
    config.leader_id = cfg.value("leader_id", std::string("leader"));
    config.follower_ids = {"agent-1", "agent-2", "agent-3"};
    config.test = cfg.value("test", std::string("AI"));
    config.time_limit_ms = cfg.value("time_limit_ms", leaderlab::kDefaultTimeLimitMs);
    config.grace_ms = cfg.value("grace_ms", leaderlab::kDefaultGraceMs);
    config.clock = s->clock.AsClock();
    s->policy = leaderlab::ParsePolicy(cfg.value("follower_policy", nlohmann::json("oracle")));
    s->session.emplace(leaderlab::Session::Create(config, puzzle->puzzle));
    *out = s.release();
  });
}

ll_status ll_session_post(ll_session* session, const char* recipient, const char* text,
                          char** events_json) {
  return Guard([&] {
    Require(session, "session");
    Require(recipient, "recipient");
    Require(text, "text");
    auto& s = *session->session;
    const std::int64_t before = s.last_seq();
    auto posted = s.PostMessage(leaderlab::Role::kLeader, leaderlab::ParseRole(recipient),
                                text);
    for (const auto& ev : posted) {
      const auto follower = ev.message()->recipient;
      std::string reply;
      try {
        reply = leaderlab::FollowerRespond(session->policy,
                                           leaderlab::MakeFollowerContext(s, follower));
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::kUpstream) s.RecordReplyFailure(follower, ev.seq, e.code());
        throw;
      }
      s.PostMessage(follower, leaderlab::Role::kLeader, reply);
    }
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : s.events()) {
      if (ev.seq > before) events.push_back(leaderlab::EventToJson(ev));
    }
    Emit(events_json, events);
  });
}

ll_status ll_session_submit(ll_session* session, const char* profiles_json, double* score) {
  return Guard([&] {
    Require(session, "session");
    Require(profiles_json, "profiles_json");
    auto doc = ParseJson(profiles_json, "profiles");
    std::vector<std::vector<int>> profiles;
    for (const auto& p : doc) {
      profiles.push_back(p.is_null() ? std::vector<int>{} : p.get<std::vector<int>>());
    }
    auto fin = session->session->SubmitAnswers(leaderlab::Role::kLeader, profiles);
    if (score) *score = std::get<leaderlab::events::Finalized>(fin.body).score;
  });
}

ll_status ll_session_advance(ll_session* session, int64_t ms) {
  return Guard([&] {
    Require(session, "session");
    if (ms < 0) throw leaderlab::ValidationError("InvalidArgument", "ms must be >= 0");
    session->clock.Advance(ms);
    session->session->Refresh();
  });
}

ll_status ll_session_view(const ll_session* session, char** view_json) {
  return Guard([&] {
    Require(session, "session");
    Require(view_json, "view_json");
    *view_json = Dup(leaderlab::LeaderView(*session->session).dump());
  });
}

ll_status ll_session_log(const ll_session* session, char** jsonl) {
  return Guard([&] {
    Require(session, "session");
    Require(jsonl, "jsonl");
    *jsonl = Dup(leaderlab::EventsToJsonLines(session->session->events()));
  });
}

void ll_session_free(ll_session* session) { delete session; }

ll_status ll_gen_puzzles(const char* spec_path, uint64_t seed, int count,
                         int parallel_forms, const char* out_dir, char** summary) {
  return Guard([&] {
    Require(out_dir, "out_dir");
    leaderlab::PuzzleSpec spec;
    if (spec_path && *spec_path) {
      spec = leaderlab::SpecFromJson(ParseJson(ReadText(spec_path), spec_path));
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    auto paths = leaderlab::WritePuzzleBank(spec, seed, count, parallel_forms != 0, out_dir);
    int verified = 0;
    for (const auto& p : paths) {
      auto puzzle = leaderlab::PuzzleFromJson(ParseJson(ReadText(p), p));
      if (!leaderlab::VerifyHiddenProfile(puzzle).holds_hidden_profile) {
        throw leaderlab::ValidationError("HiddenProfileViolated",
                                         fmt::format("{} fails verification", puzzle.id));
      }
      ++verified;
    }
    Emit(summary, {{"written", paths}, {"verified", verified}});
  });
}

ll_status ll_simulate(const char* config_path, int64_t seed_override, const char* out_dir,
                      int bootstrap_reps, char** summary) {
  return Guard([&] {
    Require(config_path, "config_path");
    Require(out_dir, "out_dir");
    auto doc = ParseJson(ReadText(config_path), config_path);
    if (seed_override >= 0 && doc.is_object()) doc["seed"] = seed_override;
    auto config = leaderlab::SyntheticConfigFromJson(doc);
    auto ds = leaderlab::RunSyntheticExperiment(config);
    auto entries = leaderlab::ExportResults(ds, out_dir, bootstrap_reps);
    nlohmann::json files = nlohmann::json::array();
    for (const auto& e : entries) {
      if (e.path.rfind("logs/", 0) != 0) files.push_back(e.path);
    }
    Emit(summary, {{"sessions", ds.sessions.size()},
                   {"observations", ds.observations.size()},
                   {"files", files},
                   {"manifest", (fs::path(out_dir) / "manifest.json").string()}});
  });
}

ll_status ll_estimate(const char* obs_path, const char* covariates, const char* method,
                      int bootstrap_reps, uint64_t seed, const char* out_path,
                      char** summary) {
  return Guard([&] {
    Require(obs_path, "obs_path");
    Require(out_path, "out_path");
    auto obs = leaderlab::ReadObservationsCsv(obs_path);
    if (obs.empty()) throw leaderlab::ValidationError("NoObservations", "no observations");
    auto cov = covariates ? SplitComma(covariates) : std::vector<std::string>{};
    auto m = leaderlab::ParseMethod(method ? method : "reml");
    auto report = leaderlab::Analyze(obs, cov, m, bootstrap_reps, seed);
    const fs::path out(out_path);
    leaderlab::WriteFileAtomic(out.string(), leaderlab::AnalysisToJson(report).dump(2) + "\n");
    fs::path effects = out;
    effects.replace_filename(out.stem().string() + "_effects.csv");
    leaderlab::WriteFileAtomic(effects.string(), leaderlab::EffectsToCsv(report));
    nlohmann::json tests = nlohmann::json::object();
    for (const auto& t : report.tests) {
      tests[t.test] = {{"sigma_alpha", t.fit.sigma_alpha}, {"sigma_e", t.fit.sigma_e}};
    }
    Emit(summary, {{"fit", out.string()}, {"effects", effects.string()}, {"tests", tests}});
  });
}

ll_status ll_metrics(const char* logs_dir, const char* lexicon_dir, const char* out_path,
                     char** summary) {
  return Guard([&] {
    Require(logs_dir, "logs_dir");
    Require(out_path, "out_path");
    auto sessions = leaderlab::LoadSessionLogs(logs_dir);
    leaderlab::MetricsTable table;
    if (lexicon_dir && *lexicon_dir) {
      auto pronouns = leaderlab::Lexicon::Load(
          (fs::path(lexicon_dir) / "plural_pronouns.txt").string());
      auto affect = leaderlab::Lexicon::Load(
          (fs::path(lexicon_dir) / "positive_affect.txt").string());
      table = leaderlab::ComputeMetricsTable(sessions, pronouns, affect);
    } else {
      table = leaderlab::ComputeMetricsTable(sessions);
    }
    const fs::path out(out_path);
    fs::path z = out;
    z.replace_filename(out.stem().string() + "_z" + out.extension().string());
    leaderlab::WriteFileAtomic(out.string(), leaderlab::MetricsToCsv(table.raw));
    leaderlab::WriteFileAtomic(z.string(), leaderlab::MetricsToCsv(table.standardized));
    Emit(summary, {{"leaders", table.raw.size()}, {"raw", out.string()}, {"z", z.string()}});
  });
}

ll_status ll_server_create(const char* bank_dir, const char* log_dir, ll_server** out) {
  return Guard([&] {
    Require(bank_dir, "bank_dir");
    Require(out, "out");
    leaderlab::ServiceOptions options;
    options.bank = leaderlab::LoadPuzzleDir(bank_dir);
    if (options.bank.empty()) {
      throw leaderlab::ValidationError("EmptyBank",
                                       fmt::format("no puzzles in {}", bank_dir));
    }
    if (log_dir) options.log_dir = log_dir;
    auto s = std::make_unique<ll_server>();
    s->http = std::make_unique<leaderlab::HttpServer>(std::move(options));
    *out = s.release();
  });
}

ll_status ll_server_bind(ll_server* server, const char* host, int port, int* bound_port) {
  return Guard([&] {
    Require(server, "server");
    int p = server->http->Bind(host ? host : "127.0.0.1", port);
    if (bound_port) *bound_port = p;
  });
}

ll_status ll_server_listen(ll_server* server) {
  return Guard([&] {
    Require(server, "server");
    server->http->Listen();
  });
}

void ll_server_stop(ll_server* server) {
  if (server) server->http->Stop();
}

void ll_server_free(ll_server* server) { delete server; }

}  // extern "C"
