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

#include "leaderlab/service.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include <fmt/format.h>
#include <httplib.h>

#include "leaderlab/error.hpp"
#include "leaderlab/rng.hpp"

namespace leaderlab {
namespace fs = std::filesystem;
namespace {

constexpr const char* kJson = "application/json";

ApiResponse ErrorResponse(int status, const std::string& code, const std::string& message,
                          const nlohmann::json& detail = nullptr) {
  return {status, {{"code", code}, {"message", message}, {"detail", detail}}};
}

int StatusFor(const Error& e) {
  const std::string& c = e.code();
  if (e.kind() == ErrorKind::kUpstream) return 502;
  if (c == "UnknownSession" || c == "UnknownPuzzle") return 404;
  if (c == "InvalidPolicy" || c == "InvalidCredence") return 422;
  if (c == "SessionExpired" || c == "SessionFinalized" || c == "AlreadyFinalized") {
    return 409;
  }
  if (e.kind() == ErrorKind::kValidation) return 400;
  return 500;
}

ApiResponse FromError(const Error& e) {
  nlohmann::json detail = nullptr;
  if (!e.detail().empty()) detail = e.detail();
  return ErrorResponse(StatusFor(e), e.code(), e.what(), detail);
}

nlohmann::json ParseBody(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("MalformedRequest", fmt::format("body is not JSON: {}", e.what()));
  }
  if (!doc.is_object()) throw ValidationError("MalformedRequest", "body must be an object");
  return doc;
}

std::string RequireString(const nlohmann::json& doc, const char* field) {
  auto it = doc.find(field);
  if (it == doc.end() || !it->is_string()) {
    throw ValidationError("MalformedRequest", fmt::format("'{}' must be a string", field));
  }
  return it->get<std::string>();
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

struct SessionService::Entry {
  std::mutex mu;
  std::condition_variable cv;
  std::optional<Session> session;
  AgentPolicy policy;
  std::unique_ptr<EventLogWriter> writer;
  std::int64_t logged_seq = 0;
  std::map<std::string, ApiResponse> idempotent;
};

std::string NewSessionToken() {
  unsigned char bytes[16];
  if (RAND_bytes(bytes, sizeof bytes) != 1) {
    throw Error(ErrorKind::kInternal, "RandomFailed", "no entropy for session token");
  }
  std::string hex;
  for (unsigned char b : bytes) hex += fmt::format("{:02x}", b);
  return hex;
}

nlohmann::json LeaderEvent(const SessionEvent& ev) {
  nlohmann::json j = {{"seq", ev.seq}, {"at", ev.at}, {"kind", ev.kind()}};
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, events::Created>) {
          j["session_id"] = body.session_id;
          j["puzzle_id"] = body.puzzle_id;
          j["time_limit_ms"] = body.time_limit_ms;
          j["grace_ms"] = body.grace_ms;
        } else if constexpr (std::is_same_v<T, events::Message>) {
          j["sender"] = RoleName(body.sender);
          j["recipient"] = RoleName(body.recipient);
          j["text"] = body.text;
          j["message_id"] = body.message_id;
          j["broadcast"] = body.broadcast;
        } else if constexpr (std::is_same_v<T, events::AnswersSubmitted>) {
          j["profiles"] = body.profiles;
          j["defaulted"] = body.defaulted;
        } else if constexpr (std::is_same_v<T, events::Finalized>) {
          j["score"] = body.score;
          j["dimension_scores"] = body.dimension_scores;
          j["optimal"] = body.optimal;
        } else if constexpr (std::is_same_v<T, events::ReplyFailed>) {
          j["follower"] = RoleName(body.follower);
          j["message_seq"] = body.message_seq;
          j["reason"] = body.reason;
        }
      },
      ev.body);
  return j;
}

nlohmann::json LeaderView(const Session& session) {
  const Puzzle& puzzle = session.puzzle();
  const auto& created = session.created();
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& d : puzzle.dimensions) {
    dims.push_back({{"name", d.name}, {"question", d.question}, {"options", d.options}});
  }
  nlohmann::json clues = nlohmann::json::array();
  for (const Clue* c : puzzle.CluesFor(Role::kLeader)) {
    clues.push_back({{"dimension", c->dimension}, {"text", c->text}});
  }
  nlohmann::json channels = nlohmann::json::object();
  const Transcript transcript = session.transcript();
  for (Role f : kFollowers) {
    nlohmann::json channel = nlohmann::json::array();
    for (const SessionEvent* e : transcript.Channel(f)) {
      const auto* m = e->message();
      channel.push_back({{"seq", e->seq},
                         {"at", e->at},
                         {"sender", RoleName(m->sender)},
                         {"text", m->text},
                         {"broadcast", m->broadcast}});
    }
    channels[std::string(RoleName(f))] = channel;
  }
  nlohmann::json submission = nullptr;
  std::vector<nlohmann::json> failures;
  for (const auto& e : session.events()) {
    if (const auto* s = std::get_if<events::AnswersSubmitted>(&e.body)) {
      submission = {{"profiles", s->profiles}, {"defaulted", s->defaulted}};
    } else if (const auto* f = std::get_if<events::Finalized>(&e.body)) {
      if (submission.is_null()) submission = nlohmann::json::object();
      submission["score"] = f->score;
      submission["dimension_scores"] = f->dimension_scores;
      submission["optimal"] = f->optimal;
    } else if (const auto* r = std::get_if<events::ReplyFailed>(&e.body)) {
      failures.push_back({{"seq", e.seq},
                          {"follower", RoleName(r->follower)},
                          {"message_seq", r->message_seq}});
    }
  }
  return {{"session_id", created.session_id},
          {"puzzle_id", created.puzzle_id},
          {"test", created.test},
          {"status", StatusName(session.status())},
          {"scenario", puzzle.scenario},
          {"dimensions", dims},
          {"clues", clues},
          {"channels", channels},
          {"undelivered", failures},
          {"time_limit_ms", created.time_limit_ms},
          {"grace_ms", created.grace_ms},
          {"elapsed_ms", session.elapsed_ms()},
          {"remaining_ms", session.remaining_ms()},
          {"submission", submission},
          {"cursor", session.last_seq()}};
}

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {
  if (!options_.clock) options_.clock = SystemClock();
  for (auto& p : options_.bank) {
    auto id = p.id;
    if (!puzzles_.emplace(id, std::make_shared<const Puzzle>(std::move(p))).second) {
      throw ValidationError("InvalidPuzzle", fmt::format("duplicate puzzle id {}", id));
    }
  }
  options_.bank.clear();
  if (!options_.log_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options_.log_dir, ec);
    if (!fs::is_directory(options_.log_dir)) {
      throw IoError(fmt::format("cannot create log directory {}", options_.log_dir));
    }
    ReplayLogs();
  }
}

SessionService::~SessionService() = default;

void SessionService::ReplayLogs() {
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(options_.log_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    auto events = ReadEventLog(path.string());
    if (events.empty()) continue;
    const auto* created = std::get_if<events::Created>(&events.front().body);
    if (!created) {
      throw ValidationError("CorruptLog",
                            fmt::format("{} does not start with Created", path.string()));
    }
    auto it = puzzles_.find(created->puzzle_id);
    if (it == puzzles_.end()) {
      throw ValidationError("UnknownPuzzle",
                            fmt::format("{} refers to puzzle {} missing from the bank",
                                        path.string(), created->puzzle_id));
    }
    auto entry = std::make_shared<Entry>();
    entry->session.emplace(Session::Replay(events, it->second, options_.clock));
    entry->policy = OraclePolicy{};
    fs::path meta = path;
    meta.replace_extension(".meta.json");
    if (fs::exists(meta)) {
      try {
        entry->policy = ParsePolicy(nlohmann::json::parse(Slurp(meta)).at("follower_policy"));
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("CorruptLog", fmt::format("{}: {}", meta.string(), e.what()));
      }
    }
    entry->writer = std::make_unique<EventLogWriter>(path.string());
    entry->logged_seq = entry->session->last_seq();
    sessions_[created->session_id] = entry;
    ++replayed_;
  }
}

void SessionService::Persist(Entry& entry) {
  for (const auto& ev : entry.session->events()) {
    if (ev.seq <= entry.logged_seq) continue;
    if (entry.writer) entry.writer->Append(ev);
    entry.logged_seq = ev.seq;
  }
  entry.cv.notify_all();
}

std::shared_ptr<SessionService::Entry> SessionService::Find(
    const std::string& session_id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) {
    throw ValidationError("UnknownSession", fmt::format("no session {}", session_id));
  }
  return it->second;
}

std::vector<std::string> SessionService::SessionIds() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, e] : sessions_) ids.push_back(id);
  return ids;
}

std::vector<SessionEvent> SessionService::EventsOf(const std::string& session_id) const {
  auto entry = Find(session_id);
  std::lock_guard lock(entry->mu);
  return entry->session->events();
}

ApiResponse SessionService::CreateSession(const std::string& body) {
  try {
    auto doc = ParseBody(body);
    const std::string puzzle_id = RequireString(doc, "puzzle_id");
    nlohmann::json policy_doc = doc.value("follower_policy", nlohmann::json("oracle"));
    std::string leader_id = "leader";
    if (doc.contains("leader_id")) leader_id = RequireString(doc, "leader_id");
    auto pit = puzzles_.find(puzzle_id);
    if (pit == puzzles_.end()) {
      throw ValidationError("UnknownPuzzle", fmt::format("no puzzle {}", puzzle_id));
    }
    AgentPolicy policy = ParsePolicy(policy_doc);

    auto entry = std::make_shared<Entry>();
    entry->policy = policy;
    SessionConfig config;
    config.session_id = NewSessionToken();
    config.puzzle_id = puzzle_id;
    config.leader_id = leader_id;
    config.follower_ids = {"agent-1", "agent-2", "agent-3"};
    config.test = "AI";
    config.time_limit_ms = options_.time_limit_ms;
    config.grace_ms = options_.grace_ms;
    config.clock = options_.clock;
    config.rng_seed = Mix64(std::hash<std::string>{}(config.session_id));
    entry->session.emplace(Session::Create(config, pit->second));
    if (!options_.log_dir.empty()) {
      const fs::path base = fs::path(options_.log_dir) / config.session_id;
      nlohmann::json meta = {{"follower_policy", PolicyName(policy)}};
      std::ofstream(base.string() + ".meta.json") << meta.dump() << "\n";
      entry->writer = std::make_unique<EventLogWriter>(base.string() + ".jsonl");
    }
    {
      std::lock_guard lock(entry->mu);
      Persist(*entry);
    }
    {
      std::lock_guard lock(mu_);
      sessions_[config.session_id] = entry;
    }
    return {201, {{"session_id", config.session_id}, {"cursor", entry->logged_seq}}};
  } catch (const Error& e) {
    return FromError(e);
  }
}

ApiResponse SessionService::GetView(const std::string& session_id) {
  try {
    auto entry = Find(session_id);
    std::lock_guard lock(entry->mu);
    entry->session->Refresh();
    Persist(*entry);
    return {200, LeaderView(*entry->session)};
  } catch (const Error& e) {
    return FromError(e);
  }
}

ApiResponse SessionService::PostMessage(const std::string& session_id,
                                        const std::string& body) {
  std::shared_ptr<Entry> entry;
  try {
    entry = Find(session_id);
    auto doc = ParseBody(body);
    const Role recipient = ParseRole(RequireString(doc, "recipient"));
    const std::string text = RequireString(doc, "text");

    std::lock_guard lock(entry->mu);
    Session& session = *entry->session;
    const std::int64_t before = session.last_seq();
    ApiResponse response;
    try {
      session.Refresh();
      auto posted = session.PostMessage(Role::kLeader, recipient, text);
      Persist(*entry);
      for (const auto& ev : posted) {
        const Role follower = ev.message()->recipient;
        std::string reply;
        try {
          reply = FollowerRespond(entry->policy, MakeFollowerContext(session, follower));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kUpstream) throw;
          session.RecordReplyFailure(follower, ev.seq, e.code());
          Persist(*entry);
          ApiResponse failed = FromError(e);
          failed.body["detail"] = {{"upstream", e.detail()}, {"message_seq", ev.seq}};
          return failed;
        }
        session.Refresh();
        session.PostMessage(follower, Role::kLeader, reply);
        Persist(*entry);
      }
    } catch (const Error&) {
      Persist(*entry);
      throw;
    }
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : session.events()) {
      if (ev.seq > before) events.push_back(LeaderEvent(ev));
    }
    response.body = {{"events", events}, {"cursor", session.last_seq()}};
    return response;
  } catch (const Error& e) {
    return FromError(e);
  }
}

ApiResponse SessionService::SubmitAnswers(const std::string& session_id,
                                          const std::string& body,
                                          const std::string& idempotency_key) {
  try {
    auto entry = Find(session_id);
    std::lock_guard lock(entry->mu);
    if (!idempotency_key.empty()) {
      auto it = entry->idempotent.find(idempotency_key);
      if (it != entry->idempotent.end()) return it->second;
    }
    ApiResponse response;
    try {
      auto doc = ParseBody(body);
      auto it = doc.find("profiles");
      if (it == doc.end() || !it->is_array()) {
        throw ValidationError("MalformedRequest", "'profiles' must be an array");
      }
      std::vector<std::vector<int>> profiles;
      for (const auto& p : *it) {
        if (p.is_null()) {
          profiles.emplace_back();
          continue;
        }
        if (!p.is_array()) {
          throw ValidationError("MalformedRequest", "each profile must be an array");
        }
        std::vector<int> values;
        for (const auto& v : p) {
          if (!v.is_number_integer()) {
            throw ValidationError("MalformedRequest", "allocations must be integers");
          }
          values.push_back(v.get<int>());
        }
        profiles.push_back(std::move(values));
      }
      Session& session = *entry->session;
      session.Refresh();
      SessionEvent fin;
      try {
        fin = session.SubmitAnswers(Role::kLeader, profiles);
      } catch (const Error&) {
        Persist(*entry);
        throw;
      }
      Persist(*entry);
      const auto& f = std::get<events::Finalized>(fin.body);
      nlohmann::json dims = nlohmann::json::array();
      nlohmann::json keys = nlohmann::json::array();
      for (std::size_t d = 0; d < f.dimension_scores.size(); ++d) {
        dims.push_back({{"value", f.dimension_scores[d]}, {"optimal", f.optimal[d]}});
        const auto& key = session.puzzle().answer_keys[d];
        keys.push_back(std::vector<int>(key.allocations().begin(), key.allocations().end()));
      }
      response = {200,
                  {{"score", f.score},
                   {"per_dimension", dims},
                   {"answer_keys", keys},
                   {"cursor", session.last_seq()}}};
    } catch (const Error& e) {
      response = FromError(e);
    }
    if (!idempotency_key.empty() && response.status < 500) {
      entry->idempotent[idempotency_key] = response;
    }
    return response;
  } catch (const Error& e) {
    return FromError(e);
  }
}

ApiResponse SessionService::GetEvents(const std::string& session_id, std::int64_t after,
                                      std::int64_t wait_ms) {
  try {
    if (after < 0) throw ValidationError("MalformedRequest", "after must be >= 0");
    auto entry = Find(session_id);
    std::unique_lock lock(entry->mu);
    entry->session->Refresh();
    Persist(*entry);
    wait_ms = std::clamp<std::int64_t>(wait_ms, 0, options_.max_wait_ms);
    if (wait_ms > 0 && entry->session->last_seq() <= after) {
      entry->cv.wait_for(lock, std::chrono::milliseconds(wait_ms),
                         [&] { return entry->session->last_seq() > after; });
    }
    nlohmann::json events = nlohmann::json::array();
    for (const auto& ev : entry->session->events()) {
      if (ev.seq > after) events.push_back(LeaderEvent(ev));
    }
    return {200, {{"events", events}, {"cursor", entry->session->last_seq()}}};
  } catch (const Error& e) {
    return FromError(e);
  }
}

void SessionService::Mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), kJson);
  };
  auto guarded = [reply](auto fn) {
    return [reply, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        reply(res, fn(req));
      } catch (const Error& e) {
        reply(res, FromError(e));
      } catch (const std::exception& e) {
        reply(res, ErrorResponse(500, "InternalError", e.what()));
      }
    };
  };
  auto int_param = [](const httplib::Request& req, const char* name) -> std::int64_t {
    if (!req.has_param(name)) return 0;
    const std::string v = req.get_param_value(name);
    try {
      std::size_t used = 0;
      long long n = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw ValidationError("MalformedRequest",
                            fmt::format("query parameter {} must be an integer", name));
    }
  };

  server.Post("/sessions", guarded([this](const httplib::Request& req) {
                return CreateSession(req.body);
              }));
  server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req) {
               return GetView(req.matches[1]);
             }));
  server.Post(R"(/sessions/([^/]+)/messages)",
              guarded([this](const httplib::Request& req) {
                return PostMessage(req.matches[1], req.body);
              }));
  server.Post(R"(/sessions/([^/]+)/answers)",
              guarded([this](const httplib::Request& req) {
                return SubmitAnswers(req.matches[1], req.body,
                                     req.get_header_value("Idempotency-Key"));
              }));
  server.Get(R"(/sessions/([^/]+)/events)",
             guarded([this, int_param](const httplib::Request& req) {
               return GetEvents(req.matches[1], int_param(req, "after"),
                                int_param(req, "wait_ms"));
             }));
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(nlohmann::json({{"code", "NotFound"},
                                      {"message", "no such endpoint"},
                                      {"detail", nullptr}})
                          .dump(),
                      kJson);
    }
  });
}

HttpServer::HttpServer(ServiceOptions options)
    : service_(std::make_unique<SessionService>(std::move(options))),
      server_(std::make_unique<httplib::Server>()) {
  service_->Mount(*server_);
}

HttpServer::~HttpServer() = default;

int HttpServer::Bind(const std::string& host, int port) {
  int bound = -1;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (server_->bind_to_port(host, port)) {
    bound = port;
  }
  if (bound < 0) throw IoError(fmt::format("cannot bind {}:{}", host, port));
  return bound;
}

void HttpServer::Listen() {
  {
    std::lock_guard lock(state_mu_);
    if (stop_requested_) return;
    listening_ = true;
  }
  server_->listen_after_bind();
}

void HttpServer::Stop() {
  {
    std::lock_guard lock(state_mu_);
    stop_requested_ = true;
    if (!listening_) return;
  }
  server_->wait_until_ready();
  server_->stop();
}

}  // namespace leaderlab
