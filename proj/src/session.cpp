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

#include "leaderlab/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "leaderlab/error.hpp"

namespace leaderlab {
namespace {

Error Corrupt(const std::string& msg) {
  return ValidationError("CorruptLog", msg);
}

bool IsFollower(Role r) {
  return r == Role::kFollower1 || r == Role::kFollower2 || r == Role::kFollower3;
}

bool IsBlank(const std::string& s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

Clock SystemClock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

void SessionConfig::Validate() const {
  if (follower_ids.size() != 3) {
    throw ValidationError("InvalidConfig",
                          fmt::format("a session needs exactly 3 followers, "
                                      "got {}", follower_ids.size()));
  }
  if (time_limit_ms <= 0) {
    throw ValidationError("InvalidConfig", "time_limit must be positive");
  }
  if (grace_ms < 0) {
    throw ValidationError("InvalidConfig", "grace window must be >= 0");
  }
}

std::string_view StatusName(SessionStatus status) {
  switch (status) {
    case SessionStatus::kActive: return "Active";
    case SessionStatus::kExpired: return "Expired";
    case SessionStatus::kFinalized: return "Finalized";
  }
  return "?";
}

std::string_view SessionEvent::kind() const {
  return std::visit(
      Overloaded{[](const events::Created&) { return "Created"; },
                 [](const events::Message&) { return "Message"; },
                 [](const events::AnswersSubmitted&) { return "AnswersSubmitted"; },
                 [](const events::Expired&) { return "Expired"; },
                 [](const events::Finalized&) { return "Finalized"; },
                 [](const events::ReplyFailed&) { return "ReplyFailed"; }},
      body);
}

nlohmann::json EventToJson(const SessionEvent& event) {
  nlohmann::json j = {{"seq", event.seq}, {"at", event.at},
                      {"kind", event.kind()}};
  std::visit(
      Overloaded{
          [&](const events::Created& e) {
            j["session_id"] = e.session_id;
            j["puzzle_id"] = e.puzzle_id;
            j["leader_id"] = e.leader_id;
            j["follower_ids"] = e.follower_ids;
            j["test"] = e.test;
            j["time_limit_ms"] = e.time_limit_ms;
            j["grace_ms"] = e.grace_ms;
            j["started_at_ms"] = e.started_at_ms;
            j["rng_seed"] = e.rng_seed;
          },
          [&](const events::Message& e) {
            j["sender"] = RoleName(e.sender);
            j["recipient"] = RoleName(e.recipient);
            j["text"] = e.text;
            j["message_id"] = e.message_id;
            j["broadcast"] = e.broadcast;
          },
          [&](const events::AnswersSubmitted& e) {
            j["profiles"] = e.profiles;
            j["defaulted"] = e.defaulted;
          },
          [&](const events::Expired&) {},
          [&](const events::Finalized& e) {
            j["score"] = e.score;
            j["dimension_scores"] = e.dimension_scores;
            j["optimal"] = e.optimal;
          },
          [&](const events::ReplyFailed& e) {
            j["follower"] = RoleName(e.follower);
            j["message_seq"] = e.message_seq;
            j["reason"] = e.reason;
          }},
      event.body);
  return j;
}

SessionEvent EventFromJson(const nlohmann::json& j) {
  SessionEvent ev;
  try {
    ev.seq = j.at("seq").get<std::int64_t>();
    ev.at = j.at("at").get<std::int64_t>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "Created") {
      events::Created e;
      e.session_id = j.at("session_id").get<std::string>();
      e.puzzle_id = j.at("puzzle_id").get<std::string>();
      e.leader_id = j.at("leader_id").get<std::string>();
      e.follower_ids = j.at("follower_ids").get<std::vector<std::string>>();
      e.test = j.at("test").get<std::string>();
      e.time_limit_ms = j.at("time_limit_ms").get<std::int64_t>();
      e.grace_ms = j.at("grace_ms").get<std::int64_t>();
      e.started_at_ms = j.at("started_at_ms").get<std::int64_t>();
      e.rng_seed = j.at("rng_seed").get<std::uint64_t>();
      ev.body = std::move(e);
    } else if (kind == "Message") {
      events::Message e;
      e.sender = ParseRole(j.at("sender").get<std::string>());
      e.recipient = ParseRole(j.at("recipient").get<std::string>());
      e.text = j.at("text").get<std::string>();
      e.message_id = j.at("message_id").get<std::int64_t>();
      e.broadcast = j.at("broadcast").get<bool>();
      ev.body = std::move(e);
    } else if (kind == "AnswersSubmitted") {
      events::AnswersSubmitted e;
      e.profiles = j.at("profiles").get<std::vector<std::vector<int>>>();
      e.defaulted = j.at("defaulted").get<std::vector<bool>>();
      ev.body = std::move(e);
    } else if (kind == "Expired") {
      ev.body = events::Expired{};
    } else if (kind == "Finalized") {
      events::Finalized e;
      e.score = j.at("score").get<double>();
      e.dimension_scores = j.at("dimension_scores").get<std::vector<double>>();
      e.optimal = j.at("optimal").get<std::vector<bool>>();
      ev.body = std::move(e);
    } else if (kind == "ReplyFailed") {
      events::ReplyFailed e;
      e.follower = ParseRole(j.at("follower").get<std::string>());
      e.message_seq = j.at("message_seq").get<std::int64_t>();
      e.reason = j.at("reason").get<std::string>();
      ev.body = std::move(e);
    } else {
      throw Corrupt(fmt::format("unknown event kind '{}'", kind));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Corrupt(e.what());
  } catch (const Error& e) {
    if (e.code() == "CorruptLog") throw;
    throw Corrupt(e.what());
  }
  return ev;
}

Transcript::Transcript(std::vector<SessionEvent> events)
    : events_(std::move(events)) {}

std::vector<const SessionEvent*> Transcript::Channel(Role follower) const& {
  std::vector<const SessionEvent*> out;
  for (const auto& ev : events_) {
    const auto* m = ev.message();
    if (m && (m->sender == follower || m->recipient == follower)) {
      out.push_back(&ev);
    }
  }
  return out;
}

std::vector<const SessionEvent*> Transcript::Messages() const& {
  std::vector<const SessionEvent*> out;
  for (const auto& ev : events_) {
    if (ev.message()) out.push_back(&ev);
  }
  return out;
}

Session Session::Create(SessionConfig config,
                        std::shared_ptr<const Puzzle> puzzle) {
  config.Validate();
  if (!puzzle) throw ValidationError("UnknownPuzzle", "no puzzle supplied");
  if (config.puzzle_id.empty()) config.puzzle_id = puzzle->id;
  if (config.puzzle_id != puzzle->id) {
    throw ValidationError("UnknownPuzzle",
                          fmt::format("puzzle '{}' does not match '{}'",
                                      config.puzzle_id, puzzle->id));
  }
  if (!config.clock) config.clock = SystemClock();
  Session s(std::move(puzzle), std::move(config.clock));
  events::Created created;
  created.session_id = config.session_id;
  created.puzzle_id = config.puzzle_id;
  created.leader_id = config.leader_id;
  created.follower_ids = config.follower_ids;
  created.test = config.test;
  created.time_limit_ms = config.time_limit_ms;
  created.grace_ms = config.grace_ms;
  created.started_at_ms = s.clock_();
  created.rng_seed = config.rng_seed;
  s.events_.push_back(SessionEvent{1, 0, std::move(created)});
  return s;
}

const events::Created& Session::created() const {
  return std::get<events::Created>(events_.front().body);
}

std::int64_t Session::Now() const {
  return std::max<std::int64_t>(clock_() - created().started_at_ms,
                                events_.back().at);
}

std::int64_t Session::elapsed_ms() const { return Now(); }

std::int64_t Session::remaining_ms() const {
  return std::max<std::int64_t>(0, created().time_limit_ms - Now());
}

std::optional<events::Finalized> Session::result() const {
  if (status_ != SessionStatus::kFinalized) return std::nullopt;
  return std::get<events::Finalized>(events_.back().body);
}

SessionEvent& Session::Append(std::int64_t at, EventBody body) {
  events_.push_back(SessionEvent{events_.back().seq + 1, at, std::move(body)});
  return events_.back();
}

void Session::Refresh() {
  const auto& c = created();
  const std::int64_t now = clock_() - c.started_at_ms;
  if (status_ == SessionStatus::kActive && now >= c.time_limit_ms) {
    Append(std::max(c.time_limit_ms, events_.back().at), events::Expired{});
    status_ = SessionStatus::kExpired;
  }
  if (status_ == SessionStatus::kExpired &&
      now >= c.time_limit_ms + c.grace_ms) {
    Finalize(std::max(c.time_limit_ms + c.grace_ms, events_.back().at),
             std::vector<std::vector<int>>(puzzle_->answer_keys.size()));
  }
}

std::vector<SessionEvent> Session::PostMessage(Role sender, Role recipient,
                                               std::string text) {
  if (status_ == SessionStatus::kFinalized) {
    throw ValidationError("SessionFinalized", "session is finalized");
  }
  const bool topology_ok =
      (sender == Role::kLeader && (IsFollower(recipient) || recipient == Role::kAll)) ||
      (IsFollower(sender) && recipient == Role::kLeader);
  if (!topology_ok) {
    throw ValidationError(
        "StarTopologyViolation",
        fmt::format("{} cannot message {}", RoleName(sender), RoleName(recipient)));
  }
  if (IsBlank(text)) throw ValidationError("EmptyMessage", "message is empty");
  Refresh();
  if (status_ == SessionStatus::kExpired) {
    throw ValidationError("SessionExpired", "the time limit has passed");
  }
  if (status_ == SessionStatus::kFinalized) {
    throw ValidationError("SessionFinalized", "session is finalized");
  }
  const std::int64_t at = Now();
  const std::int64_t id = next_message_id_++;
  std::vector<SessionEvent> out;
  if (recipient == Role::kAll) {
    for (Role f : kFollowers) {
      out.push_back(Append(at, events::Message{sender, f, text, id, true}));
    }
  } else {
    out.push_back(
        Append(at, events::Message{sender, recipient, std::move(text), id, false}));
  }
  return out;
}

SessionEvent Session::Finalize(std::int64_t at,
                               const std::vector<std::vector<int>>& raw) {
  const auto& keys = puzzle_->answer_keys;
  events::AnswersSubmitted submitted;
  std::vector<CredenceProfile> profiles;
  for (std::size_t d = 0; d < keys.size(); ++d) {
    if (raw[d].empty()) {
      profiles.push_back(CredenceProfile::Flat(keys[d].size()));
      submitted.defaulted.push_back(true);
    } else {
      profiles.push_back(CredenceProfile::Validate(raw[d], keys[d].size()));
      submitted.defaulted.push_back(false);
    }
    const auto a = profiles.back().allocations();
    submitted.profiles.emplace_back(a.begin(), a.end());
  }
  events::Finalized fin;
  for (std::size_t d = 0; d < keys.size(); ++d) {
    const DimensionScore s = ScoreDimension(profiles[d], keys[d]);
    fin.dimension_scores.push_back(s.value);
    fin.optimal.push_back(s.is_optimal);
  }
  fin.score = ScorePuzzle(profiles, keys);
  Append(at, std::move(submitted));
  status_ = SessionStatus::kFinalized;
  return Append(at, std::move(fin));
}

SessionEvent Session::SubmitAnswers(
    Role submitter, const std::vector<std::vector<int>>& profiles) {
  if (submitter != Role::kLeader) {
    throw ValidationError("NotLeader", "only the leader submits answers");
  }
  if (status_ == SessionStatus::kFinalized) {
    throw ValidationError("AlreadyFinalized", "answers were already submitted");
  }
  Refresh();
  if (status_ == SessionStatus::kFinalized) {
    throw ValidationError("AlreadyFinalized",
                          "the grace window closed and the session was "
                          "finalized with flat answers");
  }
  const auto& keys = puzzle_->answer_keys;
  if (profiles.size() != keys.size()) {
    throw ValidationError("InvalidCredence",
                          fmt::format("{} profiles for {} dimensions",
                                      profiles.size(), keys.size()),
                          "MissingDimension");
  }
  for (std::size_t d = 0; d < keys.size(); ++d) {
    if (profiles[d].empty()) {
      if (status_ == SessionStatus::kActive) {
        throw ValidationError("InvalidCredence",
                              fmt::format("dimension {} has no answer", d),
                              "MissingDimension");
      }
      continue;
    }
    try {
      CredenceProfile::Validate(profiles[d], keys[d].size());
    } catch (const Error& e) {
      throw ValidationError("InvalidCredence",
                            fmt::format("dimension {}: {}", d, e.what()),
                            e.code());
    }
  }
  return Finalize(Now(), profiles);
}

SessionEvent Session::RecordReplyFailure(Role follower,
                                         std::int64_t message_seq,
                                         std::string reason) {
  if (status_ == SessionStatus::kFinalized) {
    throw ValidationError("SessionFinalized", "session is finalized");
  }
  return Append(Now(), events::ReplyFailed{follower, message_seq,
                                           std::move(reason)});
}

Session Session::Replay(std::span<const SessionEvent> log,
                        std::shared_ptr<const Puzzle> puzzle, Clock clock) {
  if (log.empty()) throw Corrupt("empty event log");
  const auto* created = std::get_if<events::Created>(&log.front().body);
  if (!created || log.front().seq != 1 || log.front().at != 0) {
    throw Corrupt("log must begin with Created at seq 1");
  }
  if (!puzzle || puzzle->id != created->puzzle_id) {
    throw Corrupt(fmt::format("log refers to puzzle '{}'", created->puzzle_id));
  }
  if (created->follower_ids.size() != 3 || created->time_limit_ms <= 0 ||
      created->grace_ms < 0) {
    throw Corrupt("Created event violates the session config invariants");
  }
  if (!clock) {
    const std::int64_t frozen = created->started_at_ms + log.back().at;
    clock = [frozen] { return frozen; };
  }
  Session s(std::move(puzzle), std::move(clock));
  s.events_.push_back(log.front());
  const auto& keys = s.puzzle_->answer_keys;
  const events::AnswersSubmitted* pending = nullptr;

  for (std::size_t i = 1; i < log.size(); ++i) {
    const SessionEvent& ev = log[i];
    if (ev.seq != s.events_.back().seq + 1) {
      throw Corrupt(fmt::format("seq gap before event {}", ev.seq));
    }
    if (ev.at < s.events_.back().at) {
      throw Corrupt(fmt::format("event {} goes back in time", ev.seq));
    }
    if (s.status_ == SessionStatus::kFinalized) {
      throw Corrupt(fmt::format("event {} after Finalized", ev.seq));
    }
    if (pending && !std::holds_alternative<events::Finalized>(ev.body)) {
      throw Corrupt("AnswersSubmitted must be followed by Finalized");
    }
    std::visit(
        Overloaded{
            [&](const events::Created&) { throw Corrupt("duplicate Created"); },
            [&](const events::Message& m) {
              if (s.status_ != SessionStatus::kActive ||
                  ev.at >= created->time_limit_ms) {
                throw Corrupt(fmt::format("message {} outside the time limit",
                                          ev.seq));
              }
              const bool ok =
                  (m.sender == Role::kLeader && IsFollower(m.recipient)) ||
                  (IsFollower(m.sender) && m.recipient == Role::kLeader);
              if (!ok || (m.broadcast && m.sender != Role::kLeader) ||
                  IsBlank(m.text)) {
                throw Corrupt(fmt::format("message {} breaks the star topology",
                                          ev.seq));
              }
              s.next_message_id_ = std::max(s.next_message_id_, m.message_id + 1);
            },
            [&](const events::AnswersSubmitted& a) {
              if (a.profiles.size() != keys.size() ||
                  a.defaulted.size() != keys.size()) {
                throw Corrupt("answer count does not match the puzzle");
              }
              pending = &a;
            },
            [&](const events::Expired&) {
              if (s.status_ != SessionStatus::kActive ||
                  ev.at < created->time_limit_ms) {
                throw Corrupt("Expired before the time limit");
              }
              s.status_ = SessionStatus::kExpired;
            },
            [&](const events::Finalized& f) {
              if (!pending) throw Corrupt("Finalized without answers");
              std::vector<CredenceProfile> profiles;
              try {
                for (std::size_t d = 0; d < keys.size(); ++d) {
                  profiles.push_back(
                      CredenceProfile::Validate(pending->profiles[d], keys[d].size()));
                }
              } catch (const Error& e) {
                throw Corrupt(fmt::format("logged answers invalid: {}", e.what()));
              }
              const double score = ScorePuzzle(profiles, keys);
              if (std::abs(score - f.score) > 1e-12 ||
                  f.dimension_scores.size() != keys.size()) {
                throw Corrupt("Finalized score does not match the answers");
              }
              pending = nullptr;
              s.status_ = SessionStatus::kFinalized;
            },
            [&](const events::ReplyFailed&) {}},
        ev.body);
    s.events_.push_back(ev);
  }
  if (pending) throw Corrupt("log ends between AnswersSubmitted and Finalized");
  return s;
}

EventLogWriter::EventLogWriter(const std::string& path) : path_(path) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw IoError(fmt::format("cannot open {}: {}", path, std::strerror(errno)));
  }
}

EventLogWriter::~EventLogWriter() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLogWriter::Append(const SessionEvent& event) {
  const std::string line = EventToJson(event).dump() + "\n";
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(fmt::format("write {}: {}", path_, std::strerror(errno)));
    }
    off += static_cast<std::size_t>(n);
  }
  if (std::holds_alternative<events::Finalized>(event.body) && ::fsync(fd_) != 0) {
    throw IoError(fmt::format("fsync {}: {}", path_, std::strerror(errno)));
  }
}

std::vector<SessionEvent> ReadEventLog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read {}", path));
  std::vector<SessionEvent> out;
  std::string line;
  while (std::getline(in, line)) {
    if (IsBlank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Corrupt(fmt::format("{}: {}", path, e.what()));
    }
    out.push_back(EventFromJson(j));
  }
  return out;
}

std::string EventsToJsonLines(std::span<const SessionEvent> events) {
  std::string out;
  for (const auto& ev : events) {
    out += EventToJson(ev).dump();
    out += '\n';
  }
  return out;
}

}  // namespace leaderlab
