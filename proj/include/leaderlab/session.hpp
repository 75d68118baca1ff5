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

#ifndef LEADERLAB_SESSION_HPP_
#define LEADERLAB_SESSION_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "leaderlab/puzzle.hpp"
#include "leaderlab/scoring.hpp"

namespace leaderlab {

// Milliseconds on an arbitrary monotone time base.
using Clock = std::function<std::int64_t()>;

Clock SystemClock();

// Test and simulation clock; copies share the same time.
class ManualClock {
 public:
  explicit ManualClock(std::int64_t start_ms = 0)
      : now_(std::make_shared<std::int64_t>(start_ms)) {}
  std::int64_t now() const { return *now_; }
  void Advance(std::int64_t ms) { *now_ += ms; }
  void Set(std::int64_t ms) { *now_ = ms; }
  Clock AsClock() const {
    return [p = now_] { return *p; };
  }

 private:
  std::shared_ptr<std::int64_t> now_;
};

inline constexpr std::int64_t kDefaultTimeLimitMs = 360'000;
inline constexpr std::int64_t kDefaultGraceMs = 60'000;

struct SessionConfig {
  std::string session_id;
  std::string puzzle_id;
  std::string leader_id;
  std::vector<std::string> follower_ids;
  std::string test = "AI";
  std::int64_t time_limit_ms = kDefaultTimeLimitMs;
  std::int64_t grace_ms = kDefaultGraceMs;
  Clock clock;
  std::uint64_t rng_seed = 0;

  // Throws InvalidConfig.
  void Validate() const;
};

namespace events {

struct Created {
  std::string session_id;
  std::string puzzle_id;
  std::string leader_id;
  std::vector<std::string> follower_ids;
  std::string test;
  std::int64_t time_limit_ms = 0;
  std::int64_t grace_ms = 0;
  std::int64_t started_at_ms = 0;  // clock reading at creation
  std::uint64_t rng_seed = 0;
  bool operator==(const Created&) const = default;
};

struct Message {
  Role sender = Role::kLeader;
  Role recipient = Role::kFollower1;
  std::string text;
  // Shared by the three copies of a broadcast.
  std::int64_t message_id = 0;
  bool broadcast = false;
  bool operator==(const Message&) const = default;
};

struct AnswersSubmitted {
  std::vector<std::vector<int>> profiles;
  // Dimensions scored as the flat profile because no answer was given.
  std::vector<bool> defaulted;
  bool operator==(const AnswersSubmitted&) const = default;
};

struct Expired {
  bool operator==(const Expired&) const = default;
};

struct Finalized {
  double score = 0.0;
  std::vector<double> dimension_scores;
  std::vector<bool> optimal;
  bool operator==(const Finalized&) const = default;
};

// A leader message was stored but the follower agent failed to answer.
struct ReplyFailed {
  Role follower = Role::kFollower1;
  std::int64_t message_seq = 0;
  std::string reason;
  bool operator==(const ReplyFailed&) const = default;
};

}  // namespace events

using EventBody = std::variant<events::Created, events::Message,
                               events::AnswersSubmitted, events::Expired,
                               events::Finalized, events::ReplyFailed>;

struct SessionEvent {
  std::int64_t seq = 0;
  std::int64_t at = 0;  // ms since session start
  EventBody body;

  const events::Message* message() const {
    return std::get_if<events::Message>(&body);
  }
  std::string_view kind() const;
  bool operator==(const SessionEvent&) const = default;
};

nlohmann::json EventToJson(const SessionEvent& event);
// Throws CorruptLog.
SessionEvent EventFromJson(const nlohmann::json& doc);

enum class SessionStatus { kActive, kExpired, kFinalized };
std::string_view StatusName(SessionStatus status);

// Ordered event list plus the per-follower channel view.
class Transcript {
 public:
  Transcript() = default;
  explicit Transcript(std::vector<SessionEvent> events);

  const std::vector<SessionEvent>& events() const { return events_; }
  // Message events between the leader and `follower`, in seq order.
  std::vector<const SessionEvent*> Channel(Role follower) const&;
  std::vector<const SessionEvent*> Channel(Role follower) const&& = delete;
  std::vector<const SessionEvent*> Messages() const&;
  std::vector<const SessionEvent*> Messages() const&& = delete;

 private:
  std::vector<SessionEvent> events_;
};

// Event-sourced state machine for one leader/three-follower session. Not
// internally synchronized: callers serialize commands per session.
class Session {
 public:
  // Throws InvalidConfig, UnknownPuzzle.
  static Session Create(SessionConfig config,
                        std::shared_ptr<const Puzzle> puzzle);

  // Rebuilds a session from its log. The clock continues the original time
  // base. Throws CorruptLog.
  static Session Replay(std::span<const SessionEvent> events,
                        std::shared_ptr<const Puzzle> puzzle,
                        Clock clock = {});

  // Returns the appended events (three for a broadcast to kAll). Throws
  // StarTopologyViolation, SessionExpired, SessionFinalized, EmptyMessage.
  std::vector<SessionEvent> PostMessage(Role sender, Role recipient,
                                        std::string text);

  // Raw per-dimension allocations; an empty entry marks an unanswered
  // dimension, accepted only during the grace window. Returns the Finalized
  // event. Throws NotLeader, InvalidCredence, AlreadyFinalized,
  // SessionExpired (grace window over).
  SessionEvent SubmitAnswers(Role submitter,
                             const std::vector<std::vector<int>>& profiles);

  SessionEvent RecordReplyFailure(Role follower, std::int64_t message_seq,
                                  std::string reason);

  // Applies time-based transitions: Expired once the limit passes, and a
  // flat-profile finalization once the grace window closes.
  void Refresh();

  SessionStatus status() const { return status_; }
  const std::vector<SessionEvent>& events() const { return events_; }
  Transcript transcript() const { return Transcript(events_); }
  const events::Created& created() const;
  const Puzzle& puzzle() const { return *puzzle_; }
  std::shared_ptr<const Puzzle> shared_puzzle() const { return puzzle_; }
  std::optional<events::Finalized> result() const;

  std::int64_t elapsed_ms() const;
  std::int64_t remaining_ms() const;
  std::int64_t last_seq() const { return events_.back().seq; }

  // Event-level equality: same log, same status.
  bool SameState(const Session& other) const {
    return status_ == other.status_ && events_ == other.events_;
  }

 private:
  Session(std::shared_ptr<const Puzzle> puzzle, Clock clock)
      : puzzle_(std::move(puzzle)), clock_(std::move(clock)) {}

  SessionEvent& Append(std::int64_t at, EventBody body);
  std::int64_t Now() const;
  SessionEvent Finalize(std::int64_t at,
                        const std::vector<std::vector<int>>& raw);

  std::shared_ptr<const Puzzle> puzzle_;
  Clock clock_;
  std::vector<SessionEvent> events_;
  SessionStatus status_ = SessionStatus::kActive;
  std::int64_t next_message_id_ = 1;
};

// Append-only JSON-lines log of one session; fsyncs after Finalized.
class EventLogWriter {
 public:
  explicit EventLogWriter(const std::string& path);
  ~EventLogWriter();
  EventLogWriter(const EventLogWriter&) = delete;
  EventLogWriter& operator=(const EventLogWriter&) = delete;

  void Append(const SessionEvent& event);

 private:
  int fd_ = -1;
  std::string path_;
};

std::vector<SessionEvent> ReadEventLog(const std::string& path);
std::string EventsToJsonLines(std::span<const SessionEvent> events);

}  // namespace leaderlab

#endif  // LEADERLAB_SESSION_HPP_
