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

#ifndef LEADERLAB_SERVICE_HPP_
#define LEADERLAB_SERVICE_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "leaderlab/followers.hpp"
#include "leaderlab/puzzle.hpp"
#include "leaderlab/session.hpp"

namespace httplib {
class Server;
}

namespace leaderlab {

struct ServiceOptions {
  std::vector<Puzzle> bank;
  // Session logs are written here and replayed on startup; empty disables
  // persistence.
  std::string log_dir;
  Clock clock;  // defaults to SystemClock()
  std::int64_t time_limit_ms = kDefaultTimeLimitMs;
  std::int64_t grace_ms = kDefaultGraceMs;
  std::int64_t max_wait_ms = 30'000;
};

// Transport-independent response: HTTP status plus JSON body.
struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// Live sessions behind the leader-facing JSON API. Thread-safe; commands on
// one session are serialized.
class SessionService {
 public:
  explicit SessionService(ServiceOptions options);
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  ApiResponse CreateSession(const std::string& body);
  ApiResponse GetView(const std::string& session_id);
  ApiResponse PostMessage(const std::string& session_id, const std::string& body);
  ApiResponse SubmitAnswers(const std::string& session_id, const std::string& body,
                            const std::string& idempotency_key = {});
  // Events with seq > after; waits up to wait_ms for new ones.
  ApiResponse GetEvents(const std::string& session_id, std::int64_t after,
                        std::int64_t wait_ms = 0);

  // Routes the endpoints onto `server`.
  void Mount(httplib::Server& server);

  std::vector<std::string> SessionIds() const;
  std::size_t replayed_sessions() const { return replayed_; }

  // Full event log of a session (tests and tooling).
  std::vector<SessionEvent> EventsOf(const std::string& session_id) const;

 private:
  struct Entry;

  std::shared_ptr<Entry> Find(const std::string& session_id) const;
  void Persist(Entry& entry);
  void ReplayLogs();

  ServiceOptions options_;
  std::map<std::string, std::shared_ptr<const Puzzle>> puzzles_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::size_t replayed_ = 0;
};

// Leader-scoped serialization: the leader's own clues, the star channels and
// timing. Never includes answer keys or unshared follower clues.
nlohmann::json LeaderView(const Session& session);
nlohmann::json LeaderEvent(const SessionEvent& event);

// 32 lower-case hex characters from a cryptographic RNG.
std::string NewSessionToken();

// Blocks serving on host:port until Stop(). Throws IoError when the port
// cannot be bound.
class HttpServer {
 public:
  explicit HttpServer(ServiceOptions options);
  ~HttpServer();
  // Binds; port 0 picks a free port. Returns the bound port.
  int Bind(const std::string& host, int port);
  // Returns immediately if Stop() was already called.
  void Listen();
  // Safe from any thread, before or during Listen().
  void Stop();
  SessionService& service() { return *service_; }

 private:
  std::unique_ptr<SessionService> service_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex state_mu_;
  bool listening_ = false;
  bool stop_requested_ = false;
};

}  // namespace leaderlab

#endif  // LEADERLAB_SERVICE_HPP_
