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

#ifndef LEADERLAB_FOLLOWERS_HPP_
#define LEADERLAB_FOLLOWERS_HPP_

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "leaderlab/puzzle.hpp"
#include "leaderlab/session.hpp"

namespace leaderlab {

struct ChannelMessage {
  Role sender = Role::kLeader;
  std::string text;
};

// Everything one follower agent may see. Holds only that follower's clues.
struct FollowerContext {
  Role role = Role::kFollower1;
  std::string scenario;
  // Questions and option labels; no answer keys.
  std::vector<Dimension> dimensions;
  std::vector<Clue> clues;
  std::vector<ChannelMessage> history;
  std::int64_t elapsed_ms = 0;
  std::int64_t remaining_ms = 0;
};

FollowerContext MakeFollowerContext(const Session& session, Role follower);

// Shared token allowance for all LLM calls in one run.
class TokenBudget {
 public:
  explicit TokenBudget(std::int64_t tokens) : remaining_(tokens) {}
  std::int64_t remaining() const { return remaining_.load(); }
  bool Exhausted() const { return remaining_.load() <= 0; }
  void Consume(std::int64_t tokens) { remaining_.fetch_sub(tokens); }

 private:
  std::atomic<std::int64_t> remaining_;
};

// JSON-lines audit trail of LLM round-trips; safe to share across threads.
class AuditLog {
 public:
  explicit AuditLog(std::string path = {}) : path_(std::move(path)) {}
  void Record(const nlohmann::json& entry);
  std::vector<nlohmann::json> entries() const;

 private:
  mutable std::mutex mu_;
  std::string path_;
  std::vector<nlohmann::json> entries_;
};

struct OraclePolicy {};
struct WithholdingPolicy {};
struct ChattyPolicy {};

struct LlmPolicy {
  std::string endpoint;  // e.g. http://host:port/v1/chat/completions
  std::string model_name;
  std::string api_key;
  double temperature = 0.7;
  int max_tokens = 200;
  std::int64_t request_timeout_ms = 30'000;
  int max_retries = 2;
  std::int64_t backoff_base_ms = 1'000;
  std::uint64_t jitter_seed = 0;
  std::shared_ptr<TokenBudget> budget;
  std::shared_ptr<AuditLog> audit;

  // Reads LEADERLAB_LLM_ENDPOINT, LEADERLAB_LLM_MODEL, LEADERLAB_LLM_KEY and
  // LEADERLAB_LLM_BUDGET_TOKENS. Throws InvalidPolicy when the endpoint is
  // unset.
  static LlmPolicy FromEnvironment();
  // Throws InvalidPolicy.
  void Validate() const;
};

using AgentPolicy =
    std::variant<OraclePolicy, WithholdingPolicy, ChattyPolicy, LlmPolicy>;

std::string PolicyName(const AgentPolicy& policy);
// "oracle" | "withholding" | "chatty" | "llm" (LLM settings from the
// environment). Throws InvalidPolicy.
AgentPolicy ParsePolicy(const nlohmann::json& doc);

inline constexpr std::string_view kNothingFurther =
    "I have nothing further to add.";

// Scripted policies are pure functions of ctx. The LLM policy performs one
// wire round-trip (with bounded retries). Throws UpstreamTimeout,
// UpstreamError, BudgetExceeded, MalformedResponse.
std::string FollowerRespond(const AgentPolicy& policy, const FollowerContext& ctx);

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct Prompt {
  std::vector<ChatMessage> messages;
};

Prompt BuildPrompt(const FollowerContext& ctx);

struct LlmResult {
  std::string text;
  int attempts = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

nlohmann::json ChatRequestBody(const Prompt& prompt, const LlmPolicy& policy);

LlmResult LlmComplete(const Prompt& prompt, const LlmPolicy& policy);

}  // namespace leaderlab

#endif  // LEADERLAB_FOLLOWERS_HPP_
