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

#include "leaderlab/followers.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "leaderlab/error.hpp"

namespace leaderlab {
namespace {

std::vector<std::string> LowerWords(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '-') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string Lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const ChannelMessage* LastLeaderMessage(const FollowerContext& ctx) {
  for (auto it = ctx.history.rbegin(); it != ctx.history.rend(); ++it) {
    if (it->sender == Role::kLeader) return &*it;
  }
  return nullptr;
}

// Public clues are already in the leader's hands.
bool AlreadyShared(const FollowerContext& ctx, const Clue& clue) {
  if (clue.is_public()) return true;
  return std::any_of(ctx.history.begin(), ctx.history.end(),
                     [&](const ChannelMessage& m) {
                       return m.sender == ctx.role &&
                              m.text.find(clue.text) != std::string::npos;
                     });
}

std::vector<const Clue*> Unshared(const FollowerContext& ctx) {
  std::vector<const Clue*> out;
  for (const Clue& c : ctx.clues) {
    if (!AlreadyShared(ctx, c)) out.push_back(&c);
  }
  return out;
}

// Clues whose option label or dimension keyword appears in the message.
std::vector<const Clue*> Relevant(const FollowerContext& ctx,
                                  const std::vector<const Clue*>& candidates,
                                  std::string_view message) {
  const auto words = LowerWords(message);
  const std::set<std::string> vocab(words.begin(), words.end());
  std::vector<const Clue*> out;
  for (const Clue* c : candidates) {
    if (c->dimension < 0 ||
        c->dimension >= static_cast<int>(ctx.dimensions.size())) {
      continue;
    }
    const Dimension& dim = ctx.dimensions[c->dimension];
    bool hit = c->option < static_cast<int>(dim.options.size()) &&
               vocab.count(Lower(dim.options[c->option])) > 0;
    for (const auto& kw : dim.keywords) hit = hit || vocab.count(kw) > 0;
    if (hit) out.push_back(c);
  }
  return out;
}

std::string Join(const std::vector<const Clue*>& clues) {
  std::string out;
  for (const Clue* c : clues) {
    if (!out.empty()) out += ' ';
    out += c->text;
  }
  return out;
}

const Clue* PickOne(const FollowerContext& ctx, std::string_view question) {
  const auto unshared = Unshared(ctx);
  if (unshared.empty()) return nullptr;
  const auto relevant = Relevant(ctx, unshared, question);
  return relevant.empty() ? unshared.front() : relevant.front();
}

std::string RespondOracle(const FollowerContext& ctx) {
  const auto unshared = Unshared(ctx);
  if (unshared.empty()) return std::string(kNothingFurther);
  const ChannelMessage* last = LastLeaderMessage(ctx);
  if (last) {
    const auto relevant = Relevant(ctx, unshared, last->text);
    if (!relevant.empty()) return Join(relevant);
  }
  return unshared.front()->text;
}

std::string RespondWithholding(const FollowerContext& ctx) {
  const ChannelMessage* last = LastLeaderMessage(ctx);
  if (!last || last->text.find('?') == std::string::npos) return "Okay, noted.";
  const Clue* clue = PickOne(ctx, last->text);
  return clue ? clue->text : std::string(kNothingFurther);
}

std::string RespondChatty(const FollowerContext& ctx) {
  static const std::array<const char*, 4> kSmallTalk = {
      "This reminds me of a documentary I watched last week.",
      "I'm still reading through my notes, give me a moment.",
      "Honestly this is a fun one, I like working on puzzles like this.",
      "My coffee has gone cold while I was reading all of this.",
  };
  const auto turn = std::count_if(
      ctx.history.begin(), ctx.history.end(),
      [&](const ChannelMessage& m) { return m.sender == ctx.role; });
  if (turn % 2 == 1) return kSmallTalk[(turn / 2) % kSmallTalk.size()];
  const ChannelMessage* last = LastLeaderMessage(ctx);
  const Clue* clue = PickOne(ctx, last ? std::string_view(last->text) : "");
  if (!clue) return std::string(kNothingFurther);
  return fmt::format("{} Oh, and one thing from my notes: {}",
                     kSmallTalk[(turn / 2) % kSmallTalk.size()], clue->text);
}

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint ParseEndpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("InvalidPolicy",
                          fmt::format("endpoint '{}' has no scheme", url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, path_start);
  ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  return ep;
}

std::int64_t EstimateTokens(std::string_view text) {
  return static_cast<std::int64_t>(std::ceil(text.size() / 4.0));
}

std::int64_t NowMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

FollowerContext MakeFollowerContext(const Session& session, Role follower) {
  const Puzzle& puzzle = session.puzzle();
  FollowerContext ctx;
  ctx.role = follower;
  ctx.scenario = puzzle.scenario;
  ctx.dimensions = puzzle.dimensions;
  for (const Clue* c : puzzle.CluesFor(follower)) ctx.clues.push_back(*c);
  const Transcript transcript = session.transcript();
  for (const SessionEvent* ev : transcript.Channel(follower)) {
    ctx.history.push_back({ev->message()->sender, ev->message()->text});
  }
  ctx.elapsed_ms = session.elapsed_ms();
  ctx.remaining_ms = session.remaining_ms();
  return ctx;
}

void AuditLog::Record(const nlohmann::json& entry) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.push_back(entry);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    out << entry.dump() << '\n';
  }
}

std::vector<nlohmann::json> AuditLog::entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

LlmPolicy LlmPolicy::FromEnvironment() {
  auto env = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? v : "";
  };
  LlmPolicy p;
  p.endpoint = env("LEADERLAB_LLM_ENDPOINT");
  p.model_name = env("LEADERLAB_LLM_MODEL");
  p.api_key = env("LEADERLAB_LLM_KEY");
  const std::string budget = env("LEADERLAB_LLM_BUDGET_TOKENS");
  if (!budget.empty()) {
    try {
      p.budget = std::make_shared<TokenBudget>(std::stoll(budget));
    } catch (const std::exception&) {
      throw ValidationError("InvalidPolicy",
                            "LEADERLAB_LLM_BUDGET_TOKENS is not an integer");
    }
  }
  if (p.endpoint.empty()) {
    throw ValidationError("InvalidPolicy", "LEADERLAB_LLM_ENDPOINT is not set");
  }
  return p;
}

void LlmPolicy::Validate() const {
  if (endpoint.empty()) throw ValidationError("InvalidPolicy", "no endpoint");
  if (request_timeout_ms <= 0) {
    throw ValidationError("InvalidPolicy", "request timeout must be positive");
  }
  if (max_retries < 0) {
    throw ValidationError("InvalidPolicy", "max_retries must be >= 0");
  }
  if (max_tokens <= 0) {
    throw ValidationError("InvalidPolicy", "max_tokens must be positive");
  }
  ParseEndpoint(endpoint);
}

std::string PolicyName(const AgentPolicy& policy) {
  static constexpr std::array<const char*, 4> kNames = {"oracle", "withholding",
                                                        "chatty", "llm"};
  return kNames[policy.index()];
}

AgentPolicy ParsePolicy(const nlohmann::json& doc) {
  std::string kind;
  if (doc.is_string()) {
    kind = doc.get<std::string>();
  } else if (doc.is_object() && doc.contains("kind") && doc["kind"].is_string()) {
    kind = doc["kind"].get<std::string>();
  } else {
    throw ValidationError("InvalidPolicy", "follower_policy must name a kind");
  }
  kind = Lower(kind);
  if (kind == "oracle") return OraclePolicy{};
  if (kind == "withholding") return WithholdingPolicy{};
  if (kind == "chatty") return ChattyPolicy{};
  if (kind == "llm") {
    LlmPolicy p = LlmPolicy::FromEnvironment();
    if (doc.is_object()) {
      try {
        p.model_name = doc.value("model_name", p.model_name);
        p.temperature = doc.value("temperature", p.temperature);
        p.max_tokens = doc.value("max_tokens", p.max_tokens);
        p.request_timeout_ms = doc.value("request_timeout_ms", p.request_timeout_ms);
        p.max_retries = doc.value("max_retries", p.max_retries);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError("InvalidPolicy", e.what());
      }
    }
    p.Validate();
    return p;
  }
  throw ValidationError("InvalidPolicy",
                        fmt::format("unknown follower policy '{}'", kind));
}

Prompt BuildPrompt(const FollowerContext& ctx) {
  std::string system = fmt::format(
      "You are {}, one of three followers in a team of four solving a "
      "puzzle together. The team has one leader. You can talk only to the "
      "leader; you cannot contact the other followers, and they cannot see "
      "your messages.\n\nScenario: {}\n\nThe team must answer:\n",
      RoleName(ctx.role), ctx.scenario);
  for (std::size_t d = 0; d < ctx.dimensions.size(); ++d) {
    const auto& dim = ctx.dimensions[d];
    std::string opts;
    for (const auto& o : dim.options) opts += (opts.empty() ? "" : ", ") + o;
    system += fmt::format("{}. {} Options: {}.\n", d + 1, dim.question, opts);
  }
  system += "\nYour clues:\n";
  for (const Clue& c : ctx.clues) system += fmt::format("- {}\n", c.text);
  system += fmt::format(
      "\nWhen the leader asks about something your clues cover, quote the "
      "relevant clues word for word. Only state facts that appear in your "
      "clues; never invent information. Keep replies short. About {} seconds "
      "remain.",
      ctx.remaining_ms / 1000);
  Prompt prompt;
  prompt.messages.push_back({"system", std::move(system)});
  for (const ChannelMessage& m : ctx.history) {
    prompt.messages.push_back(
        {m.sender == ctx.role ? "assistant" : "user", m.text});
  }
  return prompt;
}

nlohmann::json ChatRequestBody(const Prompt& prompt, const LlmPolicy& policy) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : prompt.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  return {{"model", policy.model_name},
          {"messages", messages},
          {"temperature", policy.temperature},
          {"max_tokens", policy.max_tokens}};
}

LlmResult LlmComplete(const Prompt& prompt, const LlmPolicy& policy) {
  policy.Validate();
  if (policy.budget && policy.budget->Exhausted()) {
    throw UpstreamError("BudgetExceeded", "LLM token budget is exhausted");
  }
  const Endpoint ep = ParseEndpoint(policy.endpoint);
  httplib::Client client(ep.scheme_host_port);
  const auto secs = policy.request_timeout_ms / 1000;
  const auto usecs = (policy.request_timeout_ms % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!policy.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + policy.api_key);
  }
  const nlohmann::json request = ChatRequestBody(prompt, policy);
  const std::string body = request.dump();

  std::mt19937_64 jitter_rng(policy.jitter_seed);
  std::uniform_real_distribution<double> jitter(0.0, 0.25);
  bool last_timeout = false;
  int last_status = 0;
  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_retries + 1; ++attempt) {
    const std::int64_t t0 = NowMs();
    auto res = client.Post(ep.path, headers, body, "application/json");
    nlohmann::json audit = {{"attempt", attempt},
                            {"model", policy.model_name},
                            {"latency_ms", NowMs() - t0},
                            {"request", request}};
    bool transient = false;
    if (!res) {
      const auto err = res.error();
      last_timeout = err == httplib::Error::Read ||
                     err == httplib::Error::Write ||
                     err == httplib::Error::ConnectionTimeout;
      last_status = 0;
      last_error = httplib::to_string(err);
      audit["error"] = last_error;
      transient = true;
    } else {
      last_timeout = false;
      last_status = res->status;
      audit["status"] = res->status;
      if (res->status == 200) {
        LlmResult out;
        out.attempts = attempt;
        try {
          const auto doc = nlohmann::json::parse(res->body);
          out.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
          if (doc.contains("usage")) {
            out.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
            out.completion_tokens =
                doc["usage"].value("completion_tokens", std::int64_t{0});
          } else {
            out.prompt_tokens = EstimateTokens(body);
            out.completion_tokens = EstimateTokens(out.text);
          }
        } catch (const nlohmann::json::exception& e) {
          audit["error"] = "malformed response";
          if (policy.audit) policy.audit->Record(audit);
          throw UpstreamError("MalformedResponse",
                              fmt::format("cannot read completion: {}", e.what()));
        }
        audit["response"] = out.text;
        audit["prompt_tokens"] = out.prompt_tokens;
        audit["completion_tokens"] = out.completion_tokens;
        if (policy.audit) policy.audit->Record(audit);
        if (policy.budget) {
          policy.budget->Consume(out.prompt_tokens + out.completion_tokens);
        }
        return out;
      }
      transient = res->status == 429 || res->status >= 500;
      last_error = fmt::format("HTTP {}", res->status);
    }
    if (policy.audit) policy.audit->Record(audit);
    if (!transient) break;
    if (attempt <= policy.max_retries) {
      const double delay = static_cast<double>(policy.backoff_base_ms) *
                           std::pow(2.0, attempt - 1) * (1.0 + jitter(jitter_rng));
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<std::int64_t>(delay)));
    }
  }
  if (last_timeout) {
    throw UpstreamError("UpstreamTimeout",
                        fmt::format("LLM endpoint timed out ({})", last_error));
  }
  throw UpstreamError("UpstreamError",
                      fmt::format("LLM endpoint failed: {}", last_error),
                      last_status ? std::to_string(last_status) : last_error);
}

std::string FollowerRespond(const AgentPolicy& policy,
                            const FollowerContext& ctx) {
  return std::visit(
      [&](const auto& p) -> std::string {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, OraclePolicy>) {
          return RespondOracle(ctx);
        } else if constexpr (std::is_same_v<P, WithholdingPolicy>) {
          return RespondWithholding(ctx);
        } else if constexpr (std::is_same_v<P, ChattyPolicy>) {
          return RespondChatty(ctx);
        } else {
          return LlmComplete(BuildPrompt(ctx), p).text;
        }
      },
      policy);
}

}  // namespace leaderlab
