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

#include <doctest.h>

#include <chrono>
#include <memory>
#include <regex>
#include <thread>

#include "leaderlab/followers.hpp"
#include "leaderlab/puzzle.hpp"
#include "leaderlab/session.hpp"
#include "llm_stub.hpp"
#include "testing.hpp"

namespace {

using leaderlab::ChannelMessage;
using leaderlab::Clue;
using leaderlab::ClueKind;
using leaderlab::FollowerContext;
using leaderlab::Role;
using leaderlab::testing::ErrorCode;
using leaderlab::testing::LlmStub;

const char* kYellow = "The fish does not have yellow spotted scales.";

FollowerContext FishContext() {
  FollowerContext ctx;
  ctx.role = Role::kFollower2;
  ctx.scenario = "A strange fish was caught in the lake.";
  leaderlab::Dimension species;
  species.name = "species";
  species.question = "Which species is it?";
  species.options = {"Yellowfish", "Bluegill", "Pike", "Carp", "Trout"};
  species.keywords = {"fish", "species"};
  leaderlab::Dimension origin;
  origin.name = "origin";
  origin.question = "Where did it come from?";
  origin.options = {"River", "Sea", "Pond", "Farm", "Aquarium"};
  origin.keywords = {"origin", "came"};
  ctx.dimensions = {species, origin};
  Clue yellow;
  yellow.id = "c1";
  yellow.dimension = 0;
  yellow.kind = ClueKind::kDisqualifying;
  yellow.option = 0;
  yellow.owner = Role::kFollower2;
  yellow.text = kYellow;
  Clue sea;
  sea.id = "c2";
  sea.dimension = 1;
  sea.kind = ClueKind::kDisqualifying;
  sea.option = 1;
  sea.owner = Role::kFollower2;
  sea.text = "Salt water would have killed it within an hour.";
  Clue weather;
  weather.id = "c3";
  weather.dimension = 1;
  weather.kind = ClueKind::kDistractor;
  weather.option = 2;
  weather.text = "It rained the morning it was caught.";
  ctx.clues = {yellow, sea, weather};
  ctx.remaining_ms = 300'000;
  return ctx;
}

bool ContainsAnyClue(const std::string& reply, const FollowerContext& ctx) {
  for (const auto& c : ctx.clues) {
    if (reply.find(c.text) != std::string::npos) return true;
  }
  return false;
}

leaderlab::LlmPolicy StubPolicy(const LlmStub& stub) {
  leaderlab::LlmPolicy p;
  p.endpoint = stub.endpoint();
  p.model_name = "stub-model";
  p.backoff_base_ms = 5;
  p.request_timeout_ms = 2000;
  return p;
}

}  // namespace

TEST_CASE("oracle answers a question with the matching clue") {
  auto ctx = FishContext();
  ctx.history.push_back({Role::kLeader, "anything ruling out Yellowfish?"});
  const auto reply = leaderlab::FollowerRespond(leaderlab::OraclePolicy{}, ctx);
  CHECK(reply.find(kYellow) != std::string::npos);
  CHECK(reply.find("Salt water") == std::string::npos);

  ctx.history.push_back({Role::kLeader, "hello there"});
  CHECK(leaderlab::FollowerRespond(leaderlab::OraclePolicy{}, ctx) == kYellow);
}

TEST_CASE("oracle exhaustion") {
  auto ctx = FishContext();
  ctx.clues[2].owner.reset();
  ctx.history.push_back({Role::kLeader, "tell me everything"});
  ctx.history.push_back({Role::kFollower2, std::string(kYellow)});
  ctx.history.push_back({Role::kLeader, "more?"});
  ctx.history.push_back({Role::kFollower2, ctx.clues[1].text});
  ctx.history.push_back({Role::kLeader, "anything else?"});
  CHECK(leaderlab::FollowerRespond(leaderlab::OraclePolicy{}, ctx) ==
        leaderlab::kNothingFurther);
}

TEST_CASE("withholding reveals only on direct questions") {
  auto ctx = FishContext();
  CHECK_FALSE(ContainsAnyClue(leaderlab::FollowerRespond(leaderlab::WithholdingPolicy{}, ctx), ctx));
  ctx.history.push_back({Role::kLeader, "Let us work on the origin."});
  CHECK_FALSE(ContainsAnyClue(leaderlab::FollowerRespond(leaderlab::WithholdingPolicy{}, ctx), ctx));
  ctx.history.push_back({Role::kLeader, "Where did it come from, any origin info?"});
  const auto reply = leaderlab::FollowerRespond(leaderlab::WithholdingPolicy{}, ctx);
  CHECK(reply == ctx.clues[1].text);
}

TEST_CASE("chatty interleaves small talk") {
  auto ctx = FishContext();
  ctx.history.push_back({Role::kLeader, "What about the origin?"});
  const auto first = leaderlab::FollowerRespond(leaderlab::ChattyPolicy{}, ctx);
  CHECK(first.find(ctx.clues[1].text) != std::string::npos);
  ctx.history.push_back({Role::kFollower2, first});
  ctx.history.push_back({Role::kLeader, "And the species?"});
  const auto second = leaderlab::FollowerRespond(leaderlab::ChattyPolicy{}, ctx);
  CHECK_FALSE(ContainsAnyClue(second, ctx));
}

TEST_CASE("scripted policies are deterministic") {
  const auto puzzle = std::make_shared<const leaderlab::Puzzle>(
      leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, 5));
  leaderlab::ManualClock clock;
  leaderlab::SessionConfig cfg;
  cfg.follower_ids = {"a", "b", "c"};
  cfg.clock = clock.AsClock();
  auto s = leaderlab::Session::Create(cfg, puzzle);
  s.PostMessage(Role::kLeader, Role::kAll, "What do you each know?");
  for (Role f : leaderlab::kFollowers) {
    const auto ctx = leaderlab::MakeFollowerContext(s, f);
    for (const leaderlab::AgentPolicy& p :
         {leaderlab::AgentPolicy{leaderlab::OraclePolicy{}},
          leaderlab::AgentPolicy{leaderlab::WithholdingPolicy{}},
          leaderlab::AgentPolicy{leaderlab::ChattyPolicy{}}}) {
      CHECK(leaderlab::FollowerRespond(p, ctx) == leaderlab::FollowerRespond(p, ctx));
    }
  }
}

TEST_CASE("a thorough leader extracts every disqualifying clue from oracles") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto puzzle = std::make_shared<const leaderlab::Puzzle>(
        leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, seed));
    leaderlab::ManualClock clock;
    leaderlab::SessionConfig cfg;
    cfg.follower_ids = {"a", "b", "c"};
    cfg.clock = clock.AsClock();
    auto s = leaderlab::Session::Create(cfg, puzzle);
    int leader_messages = 0;
    for (Role f : leaderlab::kFollowers) {
      for (const auto& dim : puzzle->dimensions) {
        s.PostMessage(Role::kLeader, f, "What do you know about the " + dim.keywords.front() + "?");
        ++leader_messages;
        const auto ctx = leaderlab::MakeFollowerContext(s, f);
        s.PostMessage(f, Role::kLeader, leaderlab::FollowerRespond(leaderlab::OraclePolicy{}, ctx));
      }
    }
    CHECK(leader_messages <= 12);
    std::string heard;
    const auto transcript = s.transcript();
    for (const auto* ev : transcript.Messages()) {
      if (ev->message()->sender != Role::kLeader) heard += ev->message()->text + "\n";
    }
    for (const auto& c : puzzle->clues) {
      if (c.kind == ClueKind::kDisqualifying && c.owner != Role::kLeader) {
        CHECK(heard.find(c.text) != std::string::npos);
      }
    }
  }
}

TEST_CASE("follower replies never carry another seat's private clues") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto puzzle = std::make_shared<const leaderlab::Puzzle>(
        leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, seed));
    leaderlab::ManualClock clock;
    leaderlab::SessionConfig cfg;
    cfg.follower_ids = {"a", "b", "c"};
    cfg.clock = clock.AsClock();
    auto s = leaderlab::Session::Create(cfg, puzzle);
    const leaderlab::AgentPolicy policies[] = {leaderlab::OraclePolicy{},
                                               leaderlab::WithholdingPolicy{},
                                               leaderlab::ChattyPolicy{}};
    for (int turn = 0; turn < 6; ++turn) {
      for (Role f : leaderlab::kFollowers) {
        s.PostMessage(Role::kLeader, f, "Anything about the " +
                                            puzzle->dimensions[turn % 2].keywords.front() + "?");
        const auto ctx = leaderlab::MakeFollowerContext(s, f);
        const auto reply = leaderlab::FollowerRespond(policies[seed % 3], ctx);
        for (const auto& c : puzzle->clues) {
          if (c.owner && *c.owner != f) CHECK(reply.find(c.text) == std::string::npos);
        }
        s.PostMessage(f, Role::kLeader, reply);
      }
    }
  }
}

TEST_CASE("follower context is restricted to the seat") {
  const auto puzzle = std::make_shared<const leaderlab::Puzzle>(
      leaderlab::GeneratePuzzle(leaderlab::PuzzleSpec{}, 3));
  leaderlab::ManualClock clock;
  leaderlab::SessionConfig cfg;
  cfg.follower_ids = {"a", "b", "c"};
  cfg.clock = clock.AsClock();
  auto s = leaderlab::Session::Create(cfg, puzzle);
  s.PostMessage(Role::kLeader, Role::kFollower1, "private to one");
  s.PostMessage(Role::kLeader, Role::kAll, "to all");
  const auto ctx = leaderlab::MakeFollowerContext(s, Role::kFollower3);
  REQUIRE(ctx.history.size() == 1);
  CHECK(ctx.history[0].text == "to all");
  CHECK(ctx.clues.size() == puzzle->CluesFor(Role::kFollower3).size());
}

TEST_CASE("prompt contents") {
  auto ctx = FishContext();
  for (int i = 0; i < 10; ++i) {
    ctx.history.push_back({i % 2 ? Role::kFollower2 : Role::kLeader, "turn " + std::to_string(i)});
  }
  const auto prompt = leaderlab::BuildPrompt(ctx);
  REQUIRE(prompt.messages.size() == 11);
  const auto& system = prompt.messages[0].content;
  CHECK(prompt.messages[0].role == "system");
  CHECK(system.find("Follower2") != std::string::npos);
  CHECK(system.find("talk only to the leader") != std::string::npos);
  CHECK(system.find(ctx.scenario) != std::string::npos);
  CHECK(system.find("never invent") != std::string::npos);
  for (const auto& c : ctx.clues) CHECK(system.find(c.text) != std::string::npos);
  CHECK_FALSE(std::regex_search(system, std::regex("[0-9]+ ?%")));
  for (int i = 0; i < 10; ++i) {
    CHECK(prompt.messages[i + 1].content == "turn " + std::to_string(i));
    CHECK(prompt.messages[i + 1].role == (i % 2 ? "assistant" : "user"));
  }
}

TEST_CASE("policy parsing") {
  CHECK(leaderlab::PolicyName(leaderlab::ParsePolicy("oracle")) == "oracle");
  CHECK(leaderlab::PolicyName(leaderlab::ParsePolicy(nlohmann::json{{"kind", "Chatty"}})) ==
        "chatty");
  CHECK(ErrorCode([] { leaderlab::ParsePolicy("psychic"); }) == "InvalidPolicy");
  CHECK(ErrorCode([] { leaderlab::ParsePolicy(3); }) == "InvalidPolicy");
  leaderlab::LlmPolicy p;
  p.endpoint = "http://127.0.0.1:1/x";
  p.max_retries = -1;
  CHECK(ErrorCode([&] { p.Validate(); }) == "InvalidPolicy");
  p.max_retries = 0;
  p.request_timeout_ms = 0;
  CHECK(ErrorCode([&] { p.Validate(); }) == "InvalidPolicy");
  p.request_timeout_ms = 10;
  p.endpoint = "127.0.0.1:1";
  CHECK(ErrorCode([&] { p.Validate(); }) == "InvalidPolicy");
}

TEST_CASE("llm wire contract against a stub") {
  const auto prompt = leaderlab::BuildPrompt(FishContext());

  SUBCASE("canned reply in one attempt") {
    nlohmann::json seen;
    LlmStub stub([&](int, const nlohmann::json& req, httplib::Response& res) {
      seen = req;
      LlmStub::Reply(res, "I know about scales.");
    });
    auto policy = StubPolicy(stub);
    policy.audit = std::make_shared<leaderlab::AuditLog>();
    policy.budget = std::make_shared<leaderlab::TokenBudget>(1000);
    const auto out = leaderlab::LlmComplete(prompt, policy);
    CHECK(out.text == "I know about scales.");
    CHECK(out.attempts == 1);
    CHECK(seen["model"] == "stub-model");
    CHECK(seen["temperature"] == 0.7);
    CHECK(seen["max_tokens"] == 200);
    CHECK(seen["messages"].size() == prompt.messages.size());
    CHECK(policy.audit->entries().size() == 1);
    CHECK(policy.audit->entries()[0]["completion_tokens"] == 10);
    CHECK(policy.budget->remaining() == 950);
  }

  SUBCASE("two server errors then success") {
    LlmStub stub([](int call, const nlohmann::json&, httplib::Response& res) {
      if (call <= 2) {
        res.status = 500;
      } else {
        LlmStub::Reply(res, "third time");
      }
    });
    auto policy = StubPolicy(stub);
    policy.audit = std::make_shared<leaderlab::AuditLog>();
    const auto out = leaderlab::LlmComplete(prompt, policy);
    CHECK(out.text == "third time");
    CHECK(out.attempts == 3);
    CHECK(policy.audit->entries().size() == 3);
    CHECK(stub.calls() == 3);
  }

  SUBCASE("persistent errors surface after max_retries") {
    LlmStub stub([](int, const nlohmann::json&, httplib::Response& res) { res.status = 503; });
    auto policy = StubPolicy(stub);
    CHECK(ErrorCode([&] { leaderlab::LlmComplete(prompt, policy); }) == "UpstreamError");
    CHECK(stub.calls() == 3);
  }

  SUBCASE("client errors are not retried") {
    LlmStub stub([](int, const nlohmann::json&, httplib::Response& res) { res.status = 401; });
    auto policy = StubPolicy(stub);
    CHECK(leaderlab::testing::ErrorKindOf([&] { leaderlab::LlmComplete(prompt, policy); }) ==
          leaderlab::ErrorKind::kUpstream);
    CHECK(stub.calls() == 1);
  }

  SUBCASE("stall past the timeout") {
    LlmStub stub([](int, const nlohmann::json&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(800));
      LlmStub::Reply(res, "too late");
    });
    auto policy = StubPolicy(stub);
    policy.request_timeout_ms = 200;
    policy.max_retries = 0;
    CHECK(ErrorCode([&] { leaderlab::LlmComplete(prompt, policy); }) == "UpstreamTimeout");
  }

  SUBCASE("malformed body") {
    LlmStub stub([](int, const nlohmann::json&, httplib::Response& res) {
      res.set_content("{\"choices\": []}", "application/json");
    });
    CHECK(ErrorCode([&] { leaderlab::LlmComplete(prompt, StubPolicy(stub)); }) ==
          "MalformedResponse");
  }

  SUBCASE("budget") {
    LlmStub stub([](int, const nlohmann::json&, httplib::Response& res) {
      LlmStub::Reply(res, "ok");
    });
    auto policy = StubPolicy(stub);
    policy.budget = std::make_shared<leaderlab::TokenBudget>(30);
    CHECK(leaderlab::LlmComplete(prompt, policy).text == "ok");
    CHECK(policy.budget->Exhausted());
    CHECK(ErrorCode([&] { leaderlab::LlmComplete(prompt, policy); }) == "BudgetExceeded");
    CHECK(stub.calls() == 1);
  }

  SUBCASE("follower respond goes over the wire") {
    LlmStub stub([](int, const nlohmann::json&, httplib::Response& res) {
      LlmStub::Reply(res, "From the wire.");
    });
    CHECK(leaderlab::FollowerRespond(StubPolicy(stub), FishContext()) == "From the wire.");
  }
}
