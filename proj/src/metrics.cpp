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

#include "leaderlab/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "leaderlab/error.hpp"
#include "leaderlab/scoring.hpp"

namespace leaderlab {
namespace {

#include "lexicon_data.inc"

std::vector<std::string_view> WhitespaceTokens(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

// Lower-cases, maps the typographic apostrophe to ', and trims leading and
// trailing punctuation.
std::string NormalizeWord(std::string_view token) {
  std::string w;
  for (std::size_t i = 0; i < token.size(); ++i) {
    if (i + 2 < token.size() && static_cast<unsigned char>(token[i]) == 0xE2 &&
        static_cast<unsigned char>(token[i + 1]) == 0x80 &&
        static_cast<unsigned char>(token[i + 2]) == 0x99) {
      w.push_back('\'');
      i += 2;
      continue;
    }
    w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(token[i]))));
  }
  auto keep = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  const auto b = std::find_if(w.begin(), w.end(), keep);
  const auto e = std::find_if(w.rbegin(), w.rend(), keep).base();
  return b < e ? std::string(b, e) : std::string();
}

// Messages sent by `speaker`, with broadcast copies collapsed to one.
std::vector<const events::Message*> SpokenBy(const Transcript& t, Role speaker) {
  std::vector<const events::Message*> out;
  std::set<std::int64_t> broadcasts;
  for (const SessionEvent* ev : t.Messages()) {
    const auto* m = ev->message();
    if (m->sender != speaker) continue;
    if (m->broadcast && !broadcasts.insert(m->message_id).second) continue;
    out.push_back(m);
  }
  return out;
}

int CountQuestionSegments(std::string_view text) {
  int count = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '.' || text[i] == '!' || text[i] == '?') {
      bool question = false;
      while (i < text.size() &&
             (text[i] == '.' || text[i] == '!' || text[i] == '?')) {
        question = question || text[i] == '?';
        ++i;
      }
      count += question ? 1 : 0;
    } else {
      ++i;
    }
  }
  return count;
}

std::string Num(double v) { return fmt::format("{}", v); }

}  // namespace

Lexicon Lexicon::Parse(std::string_view text) {
  std::set<std::string> words;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const std::string w = NormalizeWord(line);
    if (!w.empty()) words.insert(w);
  }
  return Lexicon(std::move(words));
}

Lexicon Lexicon::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read lexicon {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  Lexicon lex = Parse(ss.str());
  if (lex.empty()) {
    throw ValidationError("EmptyLexicon", fmt::format("{} has no words", path));
  }
  return lex;
}

const Lexicon& Lexicon::PluralPronouns() {
  static const Lexicon lex = Parse(kPluralPronounsText);
  return lex;
}

const Lexicon& Lexicon::PositiveAffect() {
  static const Lexicon lex = Parse(kPositiveAffectText);
  return lex;
}

int CountWords(const Transcript& transcript, Role speaker) {
  int n = 0;
  for (const auto* m : SpokenBy(transcript, speaker)) {
    n += static_cast<int>(WhitespaceTokens(m->text).size());
  }
  return n;
}

int CountQuestions(const Transcript& transcript, Role speaker) {
  int n = 0;
  for (const auto* m : SpokenBy(transcript, speaker)) {
    n += CountQuestionSegments(m->text);
  }
  return n;
}

int CountTurns(const Transcript& transcript) {
  int turns = 0;
  for (Role f : kFollowers) {
    std::optional<Role> last;
    for (const SessionEvent* ev : transcript.Channel(f)) {
      const Role sender = ev->message()->sender;
      if (sender != last) ++turns;
      last = sender;
    }
  }
  return turns;
}

double LexiconRate(const Transcript& transcript, Role speaker,
                   const Lexicon& lexicon) {
  if (lexicon.empty()) throw ValidationError("EmptyLexicon", "lexicon is empty");
  int words = 0;
  int hits = 0;
  for (const auto* m : SpokenBy(transcript, speaker)) {
    for (std::string_view tok : WhitespaceTokens(m->text)) {
      ++words;
      if (lexicon.Contains(NormalizeWord(tok))) ++hits;
    }
  }
  return words == 0 ? 0.0 : 100.0 * hits / words;
}

ProcessMetrics ComputeMetrics(const Transcript& transcript,
                              const Lexicon& pronouns, const Lexicon& affect) {
  ProcessMetrics m;
  m.n_words = CountWords(transcript, Role::kLeader);
  m.n_questions = CountQuestions(transcript, Role::kLeader);
  m.n_turns = CountTurns(transcript);
  m.plural_pronoun_rate = LexiconRate(transcript, Role::kLeader, pronouns);
  m.positive_affect_rate = LexiconRate(transcript, Role::kLeader, affect);
  return m;
}

MetricsTable ComputeMetricsTable(const std::vector<LeaderSessions>& sessions,
                                 const Lexicon& pronouns, const Lexicon& affect) {
  // (test, leader) -> per-metric sums and session count.
  std::map<std::pair<std::string, std::string>, std::pair<std::array<double, 5>, int>>
      acc;
  for (const auto& ls : sessions) {
    auto& [sums, count] = acc[{ls.test, ls.leader_id}];
    for (const auto& t : ls.transcripts) {
      const auto v = ComputeMetrics(t, pronouns, affect).values();
      for (std::size_t k = 0; k < v.size(); ++k) sums[k] += v[k];
      ++count;
    }
  }
  MetricsTable table;
  for (const auto& [key, entry] : acc) {
    const auto& [sums, count] = entry;
    if (count == 0) continue;
    std::array<double, 5> mean{};
    for (std::size_t k = 0; k < 5; ++k) mean[k] = sums[k] / count;
    table.raw.push_back({key.second, key.first,
                         {mean[0], mean[1], mean[2], mean[3], mean[4]}});
  }
  table.standardized = table.raw;
  std::size_t begin = 0;
  while (begin < table.raw.size()) {
    std::size_t end = begin;
    while (end < table.raw.size() && table.raw[end].test == table.raw[begin].test) {
      ++end;
    }
    if (end - begin < 2) {
      throw ValidationError("TooFewValues",
                            fmt::format("test '{}' has fewer than 2 leaders",
                                        table.raw[begin].test));
    }
    std::array<std::vector<double>, 5> columns;
    for (std::size_t i = begin; i < end; ++i) {
      const auto v = table.raw[i].metrics.values();
      for (std::size_t k = 0; k < 5; ++k) columns[k].push_back(v[k]);
    }
    std::array<std::vector<double>, 5> z;
    for (std::size_t k = 0; k < 5; ++k) {
      try {
        z[k] = Standardize(columns[k]);
      } catch (const Error& e) {
        throw ValidationError(e.code(),
                              fmt::format("{} in test '{}': {}", kMetricNames[k],
                                          table.raw[begin].test, e.what()));
      }
    }
    for (std::size_t i = begin; i < end; ++i) {
      auto& m = table.standardized[i].metrics;
      m = {z[0][i - begin], z[1][i - begin], z[2][i - begin], z[3][i - begin],
           z[4][i - begin]};
    }
    begin = end;
  }
  return table;
}

std::string MetricsToCsv(const std::vector<MetricsRow>& rows) {
  std::string out = "leader_id,test";
  for (auto name : kMetricNames) out += fmt::format(",{}", name);
  out += '\n';
  for (const auto& r : rows) {
    out += r.leader_id + "," + r.test;
    for (double v : r.metrics.values()) out += "," + Num(v);
    out += '\n';
  }
  return out;
}

std::vector<LeaderSessions> LoadSessionLogs(const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) {
    throw IoError(fmt::format("{} is not a directory", directory));
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  std::map<std::pair<std::string, std::string>, LeaderSessions> grouped;
  for (const auto& p : paths) {
    auto events = ReadEventLog(p.string());
    if (events.empty()) continue;
    const auto* created = std::get_if<events::Created>(&events.front().body);
    if (!created) {
      throw ValidationError("CorruptLog",
                            fmt::format("{} does not start with Created", p.string()));
    }
    auto& ls = grouped[{created->test, created->leader_id}];
    ls.leader_id = created->leader_id;
    ls.test = created->test;
    ls.transcripts.emplace_back(std::move(events));
  }
  std::vector<LeaderSessions> out;
  for (auto& [key, ls] : grouped) out.push_back(std::move(ls));
  return out;
}

}  // namespace leaderlab
