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

#ifndef LEADERLAB_METRICS_HPP_
#define LEADERLAB_METRICS_HPP_

#include <array>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "leaderlab/session.hpp"

namespace leaderlab {

struct ProcessMetrics {
  double n_words = 0;
  double n_questions = 0;
  double n_turns = 0;
  double plural_pronoun_rate = 0;   // hits per 100 words
  double positive_affect_rate = 0;  // hits per 100 words

  std::array<double, 5> values() const {
    return {n_words, n_questions, n_turns, plural_pronoun_rate,
            positive_affect_rate};
  }
};

inline constexpr std::array<std::string_view, 5> kMetricNames = {
    "n_words", "n_questions", "n_turns", "plural_pronoun_rate",
    "positive_affect_rate"};

// Lower-case word list. File format: one word per line, UTF-8, '#' starts a
// comment.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::set<std::string> words) : words_(std::move(words)) {}

  static Lexicon Load(const std::string& path);
  static Lexicon Parse(std::string_view text);
  static const Lexicon& PluralPronouns();
  static const Lexicon& PositiveAffect();

  bool Contains(const std::string& word) const { return words_.count(word) > 0; }
  bool empty() const { return words_.empty(); }
  std::size_t size() const { return words_.size(); }

 private:
  std::set<std::string> words_;
};

// Whitespace-delimited tokens of `speaker`'s messages; broadcast copies are
// counted once.
int CountWords(const Transcript& transcript, Role speaker);
// Sentence segments (split at runs of . ! ?) that end with '?'.
int CountQuestions(const Transcript& transcript, Role speaker);
// Per channel, maximal runs of consecutive same-sender messages, summed.
int CountTurns(const Transcript& transcript);
// Case-insensitive whole-word hits x 100 / word count; 0 when there are no
// words. Throws EmptyLexicon.
double LexiconRate(const Transcript& transcript, Role speaker,
                   const Lexicon& lexicon);

// Leader-side measures of one transcript.
ProcessMetrics ComputeMetrics(const Transcript& transcript,
                              const Lexicon& pronouns = Lexicon::PluralPronouns(),
                              const Lexicon& affect = Lexicon::PositiveAffect());

struct LeaderSessions {
  std::string leader_id;
  std::string test;
  std::vector<Transcript> transcripts;
};

struct MetricsRow {
  std::string leader_id;
  std::string test;
  ProcessMetrics metrics;
};

struct MetricsTable {
  std::vector<MetricsRow> raw;
  std::vector<MetricsRow> standardized;
};

// Leader means over sessions, then z-scored within each test. Rows sorted by
// (test, leader_id). Throws TooFewValues (fewer than 2 leaders in a test),
// ZeroVariance.
MetricsTable ComputeMetricsTable(const std::vector<LeaderSessions>& sessions,
                                 const Lexicon& pronouns = Lexicon::PluralPronouns(),
                                 const Lexicon& affect = Lexicon::PositiveAffect());

// Header: leader_id,test,n_words,n_questions,n_turns,plural_pronoun_rate,
// positive_affect_rate
std::string MetricsToCsv(const std::vector<MetricsRow>& rows);

// Groups every *.jsonl session log under `directory` by (leader, test).
std::vector<LeaderSessions> LoadSessionLogs(const std::string& directory);

}  // namespace leaderlab

#endif  // LEADERLAB_METRICS_HPP_
