// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "divprompt/coloring.hpp"
#include "divprompt/error.hpp"
#include "divprompt/extraction.hpp"
#include "divprompt/gateway.hpp"

namespace divprompt {

/// One ensemble member's answer; nullopt means the member abstained
/// (nothing extractable) and is left out of every tally.
struct Vote {
  std::size_t pair_index = 0;
  std::optional<ExtractedAnswer> answer;
};

struct Ballot {
  AnswerKind kind = AnswerKind::Choice;
  std::vector<Vote> votes;

  void add(std::size_t pair_index, std::optional<ExtractedAnswer> answer) {
    if (answer && answer->kind() != kind)
      throw ConfigError("vote of kind " + std::string(to_string(answer->kind())) + " in a " +
                        std::string(to_string(kind)) + " ballot");
    votes.push_back({pair_index, std::move(answer)});
  }

  std::size_t abstained() const {
    return static_cast<std::size_t>(std::count_if(votes.begin(), votes.end(), [](const Vote& v) { return !v.answer; }));
  }
};

enum class AggregationMethod { Majority, PlanMajority, Verified, Meta };

inline std::string_view to_string(AggregationMethod m) {
  switch (m) {
    case AggregationMethod::Majority: return "majority";
    case AggregationMethod::PlanMajority: return "plan_majority";
    case AggregationMethod::Verified: return "verified";
    case AggregationMethod::Meta: return "meta";
  }
  return "?";
}

struct AggregationResult {
  std::optional<ExtractedAnswer> winner;
  std::map<std::string, std::size_t> tally;  // answer key -> votes
  bool tie = false;
  AggregationMethod method = AggregationMethod::Majority;
  bool fallback = false;  // meta-reasoning fell back to majority
  /// select_verified: (pair index, verdict) for every rejected candidate.
  std::vector<std::pair<std::size_t, coloring::Verdict>> rejected;
  std::string meta_response;
};

/// Modal non-abstaining answer. Ties go to the answer whose earliest vote has
/// the lowest pair index.
inline AggregationResult majority_vote(const Ballot& ballot) {
  if (ballot.votes.empty()) throw ConfigError("majority_vote needs a nonempty ballot");
  AggregationResult r;
  struct Entry {
    std::size_t count = 0;
    std::size_t first_pair = 0;
    const ExtractedAnswer* answer = nullptr;
  };
  std::map<std::string, Entry> entries;
  for (const auto& v : ballot.votes) {
    if (!v.answer) continue;
    auto& e = entries[v.answer->key()];
    if (e.count == 0 || v.pair_index < e.first_pair) {
      e.first_pair = v.pair_index;
      e.answer = &*v.answer;
    }
    ++e.count;
  }
  if (entries.empty()) return r;
  const Entry* best = nullptr;
  std::size_t best_count = 0, at_best = 0;
  for (const auto& [key, e] : entries) {
    r.tally[key] = e.count;
    if (e.count > best_count) {
      best_count = e.count;
      at_best = 1;
    } else if (e.count == best_count) {
      ++at_best;
    }
  }
  for (const auto& [key, e] : entries)
    if (e.count == best_count && (!best || e.first_pair < best->first_pair)) best = &e;
  r.winner = *best->answer;
  r.tie = at_best > 1;
  return r;
}

/// Majority over canonical plan strings; the winner is the canonicalized plan.
inline AggregationResult plan_majority(const Ballot& ballot) {
  if (ballot.kind != AnswerKind::Plan) throw ConfigError("plan_majority needs a plan ballot");
  auto r = majority_vote(ballot);
  r.method = AggregationMethod::PlanMajority;
  if (r.winner) r.winner = ExtractedAnswer::plan(blocks::canonicalize_plan(r.winner->as_plan()), r.winner->raw_span());
  return r;
}

/// First candidate, in pair order, that the coloring verifier accepts.
inline AggregationResult select_verified(const Ballot& ballot, const coloring::Graph& graph) {
  if (ballot.kind != AnswerKind::Coloring) throw ConfigError("select_verified needs a coloring ballot");
  AggregationResult r;
  r.method = AggregationMethod::Verified;
  std::vector<const Vote*> order;
  for (const auto& v : ballot.votes) order.push_back(&v);
  std::stable_sort(order.begin(), order.end(), [](const Vote* a, const Vote* b) { return a->pair_index < b->pair_index; });
  for (const Vote* v : order) {
    if (!v->answer) continue;
    ++r.tally[v->answer->key()];
  }
  for (const Vote* v : order) {
    if (!v->answer) {
      coloring::Verdict unparsed;
      for (int i = 0; i < graph.n_vertices(); ++i) unparsed.missing.push_back(i);
      r.rejected.emplace_back(v->pair_index, unparsed);
      continue;
    }
    auto verdict = coloring::verify_coloring(graph, v->answer->as_coloring());
    if (verdict.valid()) {
      if (!r.winner) r.winner = *v->answer;
    } else {
      r.rejected.emplace_back(v->pair_index, std::move(verdict));
    }
  }
  return r;
}

/// What meta-reasoning needs to know about the task.
struct MetaTask {
  std::string question_block;  // question plus answer choices, as shown to the ensemble
  std::string final_line_instruction;
  std::function<ExtractedAnswer(std::string_view)> extract;
  AnswerKind kind = AnswerKind::Choice;
};

inline std::string meta_prompt(const std::vector<std::string>& responses, const MetaTask& task) {
  std::string p =
      "Below is a question followed by several candidate solutions, each written with a different "
      "reasoning approach. Some of the solutions may contain mistakes. Read all of them, compare their "
      "reasoning steps, identify which steps are wrong, and decide on the single best final answer.\n\n";
  p += task.question_block;
  if (!p.empty() && p.back() != '\n') p += '\n';
  for (std::size_t i = 0; i < responses.size(); ++i) {
    p += "\nSolution " + std::to_string(i + 1) + ":\n" + responses[i];
    if (p.back() != '\n') p += '\n';
  }
  p += "\n" + task.final_line_instruction + "\n";
  return p;
}

/// Aggregation given the meta-reasoning reply. Falls back to majority over
/// the responses when the reply has no extractable answer.
inline AggregationResult meta_reason_from_reply(const std::vector<std::string>& responses, const MetaTask& task,
                                                const std::string& reply) {
  Ballot ballot{task.kind, {}};
  for (std::size_t i = 0; i < responses.size(); ++i) {
    try {
      ballot.add(i, task.extract(responses[i]));
    } catch (const ExtractionError&) {
      ballot.add(i, std::nullopt);
    }
  }
  try {
    AggregationResult r;
    r.method = AggregationMethod::Meta;
    r.winner = task.extract(reply);
    if (!ballot.votes.empty()) r.tally = majority_vote(ballot).tally;
    r.tally.try_emplace(r.winner->key(), 0);
    r.meta_response = reply;
    return r;
  } catch (const ExtractionError&) {
    auto r = majority_vote(ballot);
    r.method = AggregationMethod::Meta;
    r.fallback = true;
    r.meta_response = reply;
    return r;
  }
}

/// Asks the model, in a fresh session, to reason over stored ensemble
/// responses and pick one final answer.
inline AggregationResult meta_reason(const std::vector<std::string>& responses, const MetaTask& task, Gateway& gateway,
                                     const std::string& model_id) {
  if (responses.size() < 2) throw ConfigError("meta_reason needs at least two stored responses");
  auto req = GenerationRequest::user(meta_prompt(responses, task), model_id);
  req.session = "meta";
  return meta_reason_from_reply(responses, task, gateway.complete(req).front().text);
}

}  // namespace divprompt
