// SPDX-License-Identifier: Apache-2.0
#pragma once

// Prompt creation: approach and persona discovery, pair selection on a
// validation slice, few-shot augmentation, and final prompt composition for
// CoT, SC, DIV-SE and IDIV-SE.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "divprompt/error.hpp"
#include "divprompt/extraction.hpp"
#include "divprompt/gateway.hpp"
#include "divprompt/parallel.hpp"
#include "divprompt/strategy.hpp"
#include "divprompt/task.hpp"
#include "divprompt/text.hpp"

namespace divprompt {

/// Discovery ended with fewer distinct approaches than requested.
class DiscoveryExhaustedError : public Error {
 public:
  DiscoveryExhaustedError(const std::string& what, ApproachSet partial)
      : Error(what), partial_(std::move(partial)) {}
  const ApproachSet& partial() const noexcept { return partial_; }

 private:
  ApproachSet partial_;
};

// ---------------------------------------------------------------------------
// Steps 1 and 2: discovery

namespace detail {
inline std::string_view count_word(int n) {
  static constexpr std::string_view words[] = {"zero", "one", "two", "three", "four", "five"};
  return (n >= 0 && n <= 5) ? words[n] : "several";
}

inline std::string strip_brackets(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '<' && c != '>' && c != '{' && c != '}' && c != '*' && c != '"' && c != '[' && c != ']') out += c;
  return std::string(text::trim(out));
}
}  // namespace detail

/// Instruction asking for `b` named approaches in a fixed, parseable format.
inline std::string build_discovery_prompt(std::string_view question, int b, bool has_options = true) {
  if (b < 1 || b > 5) throw ConfigError("approaches per discovery call must be in [1, 5], got " + std::to_string(b));
  if (text::trim(question).empty()) throw ConfigError("discovery question is empty");
  std::string p = "Use " + std::string(detail::count_word(b)) + " distinct approach" + (b == 1 ? "" : "es") +
                  " to solve the given problem accurately.";
  if (has_options) p += " If there is no exact match choose the closest option.";
  p += "\n\nQ: " + std::string(text::trim(question)) + "\n\nUse the following output format:\n";
  for (int k = 1; k <= b; ++k)
    p += "\nApproach " + std::to_string(k) + " <name of the approach> : <Details of Approach " + std::to_string(k) +
         ">\n";
  return p;
}

/// Normalized approach names from the template-compliant lines of a
/// discovery response, in order. Lines numbered outside [1, b] are dropped.
inline std::vector<std::string> parse_discovery_response(std::string_view response, int b) {
  static const std::regex line_re(R"(^[\s*#>_-]*Approach\s*(\d+)\s*[:.)-]?\s*(.+?)\s*:(\s|$))", std::regex::icase);
  std::vector<std::string> names;
  for (auto line : text::lines(response)) {
    std::string s(line);
    std::smatch m;
    if (!std::regex_search(s, m, line_re)) continue;
    int k = std::stoi(m.str(1));
    if (k < 1 || k > b) continue;
    auto name = text::normalize_name(detail::strip_brackets(m.str(2)));
    if (name.empty() || name == "name of the approach") continue;
    names.push_back(std::move(name));
  }
  return names;
}

/// Runs `c` discovery calls over randomly picked questions and keeps the `n`
/// most frequent approach names (first-seen order breaks ties).
inline ApproachSet extract_approaches(const std::vector<std::string>& questions, const DiscoveryConfig& config,
                                      Gateway& gateway, const std::string& model_id, bool has_options = true,
                                      std::uint64_t seed = 1) {
  config.validate();
  if (questions.empty()) throw ConfigError("discovery needs a nonempty dataset");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, questions.size() - 1);
  std::vector<std::size_t> chosen(static_cast<std::size_t>(config.repetitions));
  for (auto& c : chosen) c = pick(rng);

  std::vector<std::vector<std::string>> per_call(chosen.size());
  parallel_for_index(chosen.size(), gateway.max_in_flight(), [&](std::size_t i) {
    auto req = GenerationRequest::user(build_discovery_prompt(questions[chosen[i]], config.approaches_per_call, has_options),
                                       model_id);
    req.session = "discover-" + std::to_string(i);
    per_call[i] = parse_discovery_response(gateway.complete(req).front().text, config.approaches_per_call);
  });

  std::vector<std::string> order;
  std::map<std::string, int> freq;
  for (const auto& names : per_call)
    for (const auto& n : names)
      if (freq[n]++ == 0) order.push_back(n);
  std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) { return freq[a] > freq[b]; });

  ApproachSet out;
  for (const auto& n : order) {
    if (static_cast<int>(out.size()) == config.keep_approaches) break;
    out.push_back({text::slugify(n), n, "", freq[n]});
  }
  if (static_cast<int>(out.size()) < config.keep_approaches)
    throw DiscoveryExhaustedError("only " + std::to_string(out.size()) + " distinct approaches found, wanted " +
                                      std::to_string(config.keep_approaches),
                                  out);
  return out;
}

inline std::string build_persona_prompt(std::string_view task_description, int m) {
  std::string p = "List " + std::to_string(m) +
                  " personas, such as well-known thinkers or professional roles, whose way of thinking would help "
                  "solve the following kind of problem accurately.\n\nTask: " +
                  std::string(text::trim(task_description)) + "\n\nUse the following output format:\n";
  for (int k = 1; k <= m; ++k) p += "\nPersona " + std::to_string(k) + " <description of the persona>\n";
  return p;
}

inline std::vector<std::string> parse_persona_response(std::string_view response) {
  static const std::regex line_re(R"(^[\s*#>_-]*Persona\s*(\d+)\s*[:.)-]?\s*(.+?)\s*$)", std::regex::icase);
  std::vector<std::string> out;
  for (auto line : text::lines(response)) {
    std::string s(line);
    std::smatch m;
    if (!std::regex_search(s, m, line_re)) continue;
    auto d = detail::strip_brackets(m.str(2));
    if (!d.empty() && text::normalize_name(d) != "description of the persona") out.push_back(d);
  }
  return out;
}

/// Asks the model directly for personas; the empty persona is always first.
inline PersonaSet extract_personas(std::string_view task_description, const DiscoveryConfig& config, Gateway& gateway,
                                   const std::string& model_id) {
  PersonaSet out{Persona::empty()};
  if (config.keep_personas == 0) return out;
  auto req = GenerationRequest::user(build_persona_prompt(task_description, config.keep_personas), model_id);
  req.session = "personas";
  std::vector<std::string> names;
  try {
    names = parse_persona_response(gateway.complete(req).front().text);
  } catch (const BackendError&) {
    return out;
  }
  std::vector<std::string> seen;
  for (const auto& n : names) {
    if (static_cast<int>(out.size()) - 1 == config.keep_personas) break;
    auto key = text::normalize_name(n);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    out.push_back({text::slugify(n), n, false});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step 5 helpers (used by scoring and augmentation too)

namespace detail {

inline std::string approach_phrase(const std::string& name) {
  if (text::starts_with_icase(name, "using ")) return name;
  return "using " + name;
}

/// "Thinking like Alan Turing, solve the given problem accurately using algebra."
inline std::string strategy_directive(const StrategyPair& pair) {
  std::string out;
  if (!pair.persona.is_empty) out = pair.persona.description + ", solve";
  else out = "Solve";
  out += " the given problem accurately";
  if (pair.approach) out += " " + approach_phrase(pair.approach->name);
  return out + ".";
}

inline std::string render_shot_question(const FewShotExample& shot) {
  std::string out = "Question: " + shot.question + "\n";
  if (!shot.options.empty()) out += render_options(shot.options) + "\n";
  return out;
}

inline std::string ensure_newline(std::string s) {
  if (!s.empty() && s.back() != '\n') s += '\n';
  return s;
}

inline const AugmentedExample* find_augmented(const std::vector<AugmentedExample>& aug, std::size_t pair_index,
                                              std::size_t shot_index) {
  for (const auto& a : aug)
    if (a.pair_index == pair_index && a.shot_index == shot_index) return &a;
  return nullptr;
}

/// Augmented shots of one pair, in shot order.
inline std::vector<const AugmentedExample*> shots_for_pair(const std::vector<AugmentedExample>& aug,
                                                           std::size_t pair_index) {
  std::vector<const AugmentedExample*> out;
  for (const auto& a : aug)
    if (a.pair_index == pair_index) out.push_back(&a);
  std::stable_sort(out.begin(), out.end(), [](auto* x, auto* y) { return x->shot_index < y->shot_index; });
  return out;
}

}  // namespace detail

/// Material for few-shot modes: the base exemplars and their augmentations.
struct ShotMaterial {
  std::vector<FewShotExample> shots;
  std::vector<AugmentedExample> augmented;  // pair_index refers to the pairs passed to compose_prompts
};

namespace detail {

inline std::string compose_cot(const TaskSpec& task, const TaskRecord& item, const ShotMaterial& material,
                               bool few_shot) {
  std::string p = final_line_instruction(task.kind) + "\n\n";
  if (few_shot) {
    for (const auto& shot : material.shots)
      p += render_shot_question(shot) + "A: " + ensure_newline(shot.base_rationale) + "\n";
    p += render_question(task, item) + "A:";
    return p;
  }
  p += render_question(task, item) + "Think step by step.";
  return p;
}

inline std::string compose_div(const TaskSpec& task, const TaskRecord& item, const ShotMaterial& material,
                               const StrategyPair& pair, std::size_t pair_index, bool few_shot) {
  std::string p = strategy_directive(pair) + "\n" + final_line_instruction(task.kind) + "\n\n";
  if (few_shot) {
    for (const auto* a : shots_for_pair(material.augmented, pair_index)) {
      if (a->shot_index >= material.shots.size()) throw CompositionError("augmented example references a missing shot");
      p += render_shot_question(material.shots[a->shot_index]) + "Approach: <" + pair.label() + ">\n" +
           ensure_newline(a->rationale) + ensure_newline(a->final_line) + "\n";
    }
  }
  p += render_question(task, item) + "Approach: <" + pair.label() + ">\n";
  return p;
}

inline std::string compose_idiv(const TaskSpec& task, const TaskRecord& item, const ShotMaterial& material,
                                const std::vector<StrategyPair>& pairs, bool few_shot) {
  std::string p = "Use " + std::to_string(pairs.size()) +
                  " distinct approaches to solve the given problem accurately, one after another.\n" +
                  final_line_instruction(task.kind) + " Give this final answer separately for every approach.\n\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    p += "Approach " + std::to_string(i + 1) + " <" + pairs[i].label() + ">:\n" + strategy_directive(pairs[i]) + "\n";
    if (few_shot) {
      for (const auto* a : shots_for_pair(material.augmented, i)) {
        if (a->shot_index >= material.shots.size()) throw CompositionError("augmented example references a missing shot");
        p += "\n" + render_shot_question(material.shots[a->shot_index]) + ensure_newline(a->rationale) +
             ensure_newline(a->final_line);
      }
    }
    p += "\n";
  }
  p += render_question(task, item) + "\nUse the following output format:\n";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    p += "Approach " + std::to_string(i + 1) + " <" + pairs[i].label() + "> : <solution using this approach, ending "
         "with its final answer line>\n";
  return p;
}

}  // namespace detail

/// Renders the prompts for one item. DIV_SE yields one prompt per pair,
/// IDIV_SE a single prompt holding every pair's section in order, CoT and SC
/// one prompt each (SC differs from CoT only in sampling, not in text).
inline std::vector<ComposedPrompt> compose_prompts(const std::vector<StrategyPair>& pairs, const ShotMaterial& material,
                                                   const TaskRecord& item, PromptMode mode, const TaskSpec& task,
                                                   bool few_shot) {
  if (mode == PromptMode::CotFs && !few_shot) few_shot = true;
  if (mode == PromptMode::CotZs) few_shot = false;
  if (few_shot && material.shots.empty())
    throw CompositionError(std::string(to_string(mode)) + " in few-shot setting needs few-shot examples");
  std::vector<ComposedPrompt> out;
  switch (mode) {
    case PromptMode::CotZs:
    case PromptMode::CotFs:
    case PromptMode::Sc:
      out.push_back({mode, {}, detail::compose_cot(task, item, material, few_shot), 1});
      break;
    case PromptMode::DivSe:
      if (pairs.empty()) throw CompositionError("DIV_SE needs at least one strategy pair");
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        pairs[i].validate();
        if (few_shot && detail::shots_for_pair(material.augmented, i).empty())
          throw CompositionError("no augmented examples for pair " + pairs[i].id());
        out.push_back({mode, {pairs[i]}, detail::compose_div(task, item, material, pairs[i], i, few_shot), 1});
      }
      break;
    case PromptMode::IdivSe:
      if (pairs.size() < 2) throw CompositionError("IDIV_SE needs at least two strategy pairs");
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        pairs[i].validate();
        if (few_shot && detail::shots_for_pair(material.augmented, i).empty())
          throw CompositionError("no augmented examples for pair " + pairs[i].id());
      }
      out.push_back({mode, pairs, detail::compose_idiv(task, item, material, pairs, few_shot), pairs.size()});
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Step 3: pair selection

/// P x A, persona-major. Persona-only pairs are appended when requested.
inline std::vector<StrategyPair> candidate_pairs(const PersonaSet& personas, const ApproachSet& approaches,
                                                 bool include_persona_only = false) {
  std::vector<StrategyPair> out;
  for (const auto& p : personas)
    for (const auto& a : approaches) out.push_back({p, a, std::nullopt, false});
  if (include_persona_only)
    for (const auto& p : personas)
      if (!p.is_empty) out.push_back({p, std::nullopt, std::nullopt, false});
  return out;
}

/// Top `size` pairs by validation accuracy (descending); ties go to the
/// lexicographically smaller (persona id, approach id).
inline std::vector<StrategyPair> rank_pairs(std::vector<StrategyPair> scored, std::size_t size) {
  if (size > scored.size())
    throw ConfigError("cannot select " + std::to_string(size) + " pairs from " + std::to_string(scored.size()));
  std::stable_sort(scored.begin(), scored.end(), [](const StrategyPair& a, const StrategyPair& b) {
    double sa = a.val_accuracy.value_or(-1.0), sb = b.val_accuracy.value_or(-1.0);
    if (sa != sb) return sa > sb;
    return std::pair(a.persona_id(), a.approach_id()) < std::pair(b.persona_id(), b.approach_id());
  });
  scored.resize(size);
  return scored;
}

/// Accuracy of one pair on the validation items via zero-shot DIV-SE calls.
/// Items whose call fails are skipped and the pair is flagged partial.
inline StrategyPair score_pair(StrategyPair pair, const std::vector<TaskRecord>& validation, const TaskSpec& task,
                               Gateway& gateway, const std::string& model_id) {
  std::size_t completed = 0, correct = 0;
  for (const auto& item : validation) {
    auto prompt = compose_prompts({pair}, {}, item, PromptMode::DivSe, task, false).front();
    try {
      auto text = gateway.complete(GenerationRequest::user(prompt.body, model_id)).front().text;
      ++completed;
      std::optional<ExtractedAnswer> ans;
      try {
        ans = extract_answer(task, item, text);
      } catch (const ExtractionError&) {
      }
      if (grade(task, item, ans)) ++correct;
    } catch (const BackendError&) {
      pair.partial = true;
    }
  }
  pair.val_accuracy = completed ? static_cast<double>(correct) / static_cast<double>(completed) : 0.0;
  return pair;
}

inline std::vector<StrategyPair> select_pairs(const PersonaSet& personas, const ApproachSet& approaches,
                                              const std::vector<TaskRecord>& validation, std::size_t size,
                                              const TaskSpec& task, Gateway& gateway, const std::string& model_id,
                                              bool include_persona_only = false) {
  if (validation.empty()) throw ConfigError("pair selection needs a nonempty validation set");
  auto candidates = candidate_pairs(personas, approaches, include_persona_only);
  if (size > candidates.size())
    throw ConfigError("requested " + std::to_string(size) + " pairs but only " + std::to_string(candidates.size()) +
                      " combinations exist");
  parallel_for_index(candidates.size(), gateway.max_in_flight(), [&](std::size_t i) {
    candidates[i] = score_pair(candidates[i], validation, task, gateway, model_id);
  });
  return rank_pairs(std::move(candidates), size);
}

// ---------------------------------------------------------------------------
// Step 4: augmentation

inline std::string build_augmentation_prompt(const StrategyPair& pair, const FewShotExample& shot, AnswerKind kind) {
  std::string p = detail::strategy_directive(pair) + "\n" + final_line_instruction(kind) + "\n\n";
  p += detail::render_shot_question(shot) + "A: " + detail::ensure_newline(shot.base_rationale) + "\n";
  p += "Approach <" + pair.label() + ">:\n";
  return p;
}

/// Splits a generation into rationale and final answer line and checks that
/// the final answer equals the shot's gold label. nullopt means reject.
inline std::optional<AugmentedExample> accept_augmentation(std::string_view generation, const FewShotExample& shot,
                                                           std::size_t pair_index, std::size_t shot_index) {
  auto ls = text::lines(generation);
  std::size_t final_idx = ls.size();
  for (std::size_t i = ls.size(); i-- > 0;) {
    if (detail::last_answer_clause(ls[i])) {
      final_idx = i;
      break;
    }
  }
  if (final_idx == ls.size()) return std::nullopt;
  std::string final_line(text::trim(ls[final_idx]));
  bool matches = false;
  try {
    if (!shot.options.empty()) {
      matches = std::string(1, extract_choice(final_line, shot.options).as_choice()) == text::upper(shot.gold_answer);
    } else {
      auto gold = parse_rational(shot.gold_answer);
      matches = gold && extract_numeric(final_line).as_numeric() == *gold;
    }
  } catch (const ExtractionError&) {
    return std::nullopt;
  }
  if (!matches) return std::nullopt;
  std::string rationale;
  for (std::size_t i = 0; i < final_idx; ++i) rationale += std::string(ls[i]) + "\n";
  rationale = std::string(text::trim(rationale));
  if (rationale.empty()) return std::nullopt;
  return AugmentedExample{pair_index, shot_index, std::move(rationale), std::move(final_line)};
}

/// One augmented example per (pair, shot), ordered by (pair, shot). Rejected
/// generations are retried as fresh sessions up to `retry_budget` times.
inline std::vector<AugmentedExample> augment_examples(const std::vector<StrategyPair>& pairs,
                                                      const std::vector<FewShotExample>& shots, AnswerKind kind,
                                                      Gateway& gateway, const std::string& model_id,
                                                      int retry_budget = 2) {
  if (pairs.empty() || shots.empty()) throw ConfigError("augmentation needs pairs and few-shot examples");
  if (kind != AnswerKind::Choice && kind != AnswerKind::Numeric)
    throw ConfigError("augmentation supports choice and numeric tasks only");
  for (const auto& s : shots) s.validate();
  const std::size_t cells = pairs.size() * shots.size();
  std::vector<std::optional<AugmentedExample>> results(cells);
  parallel_for_index(cells, gateway.max_in_flight(), [&](std::size_t cell) {
    std::size_t pi = cell / shots.size(), si = cell % shots.size();
    auto prompt = build_augmentation_prompt(pairs[pi], shots[si], kind);
    for (int attempt = 0; attempt <= retry_budget && !results[cell]; ++attempt) {
      auto req = GenerationRequest::user(prompt, model_id);
      if (attempt) req.session = "augment-retry-" + std::to_string(attempt);
      results[cell] = accept_augmentation(gateway.complete(req).front().text, shots[si], pi, si);
    }
  });
  std::vector<std::pair<std::size_t, std::size_t>> failing;
  std::vector<AugmentedExample> out;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    if (results[cell]) out.push_back(std::move(*results[cell]));
    else failing.emplace_back(cell / shots.size(), cell % shots.size());
  }
  if (!failing.empty()) {
    std::string list;
    for (auto [p, s] : failing) list += " (" + std::to_string(p) + "," + std::to_string(s) + ")";
    throw AugmentationError("augmentation retry budget exhausted for (pair, shot):" + list, failing);
  }
  return out;
}

}  // namespace divprompt
