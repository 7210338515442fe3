// SPDX-License-Identifier: Apache-2.0
#pragma once

// Domain types shared by prompt construction, extraction and the runner.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "divprompt/error.hpp"

namespace divprompt {

/// A named reasoning strategy, e.g. "using algebra".
struct Approach {
  std::string id;
  std::string name;
  std::string description;
  int frequency = 1;

  friend bool operator==(const Approach&, const Approach&) = default;
};

/// An identity framing, e.g. "Thinking like Alan Turing". The empty persona
/// (no framing at all) is a member of every persona set.
struct Persona {
  std::string id;
  std::string description;
  bool is_empty = false;

  static Persona empty() { return {"none", "", true}; }
  friend bool operator==(const Persona&, const Persona&) = default;
};

using ApproachSet = std::vector<Approach>;
using PersonaSet = std::vector<Persona>;

/// One (persona, approach) combination. The approach may be absent for
/// persona-only strategies.
struct StrategyPair {
  Persona persona;
  std::optional<Approach> approach;
  std::optional<double> val_accuracy;
  bool partial = false;  // scored on a subset of the validation items

  std::string persona_id() const { return persona.is_empty ? std::string() : persona.id; }
  std::string approach_id() const { return approach ? approach->id : std::string(); }

  /// "persona/approach" with empty parts left blank, e.g. "/using-algebra".
  std::string id() const { return persona_id() + "/" + approach_id(); }

  /// Short label used in prompts: the approach name, else the persona.
  std::string label() const {
    if (approach) return approach->name;
    return persona.description;
  }

  void validate() const {
    if (persona.is_empty && !approach) throw ConfigError("strategy pair needs a persona or an approach");
    if (val_accuracy && (*val_accuracy < 0.0 || *val_accuracy > 1.0))
      throw ConfigError("validation accuracy outside [0, 1] for pair " + id());
  }
};

struct ChoiceOption {
  char label = 'A';
  std::string text;
  friend bool operator==(const ChoiceOption&, const ChoiceOption&) = default;
};

struct FewShotExample {
  std::string question;
  std::vector<ChoiceOption> options;
  std::string gold_answer;  // option label for choice tasks, canonical value otherwise
  std::string base_rationale;

  void validate() const {
    if (options.empty()) return;
    bool found = false;
    for (const auto& o : options) found = found || std::string(1, o.label) == gold_answer;
    if (!found) throw ConfigError("few-shot gold answer '" + gold_answer + "' is not an option label");
  }
};

/// A few-shot example re-solved in the style of one strategy pair.
struct AugmentedExample {
  std::size_t pair_index = 0;  // index into the bundle's selected pairs
  std::size_t shot_index = 0;  // index into the bundle's few-shot examples
  std::string rationale;
  std::string final_line;  // e.g. "The answer is: (A) 50"
};

enum class PromptMode { CotZs, CotFs, Sc, DivSe, IdivSe };

inline std::string_view to_string(PromptMode m) {
  switch (m) {
    case PromptMode::CotZs: return "COT_ZS";
    case PromptMode::CotFs: return "COT_FS";
    case PromptMode::Sc: return "SC";
    case PromptMode::DivSe: return "DIV_SE";
    case PromptMode::IdivSe: return "IDIV_SE";
  }
  return "?";
}

inline PromptMode parse_prompt_mode(std::string_view s) {
  for (auto m : {PromptMode::CotZs, PromptMode::CotFs, PromptMode::Sc, PromptMode::DivSe, PromptMode::IdivSe})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown prompt mode '" + std::string(s) + "'");
}

/// A fully rendered prompt ready for one backend call.
struct ComposedPrompt {
  PromptMode mode = PromptMode::CotZs;
  std::vector<StrategyPair> pairs;
  std::string body;
  std::size_t expected_segments = 1;
};

/// Discovery parameters: b approaches per call, c calls, keep n approaches
/// and m personas, validation slice size.
struct DiscoveryConfig {
  int approaches_per_call = 5;
  int repetitions = 100;
  int keep_approaches = 5;
  int keep_personas = 3;
  int validation_size = 10;

  void validate() const {
    if (approaches_per_call < 1 || approaches_per_call > 5)
      throw ConfigError("approaches per call must be in [1, 5]");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (keep_approaches < 1 || keep_approaches > repetitions * approaches_per_call)
      throw ConfigError("approaches kept must be in [1, repetitions * approaches per call]");
    if (keep_personas < 0) throw ConfigError("personas kept must be >= 0");
    if (validation_size < 1 || validation_size >= 20) throw ConfigError("validation size must be in [1, 19]");
  }
};

}  // namespace divprompt
