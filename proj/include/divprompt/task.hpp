// SPDX-License-Identifier: Apache-2.0
#pragma once

// Benchmark tasks: specs, dataset loading, answer extraction and grading.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "divprompt/blocksworld.hpp"
#include "divprompt/coloring.hpp"
#include "divprompt/error.hpp"
#include "divprompt/extraction.hpp"
#include "divprompt/rational.hpp"
#include "divprompt/strategy.hpp"
#include "divprompt/text.hpp"

namespace divprompt {

enum class TaskId { Aqua, Gsm8k, MathCp, Csqa, Blocksworld3, Blocksworld45, GraphColoring };

inline std::string_view to_string(TaskId t) {
  switch (t) {
    case TaskId::Aqua: return "aqua";
    case TaskId::Gsm8k: return "gsm8k";
    case TaskId::MathCp: return "math_cp";
    case TaskId::Csqa: return "csqa";
    case TaskId::Blocksworld3: return "blocksworld3";
    case TaskId::Blocksworld45: return "blocksworld45";
    case TaskId::GraphColoring: return "graph_coloring";
  }
  return "?";
}

inline TaskId parse_task_id(std::string_view s) {
  for (auto t : {TaskId::Aqua, TaskId::Gsm8k, TaskId::MathCp, TaskId::Csqa, TaskId::Blocksworld3,
                 TaskId::Blocksworld45, TaskId::GraphColoring})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown task '" + std::string(s) + "'");
}

enum class GradingRule { ChoiceMatch, RationalMatch, PlanValidates, ColoringVerifies };

struct TaskSpec {
  TaskId id = TaskId::Aqua;
  AnswerKind kind = AnswerKind::Choice;
  int default_ensemble_size = 5;
  GradingRule grading = GradingRule::ChoiceMatch;

  std::string name() const { return std::string(to_string(id)); }
};

/// Ensembles of 5 for GSM8K and AQuA, 3 for planning, coloring and CSQA.
inline TaskSpec task_spec(TaskId id) {
  switch (id) {
    case TaskId::Aqua: return {id, AnswerKind::Choice, 5, GradingRule::ChoiceMatch};
    case TaskId::Gsm8k: return {id, AnswerKind::Numeric, 5, GradingRule::RationalMatch};
    case TaskId::MathCp: return {id, AnswerKind::Numeric, 5, GradingRule::RationalMatch};
    case TaskId::Csqa: return {id, AnswerKind::Choice, 3, GradingRule::ChoiceMatch};
    case TaskId::Blocksworld3:
    case TaskId::Blocksworld45: return {id, AnswerKind::Plan, 3, GradingRule::PlanValidates};
    case TaskId::GraphColoring: return {id, AnswerKind::Coloring, 3, GradingRule::ColoringVerifies};
  }
  throw ConfigError("unknown task");
}

/// One-line description of the task family, used when asking for personas.
inline std::string describe_task(TaskId id) {
  switch (id) {
    case TaskId::Aqua: return "algebraic word problems with five multiple-choice options";
    case TaskId::Gsm8k: return "grade-school math word problems with a numeric answer";
    case TaskId::MathCp: return "competition counting and probability problems with an exact numeric answer";
    case TaskId::Csqa: return "commonsense questions with five multiple-choice options";
    case TaskId::Blocksworld3:
    case TaskId::Blocksworld45: return "Blocksworld planning: find a sequence of block moves reaching a goal arrangement";
    case TaskId::GraphColoring: return "graph coloring: color the vertices so no edge joins two vertices of one color";
  }
  return {};
}

/// One benchmark item. Which members are set depends on the task's answer kind.
struct TaskRecord {
  std::string id;
  std::string question;
  std::vector<ChoiceOption> options;
  std::string gold;  // option label or reduced rational
  std::optional<blocks::Instance> blocks;
  std::optional<coloring::Graph> graph;
};

namespace detail {

/// "A)50", "A) 50", "(A) 50", "A. 50" -> {A, "50"}
inline ChoiceOption parse_option(const std::string& raw, std::size_t index) {
  static const std::regex re(R"(^\s*\(?([A-Za-z])\s*[).:]\s*(.*)$)");
  std::smatch m;
  if (!std::regex_match(raw, m, re)) throw LoadError("malformed option '" + raw + "'", index);
  return {static_cast<char>(std::toupper(static_cast<unsigned char>(m.str(1)[0]))), std::string(text::trim(m.str(2)))};
}

/// Strips LaTeX wrappers from a MATH gold: \frac{a}{b}, \dfrac, \$ and spaces.
inline std::string latex_to_plain(std::string s) {
  static const std::regex frac_re(R"(\\d?frac\{([^{}]*)\}\{([^{}]*)\})");
  s = std::regex_replace(s, frac_re, "($1)/($2)");
  std::string out;
  for (char c : s)
    if (c != '$' && c != '\\' && c != ' ' && c != '(' && c != ')' && c != '{' && c != '}') out += c;
  return out;
}

inline std::string boxed_content(const std::string& solution) {
  auto at = solution.rfind("\\boxed{");
  if (at == std::string::npos) return {};
  std::size_t i = at + 7, depth = 1;
  std::string out;
  for (; i < solution.size() && depth; ++i) {
    if (solution[i] == '{') ++depth;
    if (solution[i] == '}' && --depth == 0) break;
    out += solution[i];
  }
  return out;
}

inline std::vector<nlohmann::json> read_json_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<nlohmann::json> out;
  auto first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '[') {
    try {
      for (auto& j : nlohmann::json::parse(content)) out.push_back(std::move(j));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("malformed JSON array: ") + e.what(), 0);
    }
    return out;
  }
  std::size_t index = 0;
  for (auto line : text::lines(content)) {
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(std::string("malformed JSON line: ") + e.what(), index);
    }
    ++index;
  }
  return out;
}

}  // namespace detail

/// Validates one raw dataset record and normalizes its gold answer.
inline TaskRecord parse_record(const TaskSpec& task, const nlohmann::json& j, std::size_t index) {
  TaskRecord r;
  try {
    switch (task.id) {
      case TaskId::Aqua: {
        r.id = j.value("id", "aqua-" + std::to_string(index));
        r.question = j.at("question").get<std::string>();
        for (const auto& o : j.at("options")) r.options.push_back(detail::parse_option(o.get<std::string>(), index));
        r.gold = text::upper(text::trim(j.at("correct").get<std::string>()));
        break;
      }
      case TaskId::Csqa: {
        r.id = j.value("id", "csqa-" + std::to_string(index));
        const auto& q = j.at("question");
        r.question = q.at("stem").get<std::string>();
        for (const auto& c : q.at("choices"))
          r.options.push_back({text::upper(c.at("label").get<std::string>())[0], c.at("text").get<std::string>()});
        r.gold = text::upper(text::trim(j.at("answerKey").get<std::string>()));
        break;
      }
      case TaskId::Gsm8k: {
        r.id = j.value("id", "gsm8k-" + std::to_string(index));
        r.question = j.at("question").get<std::string>();
        auto answer = j.at("answer").get<std::string>();
        auto marker = answer.rfind("####");
        if (marker == std::string::npos) throw LoadError("answer lacks a '####' marker", index);
        auto value = parse_rational(text::trim(std::string_view(answer).substr(marker + 4)));
        if (!value) throw LoadError("unparseable gold after '####'", index);
        r.gold = to_string(*value);
        break;
      }
      case TaskId::MathCp: {
        r.id = j.value("id", "math-" + std::to_string(index));
        r.question = j.at("problem").get<std::string>();
        std::string gold = j.contains("answer") ? j.at("answer").get<std::string>()
                                                : detail::boxed_content(j.at("solution").get<std::string>());
        auto value = parse_rational(detail::latex_to_plain(gold));
        if (!value) throw LoadError("gold '" + gold + "' is not a rational number", index);
        r.gold = to_string(*value);
        break;
      }
      case TaskId::Blocksworld3:
      case TaskId::Blocksworld45: {
        r.blocks = blocks::instance_from_json(j);
        r.id = r.blocks->id.empty() ? "bw-" + std::to_string(index) : r.blocks->id;
        break;
      }
      case TaskId::GraphColoring: {
        r.graph = coloring::graph_from_json(j);
        r.id = j.value("id", "graph-" + std::to_string(index));
        break;
      }
    }
  } catch (const LoadError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(e.what(), index);
  } catch (const ConfigError& e) {
    throw LoadError(e.what(), index);
  }
  if (!r.options.empty()) {
    bool found = false;
    for (const auto& o : r.options) found = found || std::string(1, o.label) == r.gold;
    if (r.gold.size() != 1 || !found) throw LoadError("gold label '" + r.gold + "' is not an option", index);
  }
  return r;
}

/// JSON lines (or one JSON array) in the task's native record format.
inline std::vector<TaskRecord> load_dataset(const TaskSpec& task, const std::filesystem::path& path) {
  auto raw = detail::read_json_records(path);
  std::vector<TaskRecord> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out.push_back(parse_record(task, raw[i], i));
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string render_options(const std::vector<ChoiceOption>& options) {
  std::string out = "Answer Choices:";
  for (const auto& o : options) out += std::string(" (") + o.label + ") " + o.text;
  return out;
}

/// Blocksworld problem statement: scenario, initial and goal states, actions
/// and the eleven numbered rules.
inline std::string render_blocks_problem(const blocks::Instance& inst) {
  std::string p = "You are playing with a set of blocks where you need to arrange the blocks into stacks.\n\n";
  p += "<Initial State> : As initial conditions you have that, " + blocks::describe_state(inst.initial) + ".\n";
  p += "<Goal State> : Your goal is to have that " + blocks::describe_goal(inst.goal) + ".\n\n";
  p += "Here are the actions you can do:\n"
       "-Pick up a block from the table\n"
       "-Unstack a block from on top of another block\n"
       "-Put down a block on the table\n"
       "-Stack a block on top of another block\n\n"
       "Rules:\n"
       "1. You can only pick up or unstack one block at a time.\n"
       "2. You can only pick up or unstack a block if your hand is empty.\n"
       "3. You can only pick up a block if the block is on the table and the block is clear. A block is clear if "
       "the block has no other blocks on top of it and if the block is not picked up.\n"
       "4. You can only unstack a block from on top of another block if the block you are unstacking was really "
       "on top of the other block.\n"
       "5. You can only unstack a block from on top of another block if the block you are unstacking is clear.\n"
       "6. Once you pick up or unstack a block, you are holding the block.\n"
       "7. You can only put down a block that you are holding.\n"
       "8. You can only stack a block on top and not under of another block if you are holding the block being "
       "stacked.\n"
       "9. You can only stack a block on top and not under of another block if the block onto which you are "
       "stacking the block is clear.\n"
       "10. Once you put down or stack a block, your hand becomes empty.\n"
       "11. Once you stack a block on top of a second block, the second block is no longer clear.\n";
  return p;
}

inline std::string render_graph_problem(const coloring::Graph& g) {
  return "Color the following graph, described as a set of edges, such that no two vertices on the same edge "
         "share a color.\n\n" +
         coloring::describe_graph(g);
}

/// The item as shown to the model (without any strategy directive).
inline std::string render_question(const TaskSpec& task, const TaskRecord& r) {
  switch (task.kind) {
    case AnswerKind::Choice: return "Question: " + r.question + "\n" + render_options(r.options) + "\n";
    case AnswerKind::Numeric: return "Question: " + r.question + "\n";
    case AnswerKind::Plan: return render_blocks_problem(*r.blocks);
    case AnswerKind::Coloring: return render_graph_problem(*r.graph);
  }
  return {};
}

/// Instruction fixing the shape of the final answer.
inline std::string final_line_instruction(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::Choice:
      return "End with a final line of the form \"The answer is: (X)\" where X is the option label. If there is "
             "no exact match choose the closest option.";
    case AnswerKind::Numeric:
      return "End with a final line of the form \"The answer is: N\" where N is the final number.";
    case AnswerKind::Plan:
      return "After your reasoning, give the final plan between [PLAN] and [PLAN END], one action per line, "
             "for example \"unstack the orange block from on top of the blue block\".";
    case AnswerKind::Coloring:
      return "End with the final coloring, one \"{VERTEX NUMBER}: Color n\" line per vertex.";
  }
  return {};
}

// ---------------------------------------------------------------------------
// Extraction and grading

/// Parses a completion (or one IDIV-SE segment) into the task's answer kind.
inline ExtractedAnswer extract_answer(const TaskSpec& task, const TaskRecord& r, std::string_view text) {
  switch (task.kind) {
    case AnswerKind::Choice: return extract_choice(text, r.options);
    case AnswerKind::Numeric: return extract_numeric(text);
    case AnswerKind::Plan: return extract_plan(text);
    case AnswerKind::Coloring: {
      auto parsed = parse_coloring(text, r.graph->n_vertices());
      return ExtractedAnswer::coloring(std::move(parsed.coloring));
    }
  }
  throw ConfigError("unknown answer kind");
}

inline bool grade(const TaskSpec& task, const TaskRecord& r, const std::optional<ExtractedAnswer>& answer) {
  if (!answer || answer->kind() != task.kind) return false;
  switch (task.grading) {
    case GradingRule::ChoiceMatch: return std::string(1, answer->as_choice()) == r.gold;
    case GradingRule::RationalMatch: {
      auto gold = parse_rational(r.gold);
      return gold && *gold == answer->as_numeric();
    }
    case GradingRule::PlanValidates: {
      auto report = blocks::validate_plan(r.blocks->initial, r.blocks->goal, answer->as_plan());
      return report.valid && report.goal_satisfied;
    }
    case GradingRule::ColoringVerifies: return coloring::verify_coloring(*r.graph, answer->as_coloring()).valid();
  }
  return false;
}

/// Human-readable gold for logs.
inline std::string gold_display(const TaskSpec& task, const TaskRecord& r) {
  switch (task.kind) {
    case AnswerKind::Choice:
    case AnswerKind::Numeric: return r.gold;
    case AnswerKind::Plan: return "goal: " + blocks::describe_goal(r.blocks->goal);
    case AnswerKind::Coloring: return "proper " + std::to_string(r.graph->max_colors()) + "-coloring";
  }
  return {};
}

}  // namespace divprompt
