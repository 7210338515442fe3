// SPDX-License-Identifier: Apache-2.0
#pragma once

// Blocksworld simulator, plan validator and BFS oracle.
//
// Rule ids follow the numbered restriction list in the planning prompts:
//   1  one block at a time (self-referencing or unknown-block actions)
//   2  pick up / unstack needs an empty hand
//   3  pick up needs the block on the table and clear
//   4  unstack needs the block really on top of the other
//   5  unstack needs the block clear
//   6  after pick up / unstack the block is held          (effect)
//   7  put down needs the block held
//   8  stack needs the stacked block held
//   9  stack needs the target clear
//   10 after put down / stack the hand is empty             (effect)
//   11 after stack the target is no longer clear            (effect)
// Effect rules are enforced by construction and never raised.

#include <algorithm>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "divprompt/error.hpp"
#include "divprompt/text.hpp"

namespace divprompt::blocks {

using Block = std::string;

enum class ActionKind { PickUp, PutDown, Unstack, Stack };

struct Action {
  ActionKind kind = ActionKind::PickUp;
  Block x;
  Block y;  // empty for one-argument kinds

  static Action pick_up(Block b) { return {ActionKind::PickUp, std::move(b), {}}; }
  static Action put_down(Block b) { return {ActionKind::PutDown, std::move(b), {}}; }
  static Action unstack(Block top, Block from) {
    return {ActionKind::Unstack, std::move(top), std::move(from)};
  }
  static Action stack(Block top, Block onto) {
    return {ActionKind::Stack, std::move(top), std::move(onto)};
  }

  bool binary() const { return kind == ActionKind::Unstack || kind == ActionKind::Stack; }

  /// Lowercase tuple form: "(pick-up a)", "(unstack b c)".
  std::string tuple() const {
    std::string out = "(";
    switch (kind) {
      case ActionKind::PickUp: out += "pick-up"; break;
      case ActionKind::PutDown: out += "put-down"; break;
      case ActionKind::Unstack: out += "unstack"; break;
      case ActionKind::Stack: out += "stack"; break;
    }
    out += ' ' + text::lower(x);
    if (binary()) out += ' ' + text::lower(y);
    return out + ")";
  }

  /// Prose form matching the prompt vocabulary.
  std::string prose() const {
    switch (kind) {
      case ActionKind::PickUp: return "pick up the " + x + " block";
      case ActionKind::PutDown: return "put down the " + x + " block";
      case ActionKind::Unstack:
        return "unstack the " + x + " block from on top of the " + y + " block";
      case ActionKind::Stack: return "stack the " + x + " block on top of the " + y + " block";
    }
    return {};
  }

  friend bool operator==(const Action&, const Action&) = default;
};

using Plan = std::vector<Action>;

/// Positive goal literal: `top` sits directly on `bottom`.
struct On {
  Block top;
  Block bottom;
  friend bool operator==(const On&, const On&) = default;
};
using Goal = std::vector<On>;

enum class Rule : int {
  OneBlockAtATime = 1,
  HandEmptyToLift = 2,
  PickUpFromTableClear = 3,
  UnstackReallyOnTop = 4,
  UnstackClear = 5,
  HoldingAfterLift = 6,
  PutDownHeld = 7,
  StackHeld = 8,
  StackTargetClear = 9,
  HandEmptyAfterPlace = 10,
  TargetNotClearAfterStack = 11,
};

class RuleViolation : public Error {
 public:
  RuleViolation(Rule rule, const std::string& what)
      : Error("rule " + std::to_string(static_cast<int>(rule)) + ": " + what), rule_(rule) {}
  Rule rule() const noexcept { return rule_; }

 private:
  Rule rule_;
};

class State {
 public:
  State() = default;

  /// Builds a state from explicit facts and checks the structural invariants.
  State(std::set<Block> blocks, std::map<Block, Block> on, std::set<Block> on_table,
        std::optional<Block> holding = std::nullopt)
      : blocks_(std::move(blocks)),
        on_(std::move(on)),
        on_table_(std::move(on_table)),
        holding_(std::move(holding)) {
    validate();
  }

  /// Every block on the table, hand empty.
  static State all_on_table(const std::set<Block>& blocks) { return State(blocks, {}, blocks); }

  const std::set<Block>& blocks() const { return blocks_; }
  const std::map<Block, Block>& on() const { return on_; }
  const std::set<Block>& on_table() const { return on_table_; }
  const std::optional<Block>& holding() const { return holding_; }
  bool hand_empty() const { return !holding_.has_value(); }

  bool is_clear(const Block& b) const {
    if (holding_ == b) return false;
    return std::none_of(on_.begin(), on_.end(), [&](const auto& kv) { return kv.second == b; });
  }

  std::set<Block> clear() const {
    std::set<Block> out;
    for (const auto& b : blocks_)
      if (is_clear(b)) out.insert(b);
    return out;
  }

  std::optional<Block> below(const Block& b) const {
    auto it = on_.find(b);
    if (it == on_.end()) return std::nullopt;
    return it->second;
  }

  bool satisfies(const Goal& goal) const {
    return std::all_of(goal.begin(), goal.end(), [&](const On& g) { return below(g.top) == g.bottom; });
  }

  /// Deterministic text key, equal iff the states are equal.
  std::string key() const {
    std::string k;
    for (const auto& [top, bottom] : on_) k += top + '/' + bottom + ';';
    k += '|';
    for (const auto& b : on_table_) k += b + ';';
    k += '|';
    if (holding_) k += *holding_;
    return k;
  }

  /// Throws ConfigError unless every block is in exactly one place, `on`
  /// has no cycles and references only known blocks.
  void validate() const {
    for (const auto& b : blocks_) {
      int places = (on_.count(b) ? 1 : 0) + (on_table_.count(b) ? 1 : 0) + (holding_ == b ? 1 : 0);
      if (places != 1)
        throw ConfigError("block '" + b + "' must be in exactly one of on-table, on, held");
    }
    for (const auto& [top, bottom] : on_) {
      if (!blocks_.count(top) || !blocks_.count(bottom))
        throw ConfigError("on(" + top + ", " + bottom + ") names an unknown block");
      if (top == bottom) throw ConfigError("block '" + top + "' on itself");
      if (holding_ == bottom) throw ConfigError("block on top of the held block '" + bottom + "'");
    }
    for (const auto& b : on_table_)
      if (!blocks_.count(b)) throw ConfigError("unknown block '" + b + "' on table");
    if (holding_ && !blocks_.count(*holding_)) throw ConfigError("holding unknown block");
    std::map<Block, int> supporters;
    for (const auto& [top, bottom] : on_)
      if (++supporters[bottom] > 1) throw ConfigError("two blocks on top of '" + bottom + "'");
    for (const auto& [start, _] : on_) {
      Block cur = start;
      std::size_t steps = 0;
      for (auto next = below(cur); next; next = below(cur)) {
        cur = *next;
        if (++steps > blocks_.size()) throw ConfigError("cycle in on-relation at '" + start + "'");
      }
    }
  }

  friend bool operator==(const State& a, const State& b) {
    return a.blocks_ == b.blocks_ && a.on_ == b.on_ && a.on_table_ == b.on_table_ &&
           a.holding_ == b.holding_;
  }

 private:
  friend State apply_action(const State&, const Action&);

  std::set<Block> blocks_;
  std::map<Block, Block> on_;
  std::set<Block> on_table_;
  std::optional<Block> holding_;
};

/// Successor state, or RuleViolation naming the first broken restriction.
inline State apply_action(const State& s, const Action& a) {
  auto known = [&](const Block& b) { return s.blocks_.count(b) > 0; };
  if (!known(a.x) || (a.binary() && !known(a.y)))
    throw RuleViolation(Rule::OneBlockAtATime, a.tuple() + " names an unknown block");
  if (a.binary() && a.x == a.y)
    throw RuleViolation(Rule::OneBlockAtATime, a.tuple() + " uses the same block twice");

  State next = s;
  switch (a.kind) {
    case ActionKind::PickUp:
      if (!s.hand_empty())
        throw RuleViolation(Rule::HandEmptyToLift, "cannot pick up " + a.x + " while holding " + *s.holding_);
      if (!s.on_table_.count(a.x))
        throw RuleViolation(Rule::PickUpFromTableClear, a.x + " is not on the table");
      if (!s.is_clear(a.x)) throw RuleViolation(Rule::PickUpFromTableClear, a.x + " is not clear");
      next.on_table_.erase(a.x);
      next.holding_ = a.x;
      break;
    case ActionKind::Unstack:
      if (!s.hand_empty())
        throw RuleViolation(Rule::HandEmptyToLift, "cannot unstack " + a.x + " while holding " + *s.holding_);
      if (s.below(a.x) != a.y)
        throw RuleViolation(Rule::UnstackReallyOnTop, a.x + " is not on top of " + a.y);
      if (!s.is_clear(a.x)) throw RuleViolation(Rule::UnstackClear, a.x + " is not clear");
      next.on_.erase(a.x);
      next.holding_ = a.x;
      break;
    case ActionKind::PutDown:
      if (s.holding_ != a.x) throw RuleViolation(Rule::PutDownHeld, "not holding " + a.x);
      next.holding_.reset();
      next.on_table_.insert(a.x);
      break;
    case ActionKind::Stack:
      if (s.holding_ != a.x) throw RuleViolation(Rule::StackHeld, "not holding " + a.x);
      if (!s.is_clear(a.y)) throw RuleViolation(Rule::StackTargetClear, a.y + " is not clear");
      next.holding_.reset();
      next.on_[a.x] = a.y;
      break;
  }
  return next;
}

struct FailedStep {
  std::size_t index = 0;  // zero-based position in the plan
  Rule rule = Rule::OneBlockAtATime;
  std::string message;
};

struct PlanReport {
  bool valid = true;
  std::optional<FailedStep> failed_step;
  State final_state;
  bool goal_satisfied = false;
};

/// Folds apply_action over the plan, stopping at the first violation.
inline PlanReport validate_plan(const State& initial, const Goal& goal, const Plan& plan) {
  PlanReport report;
  State cur = initial;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    try {
      cur = apply_action(cur, plan[i]);
    } catch (const RuleViolation& v) {
      report.valid = false;
      report.failed_step = FailedStep{i, v.rule(), v.what()};
      report.final_state = cur;
      return report;
    }
  }
  report.final_state = cur;
  report.goal_satisfied = cur.satisfies(goal);
  return report;
}

namespace detail {
inline bool cancels(const Action& first, const Action& second) {
  if (first.x != second.x) return false;
  if (first.kind == ActionKind::Stack && second.kind == ActionKind::Unstack) return first.y == second.y;
  if (first.kind == ActionKind::PutDown && second.kind == ActionKind::PickUp) return true;
  return false;
}
}  // namespace detail

/// Removes adjacent (stack x y, unstack x y) and (put-down x, pick-up x) pairs
/// until none remain. A stack-based single pass reaches the same fixpoint as
/// repeated sweeps.
inline Plan canonicalize_plan(const Plan& plan) {
  Plan out;
  out.reserve(plan.size());
  for (const auto& a : plan) {
    if (!out.empty() && detail::cancels(out.back(), a))
      out.pop_back();
    else
      out.push_back(a);
  }
  return out;
}

/// Tuple forms joined by single spaces.
inline std::string plan_string(const Plan& plan) {
  std::string out;
  for (const auto& a : plan) {
    if (!out.empty()) out += ' ';
    out += a.tuple();
  }
  return out;
}

inline std::string canonical_string(const Plan& plan) { return plan_string(canonicalize_plan(plan)); }

inline bool plans_equivalent(const Plan& a, const Plan& b) {
  return canonical_string(a) == canonical_string(b);
}

/// Every action applicable in `s`, in a fixed order.
inline std::vector<Action> applicable_actions(const State& s) {
  std::vector<Action> out;
  if (s.hand_empty()) {
    for (const auto& b : s.blocks()) {
      if (!s.is_clear(b)) continue;
      if (auto under = s.below(b))
        out.push_back(Action::unstack(b, *under));
      else
        out.push_back(Action::pick_up(b));
    }
  } else {
    const Block& held = *s.holding();
    out.push_back(Action::put_down(held));
    for (const auto& b : s.blocks())
      if (b != held && s.is_clear(b)) out.push_back(Action::stack(held, b));
  }
  return out;
}

/// Shortest plan by breadth-first search, or nullopt when the goal is
/// unreachable or `step_budget` expansions run out.
inline std::optional<Plan> oracle_bfs_plan(const State& initial, const Goal& goal,
                                           std::size_t step_budget = 5'000'000) {
  if (initial.satisfies(goal)) return Plan{};
  struct Node {
    State state;
    std::size_t parent;
    Action via;
  };
  std::vector<Node> nodes{{initial, 0, {}}};
  std::unordered_map<std::string, std::size_t> seen{{initial.key(), 0}};
  std::deque<std::size_t> frontier{0};
  std::size_t expansions = 0;
  while (!frontier.empty()) {
    if (++expansions > step_budget) return std::nullopt;
    std::size_t idx = frontier.front();
    frontier.pop_front();
    for (auto& a : applicable_actions(nodes[idx].state)) {
      State next = apply_action(nodes[idx].state, a);
      auto [it, inserted] = seen.emplace(next.key(), nodes.size());
      if (!inserted) continue;
      bool done = next.satisfies(goal);
      nodes.push_back({std::move(next), idx, a});
      if (done) {
        Plan plan;
        for (std::size_t i = nodes.size() - 1; i != 0; i = nodes[i].parent) plan.push_back(nodes[i].via);
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      frontier.push_back(nodes.size() - 1);
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Instance files and natural-language rendering

struct Instance {
  std::string id;
  State initial;
  Goal goal;
};

namespace detail {
// "(on a b)" / "(ontable a)" / "(clear a)" / "(handempty)" / "(holding a)"
inline std::vector<std::string> predicate_tokens(std::string_view p) {
  std::string s(text::trim(p));
  if (s.size() < 2 || s.front() != '(' || s.back() != ')')
    throw ConfigError("predicate must be parenthesized: " + s);
  std::vector<std::string> out;
  for (auto w : text::words(std::string_view(s).substr(1, s.size() - 2))) out.emplace_back(text::lower(w));
  if (out.empty()) throw ConfigError("empty predicate");
  return out;
}
}  // namespace detail

/// Instance record: {"id", "blocks", "init": [predicates], "goal": [predicates]}.
/// `clear` and `handempty` facts are optional and checked for consistency.
inline Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  inst.id = j.value("id", "");
  std::set<Block> blocks;
  for (const auto& b : j.at("blocks")) blocks.insert(text::lower(b.get<std::string>()));
  std::map<Block, Block> on;
  std::set<Block> table, clear;
  std::optional<Block> holding;
  bool hand_empty_fact = false;
  for (const auto& p : j.at("init")) {
    auto t = detail::predicate_tokens(p.get<std::string>());
    if (t[0] == "on" && t.size() == 3) on[t[1]] = t[2];
    else if (t[0] == "ontable" && t.size() == 2) table.insert(t[1]);
    else if (t[0] == "clear" && t.size() == 2) clear.insert(t[1]);
    else if (t[0] == "handempty" && t.size() == 1) hand_empty_fact = true;
    else if (t[0] == "holding" && t.size() == 2) holding = t[1];
    else throw ConfigError("unknown init predicate: " + p.get<std::string>());
  }
  if (hand_empty_fact && holding) throw ConfigError("handempty contradicts holding");
  inst.initial = State(blocks, on, table, holding);
  for (const auto& c : clear)
    if (!inst.initial.is_clear(c)) throw ConfigError("(clear " + c + ") contradicts the stack facts");
  for (const auto& p : j.at("goal")) {
    auto t = detail::predicate_tokens(p.get<std::string>());
    if (t[0] != "on" || t.size() != 3) throw ConfigError("goal supports only (on x y): " + p.get<std::string>());
    if (!blocks.count(t[1]) || !blocks.count(t[2])) throw ConfigError("goal names an unknown block");
    inst.goal.push_back({t[1], t[2]});
  }
  return inst;
}

inline nlohmann::json instance_to_json(const Instance& inst) {
  nlohmann::json j;
  if (!inst.id.empty()) j["id"] = inst.id;
  j["blocks"] = std::vector<std::string>(inst.initial.blocks().begin(), inst.initial.blocks().end());
  auto init = nlohmann::json::array();
  for (const auto& [top, bottom] : inst.initial.on()) init.push_back("(on " + top + " " + bottom + ")");
  for (const auto& b : inst.initial.on_table()) init.push_back("(ontable " + b + ")");
  for (const auto& b : inst.initial.clear()) init.push_back("(clear " + b + ")");
  if (inst.initial.hand_empty()) init.push_back("(handempty)");
  else init.push_back("(holding " + *inst.initial.holding() + ")");
  j["init"] = init;
  auto goal = nlohmann::json::array();
  for (const auto& g : inst.goal) goal.push_back("(on " + g.top + " " + g.bottom + ")");
  j["goal"] = goal;
  return j;
}

namespace detail {
inline std::string join_and(const std::vector<std::string>& facts) {
  std::string out;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (i) out += (i + 1 == facts.size()) ? " and " : ", ";
    out += facts[i];
  }
  return out;
}
}  // namespace detail

/// "the orange block is clear, the hand is empty, the blue block is on top of
/// the red block, ... and the red block is on the table"
inline std::string describe_state(const State& s) {
  std::vector<std::string> facts;
  for (const auto& b : s.clear()) facts.push_back("the " + b + " block is clear");
  if (s.hand_empty()) facts.push_back("the hand is empty");
  else facts.push_back("the hand is holding the " + *s.holding() + " block");
  // stacks bottom-up, starting from table blocks in name order
  for (const auto& base : s.on_table()) {
    Block cur = base;
    for (bool found = true; found;) {
      found = false;
      for (const auto& [top, bottom] : s.on()) {
        if (bottom == cur) {
          facts.push_back("the " + top + " block is on top of the " + bottom + " block");
          cur = top;
          found = true;
          break;
        }
      }
    }
  }
  for (const auto& b : s.on_table()) facts.push_back("the " + b + " block is on the table");
  return detail::join_and(facts);
}

/// "the red block on top of the blue block and the orange block on top of the red block"
inline std::string describe_goal(const Goal& goal) {
  std::vector<std::string> facts;
  for (const auto& g : goal) facts.push_back("the " + g.top + " block on top of the " + g.bottom + " block");
  return detail::join_and(facts);
}

/// The three-block instance used throughout the planning prompts.
inline Instance reference_instance() {
  return instance_from_json(nlohmann::json::parse(R"json({
    "id": "bw3-reference",
    "blocks": ["red", "blue", "orange"],
    "init": ["(ontable red)", "(on blue red)", "(on orange blue)", "(clear orange)", "(handempty)"],
    "goal": ["(on red blue)", "(on orange red)"]
  })json"));
}

}  // namespace divprompt::blocks
