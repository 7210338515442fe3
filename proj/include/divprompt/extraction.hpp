// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "divprompt/blocksworld.hpp"
#include "divprompt/coloring.hpp"
#include "divprompt/error.hpp"
#include "divprompt/rational.hpp"
#include "divprompt/strategy.hpp"
#include "divprompt/text.hpp"

namespace divprompt {

enum class AnswerKind { Choice, Numeric, Plan, Coloring };

inline std::string_view to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::Choice: return "choice";
    case AnswerKind::Numeric: return "numeric";
    case AnswerKind::Plan: return "plan";
    case AnswerKind::Coloring: return "coloring";
  }
  return "?";
}

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// A normalized task answer. Exactly one alternative of `value` is held and
/// it always matches `kind()`.
class ExtractedAnswer {
 public:
  using Value = std::variant<char, Rational, blocks::Plan, coloring::Coloring>;

  static ExtractedAnswer choice(char label, Span span = {}) { return {Value(label), span}; }
  static ExtractedAnswer numeric(Rational r, Span span = {}) { return {Value(std::move(r)), span}; }
  static ExtractedAnswer plan(blocks::Plan p, Span span = {}) { return {Value(std::move(p)), span}; }
  static ExtractedAnswer coloring(coloring::Coloring c, Span span = {}) { return {Value(std::move(c)), span}; }

  AnswerKind kind() const { return static_cast<AnswerKind>(value_.index()); }
  char as_choice() const { return std::get<char>(value_); }
  const Rational& as_numeric() const { return std::get<Rational>(value_); }
  const blocks::Plan& as_plan() const { return std::get<blocks::Plan>(value_); }
  const coloring::Coloring& as_coloring() const { return std::get<coloring::Coloring>(value_); }
  const Span& raw_span() const { return span_; }

  /// Equality key used for voting: the label, the reduced rational, the
  /// canonical plan string, or the rendered coloring.
  std::string key() const {
    switch (kind()) {
      case AnswerKind::Choice: return std::string(1, as_choice());
      case AnswerKind::Numeric: return to_string(as_numeric());
      case AnswerKind::Plan: return blocks::canonical_string(as_plan());
      case AnswerKind::Coloring: return coloring::render_coloring(as_coloring());
    }
    return {};
  }

 private:
  ExtractedAnswer(Value v, Span s) : value_(std::move(v)), span_(s) {}
  Value value_;
  Span span_;
};

namespace detail {

// "The answer is", "answer:", "Final answer is" -- but not "Answer Choices:".
inline const std::regex& answer_clause_re() {
  static const std::regex re(R"(\banswer(\s+is)?\s*:|\banswer\s+is\b)", std::regex::icase);
  return re;
}

/// Offset just past the last answer clause, if any.
inline std::optional<std::size_t> last_answer_clause(std::string_view text) {
  std::optional<std::size_t> pos;
  std::string s(text);
  for (std::sregex_iterator it(s.begin(), s.end(), answer_clause_re()), end; it != end; ++it)
    pos = static_cast<std::size_t>(it->position() + it->length());
  return pos;
}

inline std::size_t line_end(std::string_view text, std::size_t from) {
  auto e = text.find('\n', from);
  return e == std::string_view::npos ? text.size() : e;
}

inline bool has_label(const std::vector<char>& labels, char c) {
  return std::find(labels.begin(), labels.end(), c) != labels.end();
}

}  // namespace detail

/// Option label from the last "answer is" clause, falling back to the last
/// parenthesized option label anywhere in the text.
inline ExtractedAnswer extract_choice(std::string_view text, const std::vector<char>& labels) {
  if (labels.empty()) throw ConfigError("extract_choice needs at least one option label");
  std::vector<char> upper;
  for (char l : labels) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(l))));
  static const std::regex paren_re(R"(\(\s*([A-Za-z])\s*\))");
  static const std::regex bare_re(R"(^[\s:*"'`]*([A-Z])(?![A-Za-z]))");

  if (auto clause = detail::last_answer_clause(text)) {
    std::size_t end = detail::line_end(text, *clause);
    std::string tail(text.substr(*clause, end - *clause));
    std::smatch m;
    if (std::regex_search(tail, m, paren_re) || std::regex_search(tail, m, bare_re)) {
      char c = static_cast<char>(std::toupper(static_cast<unsigned char>(m.str(1)[0])));
      if (detail::has_label(upper, c)) {
        std::size_t at = *clause + static_cast<std::size_t>(m.position(1));
        return ExtractedAnswer::choice(c, {at, at + 1});
      }
    }
  }
  std::string s(text);
  std::optional<ExtractedAnswer> last;
  for (std::sregex_iterator it(s.begin(), s.end(), paren_re), e; it != e; ++it) {
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>((*it)[1].str()[0])));
    if (detail::has_label(upper, c)) {
      auto at = static_cast<std::size_t>(it->position(1));
      last = ExtractedAnswer::choice(c, {at, at + 1});
    }
  }
  if (last) return *last;
  throw ExtractionError("no option label found");
}

inline ExtractedAnswer extract_choice(std::string_view text, const std::vector<ChoiceOption>& options) {
  std::vector<char> labels;
  for (const auto& o : options) labels.push_back(o.label);
  return extract_choice(text, labels);
}

/// Last number in the final answer clause, as an exact rational. Commas,
/// currency signs and trailing units are ignored. Falls back to a "####"
/// marker or a \boxed{} value when no clause is present.
inline ExtractedAnswer extract_numeric(std::string_view text) {
  static const std::regex num_re(R"([-+]?\$?\s?\d[\d,]*(?:\.\d+)?(?:\s*/\s*\d+(?:\.\d+)?)?)");
  auto last_number = [&](std::size_t from, std::size_t to) -> std::optional<ExtractedAnswer> {
    std::string region(text.substr(from, to - from));
    std::optional<ExtractedAnswer> found;
    for (std::sregex_iterator it(region.begin(), region.end(), num_re), e; it != e; ++it) {
      std::string tok;
      for (char c : it->str())
        if (c != '$' && c != ' ') tok += c;
      if (auto r = parse_rational(tok)) {
        std::size_t at = from + static_cast<std::size_t>(it->position());
        found = ExtractedAnswer::numeric(*r, {at, at + static_cast<std::size_t>(it->length())});
      }
    }
    return found;
  };
  if (auto clause = detail::last_answer_clause(text)) {
    if (auto a = last_number(*clause, detail::line_end(text, *clause))) return *a;
    throw ExtractionError("answer clause without a number");
  }
  if (auto marker = text.rfind("####"); marker != std::string_view::npos) {
    if (auto a = last_number(marker + 4, detail::line_end(text, marker + 4))) return *a;
  }
  if (auto boxed = text.rfind("\\boxed{"); boxed != std::string_view::npos) {
    auto close = text.find('}', boxed);
    if (close != std::string_view::npos)
      if (auto a = last_number(boxed + 7, close)) return *a;
  }
  throw ExtractionError("no numeric answer found");
}

// ---------------------------------------------------------------------------
// Blocksworld plans

namespace detail {

inline std::string_view strip_list_marker(std::string_view line) {
  static const std::regex marker_re(
      R"(^\s*(?:(?:step\s*)?\d+\s*[.):-]|[-*]|•|step\s*\d+\s*[:.)]?|<?action>?\s*:)\s*)", std::regex::icase);
  std::string s(line);
  std::smatch m;
  if (std::regex_search(s, m, marker_re)) line.remove_prefix(static_cast<std::size_t>(m.length()));
  return text::trim(line);
}

inline std::optional<blocks::ActionKind> verb_kind(std::string_view verb) {
  std::string v;
  for (char c : text::lower(verb))
    if (c != '-' && c != '_' && c != ' ') v += c;
  if (v == "pickup") return blocks::ActionKind::PickUp;
  if (v == "putdown") return blocks::ActionKind::PutDown;
  if (v == "unstack") return blocks::ActionKind::Unstack;
  if (v == "stack") return blocks::ActionKind::Stack;
  return std::nullopt;
}

/// Parses one action line; nullopt when the verb is not recognized.
inline std::optional<blocks::Action> parse_action(std::string_view raw) {
  std::string line = text::lower(text::trim(raw));
  while (!line.empty() && (line.back() == '.' || line.back() == ',' || line.back() == ';')) line.pop_back();
  std::vector<std::string> toks;
  std::vector<std::string> blocks_named;
  if (!line.empty() && line.front() == '(') {
    auto close = line.find(')');
    std::string inner = line.substr(1, close == std::string::npos ? std::string::npos : close - 1);
    for (auto w : text::words(inner)) toks.emplace_back(w);
    if (toks.empty()) return std::nullopt;
    std::size_t args_from = 1;
    if (toks.size() >= 2 && ((toks[0] == "pick" && toks[1] == "up") || (toks[0] == "put" && toks[1] == "down"))) {
      toks[0] += toks[1];
      args_from = 2;
    }
    auto kind = verb_kind(toks[0]);
    if (!kind) return std::nullopt;
    for (std::size_t i = args_from; i < toks.size(); ++i) blocks_named.push_back(toks[i]);
    blocks::Action a{*kind, {}, {}};
    std::size_t need = a.binary() ? 2 : 1;
    if (blocks_named.size() != need) return std::nullopt;
    a.x = blocks_named[0];
    if (need == 2) a.y = blocks_named[1];
    return a;
  }
  static const std::regex prose_re(R"(^(pick[\s-]*up|put[\s-]*down|unstack|stack)\b(.*)$)");
  std::smatch m;
  if (!std::regex_match(line, m, prose_re)) return std::nullopt;
  auto kind = verb_kind(m.str(1));
  std::string rest = m.str(2);
  static const std::regex named_re(R"(\bthe\s+([a-z0-9_]+)\s+block\b)");
  for (std::sregex_iterator it(rest.begin(), rest.end(), named_re), e; it != e; ++it)
    blocks_named.push_back((*it)[1].str());
  if (blocks_named.empty()) {
    // terse prose: "unstack b from c", "stack b on top of a", "pick up a"
    static const std::set<std::string> filler{"the", "from", "on", "top", "of", "onto", "to", "block", "table", "and"};
    for (auto w : text::words(rest))
      if (!filler.count(std::string(w))) blocks_named.emplace_back(w);
  }
  blocks::Action a{*kind, {}, {}};
  std::size_t need = a.binary() ? 2 : 1;
  if (blocks_named.size() < need) return std::nullopt;
  a.x = blocks_named[0];
  if (need == 2) a.y = blocks_named[1];
  return a;
}

inline bool looks_like_action(std::string_view line) {
  static const std::regex start_re(R"(^\(?\s*(pick[\s_-]*up|put[\s_-]*down|unstack|stack)\b)", std::regex::icase);
  std::string s(line);
  return std::regex_search(s, start_re);
}

}  // namespace detail

/// Strict plan parser: every non-blank line (list markers and [TAG] lines
/// aside) must be an action in tuple or prose form.
inline blocks::Plan parse_plan(std::string_view text) {
  blocks::Plan plan;
  auto ls = text::lines(text);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    std::string_view line = text::trim(ls[i]);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') continue;
    line = detail::strip_list_marker(line);
    if (line.empty()) continue;
    auto a = detail::parse_action(line);
    if (!a) throw ParseError("unrecognized action '" + std::string(line) + "'", i + 1);
    plan.push_back(std::move(*a));
  }
  return plan;
}

/// Lenient plan extraction from a free-form completion: keeps only lines that
/// start with an action verb. When a "[PLAN]" block is present, only the
/// last such block is read.
inline ExtractedAnswer extract_plan(std::string_view text) {
  std::size_t base = 0;
  std::string_view region = text;
  std::string low = text::lower(text);
  if (auto tag = low.rfind("[plan]"); tag != std::string::npos) {
    auto end = low.find("[plan end]", tag);
    std::string_view block = text.substr(tag + 6, end == std::string::npos ? std::string_view::npos : end - tag - 6);
    bool has_action = false;
    for (auto line : text::lines(block)) has_action = has_action || detail::looks_like_action(detail::strip_list_marker(line));
    if (has_action) {
      base = tag + 6;
      region = block;
    }
  }
  blocks::Plan plan;
  std::optional<std::size_t> first;
  std::size_t offset = base, last_end = 0;
  for (auto line : text::lines(region)) {
    auto stripped = detail::strip_list_marker(line);
    if (detail::looks_like_action(stripped)) {
      if (auto a = detail::parse_action(stripped)) {
        plan.push_back(std::move(*a));
        if (!first) first = offset;
        last_end = offset + line.size();
      }
    }
    offset += line.size() + 1;
  }
  if (plan.empty()) throw ExtractionError("no plan actions found");
  return ExtractedAnswer::plan(std::move(plan), {*first, last_end});
}

/// One "(verb x y)" per line.
inline std::string render_plan(const blocks::Plan& plan) {
  std::string out;
  for (const auto& a : plan) out += a.tuple() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Graph colorings

struct ColoringParse {
  coloring::Coloring coloring;
  std::vector<coloring::Vertex> missing;
};

/// Reads "v: Color k" lines. Later lines override earlier ones; labels that
/// are not "Color n" or integers are numbered in first-seen order.
inline ColoringParse parse_coloring(std::string_view text, int n_vertices) {
  if (n_vertices < 1) throw ConfigError("parse_coloring needs n_vertices >= 1");
  static const std::regex line_re(R"(^[\s*#-]*(?:vertex\s*)?(\d+)\s*[:=]\s*['"(]?\s*(.+?)\s*['")]?\s*[,.;]?\s*$)",
                                  std::regex::icase);
  static const std::regex color_re(R"(^(?:color\s*)?(\d+)$)", std::regex::icase);
  std::vector<std::pair<int, std::string>> raw;
  std::set<int> numeric_labels;
  for (auto line : text::lines(text)) {
    std::string s(line);
    std::smatch m;
    if (!std::regex_match(s, m, line_re)) continue;
    std::string label = m.str(2);
    std::smatch cm;
    if (std::regex_match(label, cm, color_re)) numeric_labels.insert(std::stoi(cm.str(1)));
    raw.emplace_back(std::stoi(m.str(1)), label);
  }
  if (raw.empty()) throw ParseError("no \"vertex: Color n\" lines found");
  std::map<std::string, int> named;
  int next_free = 1;
  ColoringParse out;
  for (const auto& [v, label] : raw) {
    std::smatch cm;
    int color;
    if (std::regex_match(label, cm, color_re)) {
      color = std::stoi(cm.str(1));
    } else {
      std::string k = text::lower(label);
      auto it = named.find(k);
      if (it == named.end()) {
        while (numeric_labels.count(next_free)) ++next_free;
        it = named.emplace(k, next_free++).first;
      }
      color = it->second;
    }
    out.coloring[v] = color;
  }
  for (int v = 0; v < n_vertices; ++v)
    if (!out.coloring.count(v)) out.missing.push_back(v);
  return out;
}

// ---------------------------------------------------------------------------
// IDIV-SE segmentation

struct ApproachSegment {
  std::size_t pair_index = 0;
  std::size_t offset = 0;  // header start in the completion
  std::string header;      // e.g. "Approach 2"
  std::string body;        // text up to the next header
  std::optional<ExtractedAnswer> answer;
};

struct SegmentSplit {
  std::vector<ApproachSegment> segments;  // in completion order
  std::vector<std::size_t> missing;       // pair indices with no segment
};

/// Splits a completion on "Approach k" headers. Numbered headers take
/// precedence; unnumbered "Approach" headers are used only when no numbered
/// ones exist. Never fabricates a segment.
inline SegmentSplit split_segments(std::string_view completion, std::size_t expected_segments) {
  if (expected_segments == 0) throw ConfigError("expected_segments must be >= 1");
  static const std::regex numbered_re(R"((^|\n)[ \t*#>_-]*(Approach[ \t]*(\d+)))", std::regex::icase);
  static const std::regex plain_re(R"((^|\n)[ \t*#>_-]*(Approach)(?=[ \t]*[<:{(*]|[ \t]*\n))",
                                   std::regex::icase);
  struct Header {
    std::size_t pos, len;
    std::optional<std::size_t> number;
  };
  std::vector<Header> headers;
  std::string s(completion);
  for (std::sregex_iterator it(s.begin(), s.end(), numbered_re), e; it != e; ++it)
    headers.push_back({static_cast<std::size_t>(it->position(2)), static_cast<std::size_t>(it->length(2)),
                       static_cast<std::size_t>(std::stoul((*it)[3].str()))});
  if (headers.empty())
    for (std::sregex_iterator it(s.begin(), s.end(), plain_re), e; it != e; ++it)
      headers.push_back({static_cast<std::size_t>(it->position(2)), static_cast<std::size_t>(it->length(2)),
                         std::nullopt});
  if (headers.empty()) throw SegmentationError("no Approach headers found");

  SegmentSplit out;
  std::vector<bool> used(expected_segments, false);
  std::size_t sequential = 0;
  for (std::size_t h = 0; h < headers.size() && out.segments.size() < expected_segments; ++h) {
    std::size_t end = h + 1 < headers.size() ? headers[h + 1].pos : s.size();
    std::size_t index;
    if (headers[h].number && *headers[h].number >= 1 && *headers[h].number <= expected_segments &&
        !used[*headers[h].number - 1]) {
      index = *headers[h].number - 1;
    } else {
      while (sequential < expected_segments && used[sequential]) ++sequential;
      if (sequential == expected_segments) break;
      index = sequential;
    }
    used[index] = true;
    ApproachSegment seg;
    seg.pair_index = index;
    seg.offset = headers[h].pos;
    seg.header = s.substr(headers[h].pos, headers[h].len);
    seg.body = s.substr(headers[h].pos + headers[h].len, end - headers[h].pos - headers[h].len);
    out.segments.push_back(std::move(seg));
  }
  for (std::size_t i = 0; i < expected_segments; ++i)
    if (!used[i]) out.missing.push_back(i);
  return out;
}

/// Mode-checked overload: only IDIV-SE completions carry segments.
inline SegmentSplit split_segments(std::string_view completion, const ComposedPrompt& prompt) {
  if (prompt.mode != PromptMode::IdivSe)
    throw ConfigError("split_segments requires an IDIV_SE prompt, got " + std::string(to_string(prompt.mode)));
  return split_segments(completion, prompt.expected_segments);
}

}  // namespace divprompt
