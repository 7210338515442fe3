// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment execution: per-item prompting, extraction, aggregation and
// grading, plus summaries, ensemble-size sweeps, the error-propagation study
// and Pareto reporting.

#include <algorithm>
#include <cstdio>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "divprompt/aggregation.hpp"
#include "divprompt/bundle.hpp"
#include "divprompt/cost.hpp"
#include "divprompt/error.hpp"
#include "divprompt/extraction.hpp"
#include "divprompt/gateway.hpp"
#include "divprompt/parallel.hpp"
#include "divprompt/prompt_forge.hpp"
#include "divprompt/task.hpp"

namespace divprompt {

struct RunConfig {
  TaskSpec task = task_spec(TaskId::Aqua);
  PromptMode mode = PromptMode::CotZs;
  bool few_shot = false;
  int sc_samples = 5;
  std::size_t ensemble_size = 0;  // 0: the task's default
  std::string model_id = "gpt-4";
  PriceTable prices = PriceTable::gpt4();
  std::optional<StrategyBundle> bundle;
  std::string bundle_path;  // for error messages only
  std::size_t item_limit = 0;  // 0: whole dataset
  std::uint64_t seed = 1;
  std::optional<Usd> budget;
  bool meta_reasoning = false;
  std::optional<int> max_tokens;

  bool uses_pairs() const { return mode == PromptMode::DivSe || mode == PromptMode::IdivSe; }
  bool needs_shots() const { return mode == PromptMode::CotFs || (few_shot && mode != PromptMode::CotZs); }

  std::size_t effective_ensemble_size() const {
    return ensemble_size ? ensemble_size : static_cast<std::size_t>(task.default_ensemble_size);
  }

  void validate(std::size_t dataset_size) const {
    if (mode == PromptMode::Sc && (sc_samples < 1 || sc_samples > kMaxSelfConsistencySamples))
      throw ConfigError("SC sample count must be in [1, " + std::to_string(kMaxSelfConsistencySamples) + "], got " +
                        std::to_string(sc_samples));
    if (item_limit > dataset_size)
      throw ConfigError("item limit " + std::to_string(item_limit) + " exceeds the dataset size " +
                        std::to_string(dataset_size));
    if (model_id.empty()) throw ConfigError("model id is empty");
    prices.validate();
    if ((uses_pairs() || needs_shots()) && !bundle)
      throw ConfigError(std::string(to_string(mode)) + (few_shot ? " few-shot" : "") +
                        " run needs a strategy bundle" + (bundle_path.empty() ? "" : " at " + bundle_path) +
                        "; create it with 'discover', 'select' and 'augment'");
    if (bundle && bundle->task != task.id)
      throw ConfigError("strategy bundle is for task " + std::string(to_string(bundle->task)) + ", run is for " +
                        task.name());
    if (uses_pairs()) {
      auto k = effective_ensemble_size();
      if (k < 1) throw ConfigError("ensemble size must be >= 1");
      if (k > bundle->pairs.size())
        throw ConfigError("ensemble size " + std::to_string(k) + " exceeds the " + std::to_string(bundle->pairs.size()) +
                          " pairs in the strategy bundle");
    }
    if (needs_shots() && bundle->material.shots.empty())
      throw ConfigError("few-shot run but the strategy bundle has no few-shot examples");
  }
};

/// One backend call made for an item.
struct CallRecord {
  std::string purpose;  // "pair 0", "ensemble", "samples", "meta", ...
  std::string prompt;
  std::vector<Completion> completions;
};

struct ApproachAnswer {
  std::size_t pair_index = 0;
  std::string label;
  std::optional<ExtractedAnswer> answer;
  std::string text;  // completion or segment the answer came from
};

struct TrialRecord {
  std::size_t index = 0;
  std::string item_id;
  PromptMode mode = PromptMode::CotZs;
  std::vector<CallRecord> calls;
  std::vector<ApproachAnswer> answers;  // one per pair (DIV/IDIV) or sample (SC)
  AggregationResult aggregation;
  std::string gold;
  bool correct = false;
  TokenUsage usage;
  Usd cost;
};

struct Summary {
  std::string task;
  std::string mode;  // e.g. "DIV_SE", "DIV_SE-3", "SC-5"
  std::string model;
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  Usd total_cost;
  bool truncated = false;
  /// Per-approach solo accuracy, keyed by pair label (DIV/IDIV only).
  std::vector<std::pair<std::string, double>> solo_accuracy;

  double accuracy() const { return n_items ? static_cast<double>(n_correct) / static_cast<double>(n_items) : 0.0; }
};

struct RunResult {
  std::vector<TrialRecord> trials;
  Summary summary;
};

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_fraction(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline nlohmann::json to_json(const TrialRecord& t) {
  using nlohmann::json;
  json calls = json::array();
  for (const auto& c : t.calls) {
    json comps = json::array();
    for (const auto& comp : c.completions) comps.push_back(to_json(comp));
    calls.push_back({{"purpose", c.purpose}, {"prompt", c.prompt}, {"completions", comps}});
  }
  json answers = json::array();
  for (const auto& a : t.answers)
    answers.push_back({{"pair", a.pair_index}, {"label", a.label}, {"answer", a.answer ? json(a.answer->key()) : json()}});
  json tally = json::object();
  for (const auto& [k, v] : t.aggregation.tally) tally[k] = v;
  json rejected = json::array();
  for (const auto& [pair, verdict] : t.aggregation.rejected) rejected.push_back({{"pair", pair}, {"verdict", verdict.summary()}});
  json agg{{"method", std::string(to_string(t.aggregation.method))},
           {"winner", t.aggregation.winner ? json(t.aggregation.winner->key()) : json()},
           {"tally", tally},
           {"tie", t.aggregation.tie},
           {"fallback", t.aggregation.fallback},
           {"rejected", rejected}};
  return {{"index", t.index},
          {"item", t.item_id},
          {"mode", std::string(to_string(t.mode))},
          {"calls", calls},
          {"answers", answers},
          {"aggregation", agg},
          {"gold", t.gold},
          {"correct", t.correct},
          {"usage", {{"input_tokens", t.usage.input_tokens}, {"output_tokens", t.usage.output_tokens}}},
          {"cost_usd", t.cost.str()}};
}

/// One JSON object per line, in dataset order.
inline std::string run_log(const std::vector<TrialRecord>& trials) {
  std::string out;
  for (const auto& t : trials) out += to_json(t).dump() + "\n";
  return out;
}

inline nlohmann::json to_json(const Summary& s) {
  nlohmann::json solo = nlohmann::json::array();
  for (const auto& [label, acc] : s.solo_accuracy) solo.push_back({{"label", label}, {"accuracy", format_fraction(acc)}});
  return {{"task", s.task},
          {"mode", s.mode},
          {"model", s.model},
          {"n_items", s.n_items},
          {"n_correct", s.n_correct},
          {"accuracy", format_fraction(s.accuracy())},
          {"total_cost_usd", s.total_cost.str()},
          {"truncated", s.truncated},
          {"solo_accuracy", solo}};
}

inline Summary summary_from_json(const nlohmann::json& j) {
  try {
    Summary s;
    s.task = j.at("task").get<std::string>();
    s.mode = j.at("mode").get<std::string>();
    s.model = j.at("model").get<std::string>();
    s.n_items = j.at("n_items").get<std::size_t>();
    s.n_correct = j.at("n_correct").get<std::size_t>();
    if (s.n_correct > s.n_items) throw ConfigError("summary has more correct items than items");
    s.total_cost = Usd::parse(j.at("total_cost_usd").get<std::string>());
    s.truncated = j.value("truncated", false);
    for (const auto& e : j.value("solo_accuracy", nlohmann::json::array()))
      s.solo_accuracy.emplace_back(e.at("label").get<std::string>(), std::stod(e.at("accuracy").get<std::string>()));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed summary: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Execution

namespace detail {

inline std::string mode_label(const RunConfig& cfg, std::size_t ensemble) {
  switch (cfg.mode) {
    case PromptMode::Sc: return "SC-" + std::to_string(cfg.sc_samples);
    case PromptMode::DivSe:
    case PromptMode::IdivSe: return std::string(to_string(cfg.mode)) + "-" + std::to_string(ensemble);
    default: return std::string(to_string(cfg.mode));
  }
}

inline std::optional<ExtractedAnswer> try_extract(const TaskSpec& task, const TaskRecord& item, std::string_view text) {
  try {
    return extract_answer(task, item, text);
  } catch (const ExtractionError&) {
    return std::nullopt;
  }
}

inline GenerationRequest make_request(const RunConfig& cfg, std::string prompt, double temperature = 0.0, int n = 1) {
  auto req = GenerationRequest::user(std::move(prompt), cfg.model_id, temperature, n);
  req.max_tokens = cfg.max_tokens;
  return req;
}

/// Aggregates the item's answers per the task's rule and grades the winner.
inline void aggregate_and_grade(const RunConfig& cfg, const TaskRecord& item, TrialRecord& t, Gateway* gateway) {
  Ballot ballot{cfg.task.kind, {}};
  for (const auto& a : t.answers) ballot.add(a.pair_index, a.answer);
  switch (cfg.task.grading) {
    case GradingRule::PlanValidates: t.aggregation = plan_majority(ballot); break;
    case GradingRule::ColoringVerifies: t.aggregation = select_verified(ballot, *item.graph); break;
    default:
      if (cfg.meta_reasoning && gateway && t.answers.size() >= 2) {
        std::vector<std::string> responses;
        for (const auto& a : t.answers) responses.push_back(a.text);
        MetaTask mt{render_question(cfg.task, item), final_line_instruction(cfg.task.kind),
                    [&](std::string_view s) { return extract_answer(cfg.task, item, s); }, cfg.task.kind};
        auto req = make_request(cfg, meta_prompt(responses, mt));
        req.session = "meta";
        auto completions = gateway->complete(req);
        t.calls.push_back({"meta", req.messages.front().content, completions});
        t.aggregation = meta_reason_from_reply(responses, mt, completions.front().text);
      } else {
        t.aggregation = majority_vote(ballot);
      }
  }
  t.correct = grade(cfg.task, item, t.aggregation.winner);
}

inline void account(const RunConfig& cfg, TrialRecord& t) {
  t.usage = {};
  t.cost = {};
  for (const auto& c : t.calls)
    for (const auto& comp : c.completions) {
      t.usage += comp.usage;
      t.cost += compute_cost(comp.usage, cfg.prices);
    }
}

inline TrialRecord run_item(const RunConfig& cfg, const std::vector<StrategyPair>& pairs, const TaskRecord& item,
                            std::size_t index, Gateway& gateway) {
  TrialRecord t;
  t.index = index;
  t.item_id = item.id;
  t.mode = cfg.mode;
  t.gold = gold_display(cfg.task, item);
  static const ShotMaterial no_shots;
  const ShotMaterial& material = cfg.bundle ? cfg.bundle->material : no_shots;
  auto prompts = compose_prompts(pairs, material, item, cfg.mode, cfg.task, cfg.few_shot);

  switch (cfg.mode) {
    case PromptMode::CotZs:
    case PromptMode::CotFs: {
      auto completions = gateway.complete(make_request(cfg, prompts.front().body));
      t.answers.push_back({0, "", try_extract(cfg.task, item, completions.front().text), completions.front().text});
      t.calls.push_back({"cot", prompts.front().body, std::move(completions)});
      break;
    }
    case PromptMode::Sc: {
      auto completions =
          gateway.complete(make_request(cfg, prompts.front().body, kSelfConsistencyTemperature, cfg.sc_samples));
      for (std::size_t i = 0; i < completions.size(); ++i)
        t.answers.push_back({i, "sample " + std::to_string(i), try_extract(cfg.task, item, completions[i].text),
                             completions[i].text});
      t.calls.push_back({"samples", prompts.front().body, std::move(completions)});
      break;
    }
    case PromptMode::DivSe:
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        auto completions = gateway.complete(make_request(cfg, prompts[i].body));
        t.answers.push_back({i, pairs[i].label(), try_extract(cfg.task, item, completions.front().text),
                             completions.front().text});
        t.calls.push_back({"pair " + std::to_string(i), prompts[i].body, std::move(completions)});
      }
      break;
    case PromptMode::IdivSe: {
      auto completions = gateway.complete(make_request(cfg, prompts.front().body));
      SegmentSplit split;
      try {
        split = split_segments(completions.front().text, prompts.front());
      } catch (const SegmentationError&) {
        // no headers at all: every approach abstains
      }
      std::vector<std::optional<const ApproachSegment*>> by_pair(pairs.size());
      for (const auto& seg : split.segments)
        if (seg.pair_index < pairs.size() && !by_pair[seg.pair_index]) by_pair[seg.pair_index] = &seg;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (by_pair[i]) {
          const auto* seg = *by_pair[i];
          t.answers.push_back({i, pairs[i].label(), try_extract(cfg.task, item, seg->body), seg->body});
        } else {
          t.answers.push_back({i, pairs[i].label(), std::nullopt, ""});
        }
      }
      t.calls.push_back({"ensemble", prompts.front().body, std::move(completions)});
      break;
    }
  }
  aggregate_and_grade(cfg, item, t, &gateway);
  account(cfg, t);
  return t;
}

inline Summary summarize(const RunConfig& cfg, const std::vector<TrialRecord>& trials,
                         const std::vector<StrategyPair>& pairs, const std::vector<TaskRecord>& items) {
  Summary s;
  s.task = cfg.task.name();
  s.mode = mode_label(cfg, pairs.size());
  s.model = cfg.model_id;
  s.n_items = trials.size();
  for (const auto& t : trials) {
    s.n_correct += t.correct ? 1 : 0;
    s.total_cost += t.cost;
  }
  if (cfg.uses_pairs() && !trials.empty()) {
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      std::size_t right = 0;
      for (const auto& t : trials)
        if (p < t.answers.size() && grade(cfg.task, items[t.index], t.answers[p].answer)) ++right;
      s.solo_accuracy.emplace_back(pairs[p].label(), static_cast<double>(right) / static_cast<double>(trials.size()));
    }
  }
  return s;
}

}  // namespace detail

/// Runs the configured experiment over the dataset in order. Items may be
/// processed concurrently; results are merged by index. With a budget, the
/// run stops after the first item whose cumulative cost exceeds it and the
/// summary is flagged truncated.
inline RunResult run(const RunConfig& cfg, const std::vector<TaskRecord>& dataset, Gateway& gateway) {
  cfg.validate(dataset.size());
  std::size_t n = cfg.item_limit ? cfg.item_limit : dataset.size();
  std::vector<StrategyPair> pairs;
  if (cfg.uses_pairs()) pairs = cfg.bundle->top(cfg.effective_ensemble_size());

  RunResult result;
  const std::size_t batch = cfg.budget ? static_cast<std::size_t>(gateway.max_in_flight()) : n;
  Usd spent;
  bool stop = false;
  for (std::size_t start = 0; start < n && !stop; start += batch) {
    std::size_t count = std::min(batch, n - start);
    std::vector<TrialRecord> trials(count);
    parallel_for_index(count, gateway.max_in_flight(), [&](std::size_t i) {
      trials[i] = detail::run_item(cfg, pairs, dataset[start + i], start + i, gateway);
    });
    for (auto& t : trials) {
      spent += t.cost;
      result.trials.push_back(std::move(t));
      if (cfg.budget && spent > *cfg.budget) {
        stop = true;
        break;
      }
    }
  }
  result.summary = detail::summarize(cfg, result.trials, pairs, dataset);
  result.summary.truncated = stop && result.trials.size() < n;
  return result;
}

/// Summaries for ensemble prefixes of the given sizes over the same items.
/// DIV_SE runs once at the largest size and re-aggregates stored per-pair
/// completions; IDIV_SE needs one run per size since the prompt changes.
inline std::vector<Summary> ensemble_size_sweep(const RunConfig& cfg, const std::vector<std::size_t>& sizes,
                                                const std::vector<TaskRecord>& dataset, Gateway& gateway) {
  if (!cfg.uses_pairs()) throw ConfigError("ensemble-size sweeps need DIV_SE or IDIV_SE");
  if (sizes.empty()) throw ConfigError("no ensemble sizes given");
  if (!cfg.bundle) throw ConfigError("ensemble-size sweep needs a strategy bundle");
  for (auto k : sizes)
    if (k < 1 || k > cfg.bundle->pairs.size())
      throw ConfigError("ensemble size " + std::to_string(k) + " outside [1, " + std::to_string(cfg.bundle->pairs.size()) +
                        "]");
  std::vector<Summary> out;
  if (cfg.mode == PromptMode::IdivSe) {
    for (auto k : sizes) {
      auto c = cfg;
      c.ensemble_size = k;
      out.push_back(run(c, dataset, gateway).summary);
    }
    return out;
  }
  auto full = cfg;
  full.ensemble_size = *std::max_element(sizes.begin(), sizes.end());
  auto base = run(full, dataset, gateway);
  auto all_pairs = cfg.bundle->top(full.ensemble_size);
  for (auto k : sizes) {
    auto c = cfg;
    c.ensemble_size = k;
    std::vector<StrategyPair> pairs(all_pairs.begin(), all_pairs.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<TrialRecord> trials;
    for (const auto& orig : base.trials) {
      TrialRecord t;
      t.index = orig.index;
      t.item_id = orig.item_id;
      t.mode = orig.mode;
      t.gold = orig.gold;
      t.answers.assign(orig.answers.begin(), orig.answers.begin() + static_cast<std::ptrdiff_t>(k));
      t.calls.assign(orig.calls.begin(), orig.calls.begin() + static_cast<std::ptrdiff_t>(k));
      detail::aggregate_and_grade(c, dataset[t.index], t, c.meta_reasoning ? &gateway : nullptr);
      detail::account(c, t);
      trials.push_back(std::move(t));
    }
    auto s = detail::summarize(c, trials, pairs, dataset);
    s.truncated = base.summary.truncated;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error propagation

struct PropagationAttempt {
  std::size_t pair_index = 0;
  int attempt = 0;  // 1-based
  std::optional<std::string> answer;
  std::string text;
};

struct PropagationItem {
  std::string item_id;
  std::string original_answer;
  std::vector<PropagationAttempt> attempts;
  bool propagated = false;
};

struct PropagationReport {
  std::size_t n_records = 0;
  std::vector<PropagationItem> items;  // qualifying items, in dataset order
  std::size_t propagated = 0;
  std::optional<double> rate;  // undefined without qualifying items
  Usd cost;
};

inline constexpr int kPropagationAttempts = 3;

/// Selects IDIV-SE items where the aggregate is wrong and every approach gave
/// the same wrong answer, then re-runs the last two approaches standalone in
/// fresh sessions. An item is propagated when either approach fails to
/// reproduce the original answer within three attempts.
inline PropagationReport error_propagation_study(const RunConfig& cfg, const std::vector<TrialRecord>& records,
                                                 const std::vector<TaskRecord>& dataset, Gateway& gateway) {
  if (!cfg.bundle) throw ConfigError("error-propagation study needs the strategy bundle of the IDIV_SE run");
  PropagationReport rep;
  rep.n_records = records.size();
  for (const auto& r : records) {
    if (r.mode != PromptMode::IdivSe) throw ConfigError("error-propagation study needs IDIV_SE records");
    if (r.answers.size() < 5)
      throw ConfigError("error-propagation study needs at least 5 approaches per item, item " + r.item_id + " has " +
                        std::to_string(r.answers.size()));
  }
  std::vector<const TrialRecord*> qualifying;
  for (const auto& r : records) {
    if (r.correct || !r.answers.front().answer) continue;
    auto key = r.answers.front().answer->key();
    bool same = std::all_of(r.answers.begin(), r.answers.end(),
                            [&](const ApproachAnswer& a) { return a.answer && a.answer->key() == key; });
    if (same) qualifying.push_back(&r);
  }
  rep.items.resize(qualifying.size());
  std::vector<Usd> costs(qualifying.size());
  const auto pairs = cfg.bundle->top(qualifying.empty() ? 0 : qualifying.front()->answers.size());
  parallel_for_index(qualifying.size(), gateway.max_in_flight(), [&](std::size_t q) {
    const auto& rec = *qualifying[q];
    const auto& item = dataset.at(rec.index);
    auto& out = rep.items[q];
    out.item_id = rec.item_id;
    out.original_answer = rec.answers.front().answer->key();
    for (std::size_t p = rec.answers.size() - 2; p < rec.answers.size(); ++p) {
      auto prompt = compose_prompts({pairs[p]}, cfg.bundle->material, item, PromptMode::DivSe, cfg.task, cfg.few_shot)
                        .front()
                        .body;
      bool reproduced = false;
      for (int attempt = 1; attempt <= kPropagationAttempts && !reproduced; ++attempt) {
        auto req = detail::make_request(cfg, prompt);
        req.session = "propagation-" + std::to_string(attempt);
        auto c = gateway.complete(req).front();
        costs[q] += compute_cost(c.usage, cfg.prices);
        auto ans = detail::try_extract(cfg.task, item, c.text);
        PropagationAttempt a{p, attempt, ans ? std::optional(ans->key()) : std::nullopt, c.text};
        reproduced = a.answer && *a.answer == out.original_answer;
        out.attempts.push_back(std::move(a));
      }
      if (!reproduced) out.propagated = true;
    }
  });
  for (std::size_t q = 0; q < rep.items.size(); ++q) {
    rep.propagated += rep.items[q].propagated ? 1 : 0;
    rep.cost += costs[q];
  }
  if (!rep.items.empty()) rep.rate = static_cast<double>(rep.propagated) / static_cast<double>(rep.items.size());
  return rep;
}

inline nlohmann::json to_json(const PropagationReport& r) {
  using nlohmann::json;
  json items = json::array();
  for (const auto& it : r.items) {
    json attempts = json::array();
    for (const auto& a : it.attempts)
      attempts.push_back(
          {{"pair", a.pair_index}, {"attempt", a.attempt}, {"answer", a.answer ? json(*a.answer) : json()}, {"text", a.text}});
    json e{{"item", it.item_id},
           {"original_answer", it.original_answer},
           {"label", it.propagated ? "propagated" : "not_propagated"},
           {"attempts", attempts}};
    items.push_back(std::move(e));
  }
  return {{"records", r.n_records},
          {"qualifying", r.items.size()},
          {"propagated", r.propagated},
          {"rate", r.rate ? json(format_fraction(*r.rate)) : json("undefined")},
          {"cost_usd", r.cost.str()},
          {"items", items}};
}

// ---------------------------------------------------------------------------
// Pareto frontier and reports

struct ParetoPoint {
  std::string label;
  Usd cost;
  double accuracy = 0.0;
  bool dominated = false;
};

/// q dominates p when q costs no more and is no less accurate, one strictly.
inline bool dominates(const ParetoPoint& q, const ParetoPoint& p) {
  return q.cost <= p.cost && q.accuracy >= p.accuracy && (q.cost < p.cost || q.accuracy > p.accuracy);
}

/// All points with dominance marked, sorted by cost ascending (then accuracy
/// descending, then label). O(n log n) sweep.
inline std::vector<ParetoPoint> pareto_frontier(std::vector<ParetoPoint> points) {
  std::stable_sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.label < b.label;
  });
  std::optional<double> best;  // highest accuracy among strictly cheaper points
  for (std::size_t i = 0; i < points.size();) {
    std::size_t j = i;
    while (j < points.size() && points[j].cost == points[i].cost) ++j;
    double group_top = points[i].accuracy;
    for (std::size_t k = i; k < j; ++k)
      points[k].dominated = points[k].accuracy < group_top || (best && *best >= points[k].accuracy);
    best = best ? std::max(*best, group_top) : group_top;
    i = j;
  }
  return points;
}

struct Report {
  std::string csv;
  nlohmann::json document;
};

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

/// CSV table plus structured report; rows sorted by cost, frontier marked
/// across all given summaries.
inline Report summarize_report(const std::vector<Summary>& summaries) {
  if (summaries.empty()) throw ConfigError("report needs at least one summary");
  std::vector<ParetoPoint> pts;
  for (std::size_t i = 0; i < summaries.size(); ++i)
    pts.push_back({std::to_string(i), summaries[i].total_cost, summaries[i].accuracy(), false});
  auto marked = pareto_frontier(pts);
  Report r;
  r.csv = "mode,task,model,n_items,accuracy,total_cost_usd,on_frontier\n";
  r.document = {{"rows", nlohmann::json::array()}};
  for (const auto& p : marked) {
    const auto& s = summaries[std::stoul(p.label)];
    r.csv += csv_field(s.mode) + "," + csv_field(s.task) + "," + csv_field(s.model) + "," + std::to_string(s.n_items) +
             "," + format_fraction(s.accuracy()) + "," + s.total_cost.str() + "," + (p.dominated ? "false" : "true") +
             "\n";
    auto row = to_json(s);
    row["on_frontier"] = !p.dominated;
    r.document["rows"].push_back(std::move(row));
  }
  return r;
}

}  // namespace divprompt
