// SPDX-License-Identifier: Apache-2.0
#pragma once

// The strategy bundle: everything prompt creation produces for one task,
// persisted as JSON so later steps and runs can pick it up.

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "divprompt/error.hpp"
#include "divprompt/prompt_forge.hpp"
#include "divprompt/strategy.hpp"
#include "divprompt/task.hpp"

namespace divprompt {

inline constexpr const char* kBundleSchema = "divprompt.bundle/1";

struct StrategyBundle {
  TaskId task = TaskId::Aqua;
  ApproachSet approaches;
  PersonaSet personas;
  std::vector<StrategyPair> pairs;  // rank order
  ShotMaterial material;

  /// First k pairs by rank.
  std::vector<StrategyPair> top(std::size_t k) const {
    if (k > pairs.size())
      throw ConfigError("ensemble size " + std::to_string(k) + " exceeds the bundle's " + std::to_string(pairs.size()) +
                        " pairs");
    return {pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(k)};
  }
};

namespace detail {

inline nlohmann::json approach_json(const Approach& a) {
  return {{"id", a.id}, {"name", a.name}, {"description", a.description}, {"frequency", a.frequency}};
}
inline Approach approach_from(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), j.at("name").get<std::string>(), j.value("description", ""),
          j.value("frequency", 1)};
}
inline nlohmann::json persona_json(const Persona& p) {
  return {{"id", p.id}, {"description", p.description}, {"empty", p.is_empty}};
}
inline Persona persona_from(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), j.value("description", ""), j.value("empty", false)};
}
inline nlohmann::json options_json(const std::vector<ChoiceOption>& opts) {
  auto a = nlohmann::json::array();
  for (const auto& o : opts) a.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
  return a;
}

}  // namespace detail

inline nlohmann::json to_json(const StrategyBundle& b) {
  using nlohmann::json;
  json j{{"schema", kBundleSchema}, {"task", std::string(to_string(b.task))}};
  j["approaches"] = json::array();
  for (const auto& a : b.approaches) j["approaches"].push_back(detail::approach_json(a));
  j["personas"] = json::array();
  for (const auto& p : b.personas) j["personas"].push_back(detail::persona_json(p));
  j["pairs"] = json::array();
  for (const auto& p : b.pairs) {
    json e{{"persona", detail::persona_json(p.persona)}, {"partial", p.partial}};
    e["approach"] = p.approach ? detail::approach_json(*p.approach) : json(nullptr);
    e["val_accuracy"] = p.val_accuracy ? json(*p.val_accuracy) : json(nullptr);
    j["pairs"].push_back(std::move(e));
  }
  j["shots"] = json::array();
  for (const auto& s : b.material.shots)
    j["shots"].push_back({{"question", s.question},
                          {"options", detail::options_json(s.options)},
                          {"gold", s.gold_answer},
                          {"rationale", s.base_rationale}});
  j["augmented"] = json::array();
  for (const auto& a : b.material.augmented)
    j["augmented"].push_back(
        {{"pair", a.pair_index}, {"shot", a.shot_index}, {"rationale", a.rationale}, {"final_line", a.final_line}});
  return j;
}

/// {"question", "options": [{"label", "text"}], "gold", "rationale"}
inline FewShotExample shot_from_json(const nlohmann::json& s) {
  FewShotExample shot;
  shot.question = s.at("question").get<std::string>();
  for (const auto& o : s.value("options", nlohmann::json::array())) {
    auto label = o.at("label").get<std::string>();
    if (label.size() != 1) throw ConfigError("option label must be one letter, got '" + label + "'");
    shot.options.push_back({label[0], o.at("text").get<std::string>()});
  }
  shot.gold_answer = s.at("gold").get<std::string>();
  shot.base_rationale = s.value("rationale", "");
  shot.validate();
  return shot;
}

inline StrategyBundle bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.value("schema", "") != kBundleSchema)
      throw ConfigError("strategy bundle has schema '" + j.value("schema", "") + "', expected " + kBundleSchema);
    StrategyBundle b;
    b.task = parse_task_id(j.at("task").get<std::string>());
    for (const auto& a : j.value("approaches", nlohmann::json::array())) b.approaches.push_back(detail::approach_from(a));
    for (const auto& p : j.value("personas", nlohmann::json::array())) b.personas.push_back(detail::persona_from(p));
    for (const auto& e : j.value("pairs", nlohmann::json::array())) {
      StrategyPair p;
      p.persona = detail::persona_from(e.at("persona"));
      if (e.contains("approach") && !e["approach"].is_null()) p.approach = detail::approach_from(e["approach"]);
      if (e.contains("val_accuracy") && !e["val_accuracy"].is_null()) p.val_accuracy = e["val_accuracy"].get<double>();
      p.partial = e.value("partial", false);
      p.validate();
      b.pairs.push_back(std::move(p));
    }
    for (const auto& s : j.value("shots", nlohmann::json::array())) b.material.shots.push_back(shot_from_json(s));
    for (const auto& a : j.value("augmented", nlohmann::json::array())) {
      AugmentedExample ex{a.at("pair").get<std::size_t>(), a.at("shot").get<std::size_t>(),
                          a.at("rationale").get<std::string>(), a.at("final_line").get<std::string>()};
      if (ex.pair_index >= b.pairs.size() || ex.shot_index >= b.material.shots.size())
        throw ConfigError("augmented example (" + std::to_string(ex.pair_index) + "," + std::to_string(ex.shot_index) +
                          ") is out of range");
      b.material.augmented.push_back(std::move(ex));
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed strategy bundle: ") + e.what());
  }
}

inline StrategyBundle load_bundle(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("strategy bundle not found: " + p.string() + " (create it with 'discover' and 'select')");
  try {
    return bundle_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("strategy bundle " + p.string() + " is not valid JSON: " + e.what());
  }
}

inline void save_bundle(const StrategyBundle& b, const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write strategy bundle " + p.string());
    out << to_json(b).dump(2) << "\n";
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace divprompt
