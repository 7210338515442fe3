// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration files. Relative paths resolve against the file's
// directory; unknown keys are errors at every level.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>

#include "json.hpp"

#include "divprompt/bundle.hpp"
#include "divprompt/cost.hpp"
#include "divprompt/error.hpp"
#include "divprompt/gateway.hpp"
#include "divprompt/runner.hpp"
#include "divprompt/task.hpp"

namespace divprompt {

inline constexpr int kConfigSchemaVersion = 1;

struct BackendSettings {
  BackendMode mode = BackendMode::Replay;
  std::filesystem::path transcripts;  // record / replay
  std::filesystem::path script;       // scripted; also the record source when set
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 120;
  int max_retries = 3;
  int base_delay_ms = 1000;
};

struct RunConfigFile {
  int schema_version = kConfigSchemaVersion;
  TaskId task = TaskId::Aqua;
  PromptMode mode = PromptMode::CotZs;
  bool few_shot = false;
  int sc_samples = 5;
  std::size_t ensemble_size = 0;
  std::string model = "gpt-4";
  std::map<std::string, PriceTable> prices;
  std::filesystem::path dataset;
  std::filesystem::path bundle;
  BackendSettings backend;
  int concurrency = 4;
  std::size_t item_limit = 0;
  std::uint64_t seed = 1;
  std::optional<Usd> budget;
  bool meta_reasoning = false;
  std::optional<int> max_tokens;

  /// Table for the configured model: the file's entry, else a built-in one.
  PriceTable price_table() const {
    if (auto it = prices.find(model); it != prices.end()) return it->second;
    for (const auto& t : {PriceTable::gpt4(), PriceTable::gpt35_turbo()})
      if (t.model_id == model) return t;
    if (model == "gpt-3.5-turbo") return PriceTable::gpt35_turbo();
    throw ConfigError("no price table for model '" + model + "'; add it under \"prices\"");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

inline RunConfigFile config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  try {
    detail::reject_unknown(j,
                           {"schema_version", "task", "mode", "few_shot", "sc_samples", "ensemble_size", "model",
                            "prices", "dataset", "bundle", "backend", "concurrency", "item_limit", "seed", "budget_usd",
                            "meta_reasoning", "max_tokens"},
                           "run config");
    if (!j.contains("schema_version")) throw ConfigError("run config needs \"schema_version\"");
    RunConfigFile c;
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != kConfigSchemaVersion)
      throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version) + ", expected " +
                        std::to_string(kConfigSchemaVersion));
    c.task = parse_task_id(j.at("task").get<std::string>());
    c.mode = parse_prompt_mode(j.at("mode").get<std::string>());
    c.few_shot = j.value("few_shot", c.few_shot);
    c.sc_samples = j.value("sc_samples", c.sc_samples);
    c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
    c.model = j.value("model", c.model);
    if (j.contains("prices")) {
      if (!j["prices"].is_object()) throw ConfigError("\"prices\" must be an object keyed by model id");
      for (const auto& [model, t] : j["prices"].items()) {
        detail::reject_unknown(t, {"input_per_1k", "output_per_1k"}, "prices." + model);
        PriceTable table{model, Usd::parse(t.at("input_per_1k").get<std::string>()),
                         Usd::parse(t.at("output_per_1k").get<std::string>())};
        table.validate();
        c.prices[model] = table;
      }
    }
    c.dataset = detail::resolve(base_dir, j.value("dataset", ""));
    c.bundle = detail::resolve(base_dir, j.value("bundle", ""));
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      detail::reject_unknown(b,
                             {"mode", "transcripts", "script", "base_url", "path", "api_key_env", "timeout_seconds",
                              "max_retries", "base_delay_ms"},
                             "backend");
      auto& s = c.backend;
      s.mode = parse_backend_mode(b.at("mode").get<std::string>());
      s.transcripts = detail::resolve(base_dir, b.value("transcripts", ""));
      s.script = detail::resolve(base_dir, b.value("script", ""));
      s.base_url = b.value("base_url", s.base_url);
      s.path = b.value("path", s.path);
      s.api_key_env = b.value("api_key_env", s.api_key_env);
      s.timeout_seconds = b.value("timeout_seconds", s.timeout_seconds);
      s.max_retries = b.value("max_retries", s.max_retries);
      s.base_delay_ms = b.value("base_delay_ms", s.base_delay_ms);
      if (s.max_retries < 0) throw ConfigError("backend.max_retries must be >= 0");
    }
    c.concurrency = j.value("concurrency", c.concurrency);
    if (c.concurrency < 1) throw ConfigError("concurrency must be >= 1");
    c.item_limit = j.value("item_limit", c.item_limit);
    c.seed = j.value("seed", c.seed);
    if (j.contains("budget_usd") && !j["budget_usd"].is_null()) c.budget = Usd::parse(j["budget_usd"].get<std::string>());
    c.meta_reasoning = j.value("meta_reasoning", c.meta_reasoning);
    if (j.contains("max_tokens") && !j["max_tokens"].is_null()) c.max_tokens = j["max_tokens"].get<int>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
}

inline RunConfigFile load_config(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("run config not found: " + p.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("run config " + p.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, p.parent_path());
}

/// RunConfig for the runner; loads the bundle when one is configured.
inline RunConfig to_run_config(const RunConfigFile& f) {
  RunConfig c;
  c.task = task_spec(f.task);
  c.mode = f.mode;
  c.few_shot = f.few_shot || f.mode == PromptMode::CotFs;
  c.sc_samples = f.sc_samples;
  c.ensemble_size = f.ensemble_size;
  c.model_id = f.model;
  c.prices = f.price_table();
  c.bundle_path = f.bundle.string();
  if (!f.bundle.empty() && std::filesystem::exists(f.bundle)) c.bundle = load_bundle(f.bundle);
  c.item_limit = f.item_limit;
  c.seed = f.seed;
  c.budget = f.budget;
  c.meta_reasoning = f.meta_reasoning;
  c.max_tokens = f.max_tokens;
  return c;
}

}  // namespace divprompt
