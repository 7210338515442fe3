// SPDX-License-Identifier: Apache-2.0
#pragma once

// OpenAI-compatible chat-completion client. Kept out of gateway.hpp so only
// translation units that talk to a provider pay for cpp-httplib.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <cstdlib>
#include <memory>
#include <string>

#include "json.hpp"

#include "divprompt/gateway.hpp"

namespace divprompt {

struct LiveEndpoint {
  /// Scheme and host, e.g. "https://api.openai.com".
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  int timeout_seconds = 120;
};

/// Reads the key from the environment; the value is never logged.
inline std::string api_key_from_env(const std::string& var) {
  const char* v = std::getenv(var.c_str());
  if (!v || !*v) throw ConfigError("environment variable " + var + " is not set; live mode needs an API key");
  return v;
}

class LiveBackend : public Backend {
 public:
  explicit LiveBackend(LiveEndpoint ep) : ep_(std::move(ep)), key_(api_key_from_env(ep_.api_key_env)) {}

  static nlohmann::json request_body(const GenerationRequest& req) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json body{{"model", req.model_id}, {"messages", msgs}, {"temperature", req.temperature}, {"n", req.n_samples}};
    if (req.max_tokens) body["max_tokens"] = *req.max_tokens;
    return body;
  }

  /// Splits provider usage (totals over all choices) across completions;
  /// falls back to the word-ratio estimate when usage is absent.
  static std::vector<Completion> parse_response(const GenerationRequest& req, const nlohmann::json& j) {
    std::vector<Completion> out;
    for (const auto& choice : j.at("choices")) {
      Completion c;
      const auto& content = choice.at("message").at("content");
      c.text = content.is_null() ? "" : content.get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
        c.finish_reason = choice["finish_reason"].get<std::string>();
      out.push_back(std::move(c));
    }
    if (out.empty()) throw BackendError("provider returned no choices");
    if (j.contains("usage") && j["usage"].is_object()) {
      auto prompt = j["usage"].value("prompt_tokens", std::int64_t{0});
      auto completion = j["usage"].value("completion_tokens", std::int64_t{0});
      auto n = static_cast<std::int64_t>(out.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].usage.input_tokens = i == 0 ? prompt : 0;
        out[i].usage.output_tokens = completion / n + (i == 0 ? completion % n : 0);
      }
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].usage = estimated_usage(req, out[i].text);
        if (i) out[i].usage.input_tokens = 0;
      }
    }
    return out;
  }

  std::vector<Completion> generate(const GenerationRequest& req) override {
    httplib::Client cli(ep_.base_url);
    cli.set_read_timeout(ep_.timeout_seconds, 0);
    cli.set_connection_timeout(30, 0);
    httplib::Headers headers{{"Authorization", "Bearer " + key_}};
    auto res = cli.Post(ep_.path, headers, request_body(req).dump(), "application/json");
    if (!res) throw BackendError("transport error: " + httplib::to_string(res.error()), true);
    if (res->status == 429 || res->status >= 500)
      throw BackendError("provider returned HTTP " + std::to_string(res->status), true);
    if (res->status != 200) throw BackendError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return parse_response(req, nlohmann::json::parse(res->body));
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("malformed provider response: ") + e.what());
    }
  }

  BackendMode mode() const override { return BackendMode::Live; }

 private:
  LiveEndpoint ep_;
  std::string key_;
};

}  // namespace divprompt
