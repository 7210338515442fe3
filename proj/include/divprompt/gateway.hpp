// SPDX-License-Identifier: Apache-2.0
#pragma once

// Chat-completion access behind one interface: scripted, replay, record and
// live backends, plus a Gateway that adds validation, retries with jittered
// exponential backoff and a bound on in-flight requests.

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "divprompt/cost.hpp"
#include "divprompt/error.hpp"

namespace divprompt {

struct Message {
  std::string role;
  std::string content;
  friend bool operator==(const Message&, const Message&) = default;
};

/// Sampling temperature used by the self-consistency baseline.
inline constexpr double kSelfConsistencyTemperature = 0.7;
inline constexpr int kMaxSelfConsistencySamples = 10;

struct GenerationRequest {
  std::vector<Message> messages;
  double temperature = 0.0;
  int n_samples = 1;
  std::optional<int> max_tokens;
  std::string model_id;
  /// Distinguishes otherwise identical requests that must be issued as
  /// independent sessions (rerun attempts, meta-reasoning). Part of the key,
  /// never sent to the provider.
  std::string session;

  static GenerationRequest user(std::string prompt, std::string model_id, double temperature = 0.0,
                                int n_samples = 1) {
    GenerationRequest r;
    r.messages.push_back({"user", std::move(prompt)});
    r.model_id = std::move(model_id);
    r.temperature = temperature;
    r.n_samples = n_samples;
    return r;
  }

  void validate() const {
    if (messages.empty()) throw ConfigError("generation request has no messages");
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (max_tokens && *max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  }

  /// Canonical serialization: sorted keys, compact, UTF-8.
  std::string canonical() const {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"content", m.content}, {"role", m.role}});
    nlohmann::json j{{"messages", msgs},
                     {"model", model_id},
                     {"n", n_samples},
                     {"session", session},
                     {"temperature", temperature}};
    j["max_tokens"] = max_tokens ? nlohmann::json(*max_tokens) : nlohmann::json(nullptr);
    return j.dump();
  }

  /// Content address: hex SHA-256 of the canonical serialization.
  std::string key() const;
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string GenerationRequest::key() const { return sha256_hex(canonical()); }

struct Completion {
  std::string text;
  TokenUsage usage;
  std::string finish_reason = "stop";
};

inline nlohmann::json to_json(const Completion& c) {
  return {{"text", c.text},
          {"usage", {{"input_tokens", c.usage.input_tokens}, {"output_tokens", c.usage.output_tokens}}},
          {"finish_reason", c.finish_reason}};
}

inline Completion completion_from_json(const nlohmann::json& j) {
  Completion c;
  c.text = j.at("text").get<std::string>();
  c.usage.input_tokens = j.at("usage").at("input_tokens").get<std::int64_t>();
  c.usage.output_tokens = j.at("usage").at("output_tokens").get<std::int64_t>();
  c.finish_reason = j.value("finish_reason", "stop");
  if (c.usage.input_tokens < 0 || c.usage.output_tokens < 0) throw ConfigError("negative token usage");
  return c;
}

/// Usage from the word-ratio estimate: prompt words in, completion words out.
inline TokenUsage estimated_usage(const GenerationRequest& req, std::string_view completion) {
  TokenUsage u;
  for (const auto& m : req.messages) u.input_tokens += estimate_tokens(m.content);
  u.output_tokens = estimate_tokens(completion);
  return u;
}

enum class BackendMode { Live, Record, Replay, Scripted };

inline std::string_view to_string(BackendMode m) {
  switch (m) {
    case BackendMode::Live: return "live";
    case BackendMode::Record: return "record";
    case BackendMode::Replay: return "replay";
    case BackendMode::Scripted: return "scripted";
  }
  return "?";
}

inline BackendMode parse_backend_mode(std::string_view s) {
  for (auto m : {BackendMode::Live, BackendMode::Record, BackendMode::Replay, BackendMode::Scripted})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown backend mode '" + std::string(s) + "'");
}

class Backend {
 public:
  virtual ~Backend() = default;
  /// Returns exactly req.n_samples completions or throws BackendError.
  virtual std::vector<Completion> generate(const GenerationRequest& req) = 0;
  virtual BackendMode mode() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend

struct ScriptedReply {
  std::string text;
  std::optional<TokenUsage> usage;
};

/// Matches when every `contains` fragment occurs in the request messages and,
/// if set, the session tag is equal. Sample i of a request gets
/// replies[i % replies.size()].
struct ScriptRule {
  std::vector<std::string> contains;
  std::optional<std::string> session;
  std::vector<ScriptedReply> replies;
};

class ScriptedBackend : public Backend {
 public:
  ScriptedBackend() = default;
  explicit ScriptedBackend(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {}

  /// Convenience: one rule answering `reply` to any prompt containing `fragment`.
  ScriptedBackend& on(std::string fragment, std::string reply) {
    rules_.push_back({{std::move(fragment)}, std::nullopt, {{std::move(reply), std::nullopt}}});
    return *this;
  }

  void add_rule(ScriptRule r) { rules_.push_back(std::move(r)); }

  /// {"rules": [{"contains": [...], "session": "...", "replies": [{"text", "usage"}]}]}
  static ScriptedBackend from_json(const nlohmann::json& j) {
    ScriptedBackend b;
    for (const auto& r : j.at("rules")) {
      ScriptRule rule;
      if (r.contains("contains")) rule.contains = r.at("contains").get<std::vector<std::string>>();
      if (r.contains("session")) rule.session = r.at("session").get<std::string>();
      for (const auto& rep : r.at("replies")) {
        ScriptedReply reply;
        if (rep.is_string()) {
          reply.text = rep.get<std::string>();
        } else {
          reply.text = rep.at("text").get<std::string>();
          if (rep.contains("usage"))
            reply.usage = TokenUsage{rep.at("usage").at("input_tokens").get<std::int64_t>(),
                                     rep.at("usage").at("output_tokens").get<std::int64_t>()};
        }
        rule.replies.push_back(std::move(reply));
      }
      if (rule.replies.empty()) throw ConfigError("script rule without replies");
      b.rules_.push_back(std::move(rule));
    }
    return b;
  }

  static ScriptedBackend from_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open script " + p.string());
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad script " + p.string() + ": " + e.what());
    }
  }

  std::vector<Completion> generate(const GenerationRequest& req) override {
    std::string all;
    for (const auto& m : req.messages) all += m.content + '\n';
    for (const auto& rule : rules_) {
      if (rule.session && *rule.session != req.session) continue;
      bool ok = true;
      for (const auto& frag : rule.contains) ok = ok && all.find(frag) != std::string::npos;
      if (!ok) continue;
      std::vector<Completion> out;
      for (int i = 0; i < req.n_samples; ++i) {
        const auto& r = rule.replies[static_cast<std::size_t>(i) % rule.replies.size()];
        out.push_back({r.text, r.usage ? *r.usage : estimated_usage(req, r.text), "stop"});
      }
      return out;
    }
    throw BackendError("scripted backend has no reply for request " + req.key());
  }

  BackendMode mode() const override { return BackendMode::Scripted; }

 private:
  std::vector<ScriptRule> rules_;
};

// ---------------------------------------------------------------------------
// Transcript store, replay and record

/// Directory of "<key>.json" records. Writes go through a temp file and a
/// rename so readers never see partial records.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::vector<Completion>> load(const std::string& key) const {
    std::ifstream in(dir_ / (key + ".json"));
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw BackendError("corrupt transcript " + key + ": " + e.what());
    }
    std::vector<Completion> out;
    for (const auto& c : j.at("completions")) out.push_back(completion_from_json(c));
    return out;
  }

  void save(const GenerationRequest& req, const std::vector<Completion>& completions) {
    std::lock_guard lock(mu_);
    std::filesystem::create_directories(dir_);
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : completions) comps.push_back(to_json(c));
    const std::string key = req.key();
    nlohmann::json j{{"key", key}, {"request", nlohmann::json::parse(req.canonical())}, {"completions", comps}};
    auto final_path = dir_ / (key + ".json");
    std::ostringstream tmp_name;
    tmp_name << key << ".json.tmp." << std::this_thread::get_id();
    auto tmp_path = dir_ / tmp_name.str();
    {
      std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
      if (!out) throw BackendError("cannot write transcript " + tmp_path.string());
      out << j.dump(2) << '\n';
    }
    std::filesystem::rename(tmp_path, final_path);
  }

 private:
  std::filesystem::path dir_;
  std::mutex mu_;
};

class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(std::shared_ptr<TranscriptStore> store) : store_(std::move(store)) {}

  std::vector<Completion> generate(const GenerationRequest& req) override {
    auto key = req.key();
    auto found = store_->load(key);
    if (!found) throw ReplayMissError(key);
    return *found;
  }
  BackendMode mode() const override { return BackendMode::Replay; }

 private:
  std::shared_ptr<TranscriptStore> store_;
};

/// Forwards to `source` and appends every response to the store.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> source, std::shared_ptr<TranscriptStore> store)
      : source_(std::move(source)), store_(std::move(store)) {}

  std::vector<Completion> generate(const GenerationRequest& req) override {
    auto out = source_->generate(req);
    store_->save(req, out);
    return out;
  }
  BackendMode mode() const override { return BackendMode::Record; }

 private:
  std::shared_ptr<Backend> source_;
  std::shared_ptr<TranscriptStore> store_;
};

// ---------------------------------------------------------------------------
// Gateway

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  double jitter = 0.25;  // +- fraction of the nominal delay
};

struct GatewayOptions {
  RetryPolicy retry;
  int max_in_flight = 4;
  std::uint64_t jitter_seed = 0x5eed;
  /// Injected for tests; defaults to std::this_thread::sleep_for.
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
  std::int64_t calls = 0;
  std::int64_t retries = 0;
  TokenUsage usage;
};

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions opts = {})
      : backend_(std::move(backend)), opts_(std::move(opts)), rng_(opts_.jitter_seed) {
    if (!backend_) throw ConfigError("gateway needs a backend");
    if (opts_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (!opts_.sleep) opts_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  BackendMode mode() const { return backend_->mode(); }
  int max_in_flight() const { return opts_.max_in_flight; }

  /// n_samples completions for the request. Transient backend failures are
  /// retried with jittered exponential backoff; replay misses are not.
  std::vector<Completion> complete(const GenerationRequest& req) {
    req.validate();
    Slot slot(*this);
    for (int attempt = 0;; ++attempt) {
      try {
        auto out = backend_->generate(req);
        if (static_cast<int>(out.size()) != req.n_samples)
          throw BackendError("backend returned " + std::to_string(out.size()) + " completions, expected " +
                             std::to_string(req.n_samples));
        std::lock_guard lock(stats_mu_);
        ++stats_.calls;
        for (const auto& c : out) stats_.usage += c.usage;
        return out;
      } catch (const ReplayMissError&) {
        throw;
      } catch (const BackendError& e) {
        if (!e.transient() || attempt >= opts_.retry.max_retries)
          throw BackendError(std::string(e.what()) + (attempt ? " (after " + std::to_string(attempt) + " retries)" : ""),
                             false);
        {
          std::lock_guard lock(stats_mu_);
          ++stats_.retries;
        }
        opts_.sleep(backoff_delay(attempt));
      }
    }
  }

  /// Nominal delay base * factor^attempt, jittered.
  std::chrono::milliseconds backoff_delay(int attempt) {
    double nominal = static_cast<double>(opts_.retry.base_delay.count());
    for (int i = 0; i < attempt; ++i) nominal *= opts_.retry.factor;
    std::lock_guard lock(stats_mu_);
    std::uniform_real_distribution<double> dist(-opts_.retry.jitter, opts_.retry.jitter);
    return std::chrono::milliseconds(static_cast<std::int64_t>(nominal * (1.0 + dist(rng_))));
  }

  GatewayStats stats() const {
    std::lock_guard lock(stats_mu_);
    return stats_;
  }

 private:
  class Slot {
   public:
    explicit Slot(Gateway& g) : g_(g) {
      std::unique_lock lock(g_.slot_mu_);
      g_.slot_cv_.wait(lock, [&] { return g_.in_flight_ < g_.opts_.max_in_flight; });
      ++g_.in_flight_;
    }
    ~Slot() {
      {
        std::lock_guard lock(g_.slot_mu_);
        --g_.in_flight_;
      }
      g_.slot_cv_.notify_one();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    Gateway& g_;
  };

  std::shared_ptr<Backend> backend_;
  GatewayOptions opts_;
  std::mt19937_64 rng_;
  mutable std::mutex stats_mu_;
  GatewayStats stats_;
  std::mutex slot_mu_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
};

}  // namespace divprompt
