// SPDX-License-Identifier: Apache-2.0
#pragma once

// Builds the configured backend and gateway.

#include <memory>

#include "divprompt/config.hpp"
#include "divprompt/gateway.hpp"
#include "divprompt/live_backend.hpp"

namespace divprompt {

inline std::shared_ptr<Backend> make_live_backend(const BackendSettings& s) {
  return std::make_shared<LiveBackend>(LiveEndpoint{s.base_url, s.path, s.api_key_env, s.timeout_seconds});
}

/// Record mode records from the script when one is set, else from the live API.
inline std::shared_ptr<Backend> make_backend(const BackendSettings& s) {
  auto need = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("backend mode needs \"") + what + "\"");
  };
  switch (s.mode) {
    case BackendMode::Live: return make_live_backend(s);
    case BackendMode::Scripted:
      need(s.script, "script");
      return std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(s.script));
    case BackendMode::Replay:
      need(s.transcripts, "transcripts");
      if (!std::filesystem::is_directory(s.transcripts))
        throw ConfigError("transcript directory not found: " + s.transcripts.string());
      return std::make_shared<ReplayBackend>(std::make_shared<TranscriptStore>(s.transcripts));
    case BackendMode::Record: {
      need(s.transcripts, "transcripts");
      std::shared_ptr<Backend> source = s.script.empty()
                                            ? make_live_backend(s)
                                            : std::make_shared<ScriptedBackend>(ScriptedBackend::from_file(s.script));
      return std::make_shared<RecordingBackend>(source, std::make_shared<TranscriptStore>(s.transcripts));
    }
  }
  throw ConfigError("unknown backend mode");
}

inline Gateway make_gateway(const RunConfigFile& f) {
  GatewayOptions opts;
  opts.max_in_flight = f.concurrency;
  opts.retry.max_retries = f.backend.max_retries;
  opts.retry.base_delay = std::chrono::milliseconds(f.backend.base_delay_ms);
  opts.jitter_seed = f.seed;
  return Gateway(make_backend(f.backend), std::move(opts));
}

}  // namespace divprompt
