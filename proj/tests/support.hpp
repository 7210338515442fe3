// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace divprompt::support {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(DIVPROMPT_FIXTURES) / rel; }
inline std::filesystem::path golden(const std::string& rel) { return std::filesystem::path(DIVPROMPT_GOLDEN) / rel; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Set DIVPROMPT_UPDATE_GOLDEN=1 to rewrite golden files from current output.
inline bool update_golden() {
  const char* v = std::getenv("DIVPROMPT_UPDATE_GOLDEN");
  return v && *v && std::string(v) != "0";
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary | std::ios::trunc) << content;
}

}  // namespace divprompt::support
