// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace divprompt {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, config files or command usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Chat-completion backend failed (transport, provider or protocol).
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool transient = false)
      : Error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

/// Replay mode was asked for a request that was never recorded.
class ReplayMissError : public BackendError {
 public:
  explicit ReplayMissError(std::string key)
      : BackendError("replay miss: no transcript for request key " + key),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// No answer of the requested kind could be read from a completion.
class ExtractionError : public Error {
 public:
  using Error::Error;
};

/// Completion could not be split into per-approach segments.
class SegmentationError : public ExtractionError {
 public:
  using ExtractionError::ExtractionError;
};

/// Plan or coloring text that violates its grammar.
class ParseError : public ExtractionError {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : ExtractionError(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  /// One-based line number, zero when not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CompositionError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::size_t index)
      : Error("record " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Raised when augmentation exhausts its retry budget for some (pair, shot) cells.
class AugmentationError : public Error {
 public:
  AugmentationError(const std::string& what,
                    std::vector<std::pair<std::size_t, std::size_t>> failing)
      : Error(what), failing_(std::move(failing)) {}
  const std::vector<std::pair<std::size_t, std::size_t>>& failing() const noexcept {
    return failing_;
  }

 private:
  std::vector<std::pair<std::size_t, std::size_t>> failing_;
};

}  // namespace divprompt
