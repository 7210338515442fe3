// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>

#include "divprompt/error.hpp"
#include "divprompt/text.hpp"

namespace divprompt {

/// US dollars held as an integer count of micro-dollars (6 decimal places).
class Usd {
 public:
  constexpr Usd() = default;
  static constexpr Usd from_micros(std::int64_t micros) { return Usd(micros); }

  /// Parses "0.03", "$1.5", "12" exactly; more than 6 decimals is rejected.
  static Usd parse(std::string_view s) {
    s = text::trim(s);
    if (!s.empty() && s.front() == '$') s.remove_prefix(1);
    bool neg = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
      neg = s.front() == '-';
      s.remove_prefix(1);
    }
    if (s.empty()) throw ConfigError("empty dollar amount");
    std::int64_t whole = 0, frac = 0;
    int frac_digits = 0;
    bool seen_dot = false, seen_digit = false;
    for (char c : s) {
      if (c == '.' && !seen_dot) {
        seen_dot = true;
      } else if (c >= '0' && c <= '9') {
        seen_digit = true;
        if (seen_dot) {
          if (++frac_digits > 6) throw ConfigError("dollar amount finer than 1e-6: " + std::string(s));
          frac = frac * 10 + (c - '0');
        } else {
          whole = whole * 10 + (c - '0');
        }
      } else {
        throw ConfigError("malformed dollar amount: " + std::string(s));
      }
    }
    if (!seen_digit) throw ConfigError("malformed dollar amount: " + std::string(s));
    for (int i = frac_digits; i < 6; ++i) frac *= 10;
    std::int64_t micros = whole * 1'000'000 + frac;
    return Usd(neg ? -micros : micros);
  }

  /// Nearest micro-dollar; only for values that already carry <= 6 decimals.
  static Usd from_double(double d) { return Usd(std::llround(d * 1e6)); }

  constexpr std::int64_t micros() const { return micros_; }
  double to_double() const { return static_cast<double>(micros_) / 1e6; }

  /// Fixed six-decimal rendering, e.g. "0.090000".
  std::string str() const {
    std::int64_t m = micros_ < 0 ? -micros_ : micros_;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%06lld", micros_ < 0 ? "-" : "",
                  static_cast<long long>(m / 1'000'000), static_cast<long long>(m % 1'000'000));
    return buf;
  }

  constexpr Usd& operator+=(Usd o) {
    micros_ += o.micros_;
    return *this;
  }
  friend constexpr Usd operator+(Usd a, Usd b) { return a += b; }
  friend constexpr auto operator<=>(Usd, Usd) = default;

 private:
  constexpr explicit Usd(std::int64_t m) : micros_(m) {}
  std::int64_t micros_ = 0;
};

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;

  TokenUsage& operator+=(const TokenUsage& o) {
    input_tokens += o.input_tokens;
    output_tokens += o.output_tokens;
    return *this;
  }
  friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

/// Per-1k-token prices for one model.
struct PriceTable {
  std::string model_id;
  Usd input_rate_per_1k;
  Usd output_rate_per_1k;

  void validate() const {
    if (input_rate_per_1k < Usd{} || output_rate_per_1k < Usd{})
      throw ConfigError("negative price for model " + model_id);
  }

  /// GPT-4 (8K): $0.03 / 1k input, $0.06 / 1k output.
  static PriceTable gpt4() {
    return {"gpt-4", Usd::parse("0.03"), Usd::parse("0.06")};
  }
  /// GPT-3.5 Turbo (16K): $0.003 / 1k input, $0.004 / 1k output.
  static PriceTable gpt35_turbo() {
    return {"gpt-3.5-turbo-16k", Usd::parse("0.003"), Usd::parse("0.004")};
  }
};

/// Token estimate from the 1000 tokens ~ 750 words ratio: ceil(words * 4 / 3).
inline std::int64_t estimate_tokens(std::string_view s) {
  auto n = static_cast<std::int64_t>(text::words(s).size());
  return (n * 4 + 2) / 3;
}

/// Dollar cost of one completion, rounded half-up to the micro-dollar.
inline Usd compute_cost(const TokenUsage& usage, const PriceTable& prices) {
  // micro-dollars * tokens / 1000, kept in thousandths of a micro until the end
  std::int64_t milli_micros = usage.input_tokens * prices.input_rate_per_1k.micros() +
                              usage.output_tokens * prices.output_rate_per_1k.micros();
  return Usd::from_micros((milli_micros + 500) / 1000);
}

}  // namespace divprompt
