// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

namespace divprompt {

using Rational = boost::multiprecision::cpp_rational;

/// Parses "1,392", "-4", "0.25", "3/2", "1.5/2" into an exact rational.
/// Returns nullopt on anything else.
inline std::optional<Rational> parse_rational(std::string_view s) {
  std::string digits;
  for (char c : s)
    if (c != ',') digits += c;
  auto parse_decimal = [](std::string_view t) -> std::optional<Rational> {
    if (t.empty()) return std::nullopt;
    bool neg = false;
    if (t.front() == '-' || t.front() == '+') {
      neg = t.front() == '-';
      t.remove_prefix(1);
    }
    boost::multiprecision::cpp_int num = 0, den = 1;
    bool dot = false, any = false;
    for (char c : t) {
      if (c == '.' && !dot) {
        dot = true;
      } else if (c >= '0' && c <= '9') {
        any = true;
        num = num * 10 + (c - '0');
        if (dot) den *= 10;
      } else {
        return std::nullopt;
      }
    }
    if (!any) return std::nullopt;
    Rational r(num, den);
    return neg ? Rational(-r) : r;
  };
  std::string_view v = digits;
  auto slash = v.find('/');
  if (slash == std::string_view::npos) return parse_decimal(v);
  auto n = parse_decimal(v.substr(0, slash));
  auto d = parse_decimal(v.substr(slash + 1));
  if (!n || !d || *d == 0) return std::nullopt;
  return Rational(*n / *d);
}

/// "3/2", "72", "-1/4".
inline std::string to_string(const Rational& r) {
  std::ostringstream os;
  os << boost::multiprecision::numerator(r);
  if (boost::multiprecision::denominator(r) != 1) os << '/' << boost::multiprecision::denominator(r);
  return os.str();
}

}  // namespace divprompt
