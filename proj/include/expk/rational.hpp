#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <string>

#include "expk/errors.hpp"

namespace expk {

// Exact rational scalar with arbitrary-precision integer parts.
using Rat = boost::multiprecision::cpp_rational;

inline Rat rat(long long num, long long den = 1) { return Rat(num, den); }

inline double to_double(const Rat& r) { return r.convert_to<double>(); }

inline Rat rat_factorial(int k) {
  Rat f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// Accepts "num" or "num/den" with optional sign and surrounding blanks.
inline Rat parse_rational(const std::string& text) {
  std::string s;
  s.reserve(text.size());
  for (char c : text)
    if (c != ' ' && c != '\t') s.push_back(c);
  if (s.empty()) throw config_error("rational: empty value");
  const auto slash = s.find('/');
  try {
    if (slash == std::string::npos)
      return Rat(boost::multiprecision::cpp_int(s));
    const boost::multiprecision::cpp_int num(s.substr(0, slash));
    const boost::multiprecision::cpp_int den(s.substr(slash + 1));
    if (den == 0) throw config_error("rational: zero denominator in '" + text + "'");
    return Rat(num, den);
  } catch (const config_error&) {
    throw;
  } catch (const std::exception&) {
    throw config_error("rational: cannot parse '" + text + "'");
  }
}

// Canonical text form: "num" for integers, "num/den" otherwise.
inline std::string format_rational(const Rat& r) {
  std::string s = numerator(r).str();
  if (denominator(r) != 1) s += "/" + denominator(r).str();
  return s;
}

}  // namespace expk
