#pragma once

#include <gmpxx.h>

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace carnot {

using Rational = mpq_class;

/// Parses "p/q", "p" or a decimal-free integer string into a canonical rational.
Rational parse_rational(std::string_view text);

/// Canonical "p/q" (or "p" when q == 1) rendering.
std::string format_rational(const Rational& q);

/// Exact square root when both numerator and denominator are perfect squares.
std::optional<Rational> exact_sqrt(const Rational& q);

/// Best rational approximation with denominator <= max_den (continued fractions).
Rational rationalize(double x, long max_den = 1000000);

template <class T>
struct ScalarTraits;

template <>
struct ScalarTraits<Rational> {
  static constexpr bool exact = true;
  static Rational zero() { return Rational(0); }
  static Rational one() { return Rational(1); }
  static bool is_zero(const Rational& x) { return sgn(x) == 0; }
  static double to_double(const Rational& x) { return x.get_d(); }
  static Rational from_rational(const Rational& x) { return x; }
  static Rational abs(const Rational& x) { return ::abs(x); }
  static int sign(const Rational& x) { return sgn(x); }
  static const char* name() { return "exact"; }
};

template <>
struct ScalarTraits<double> {
  static constexpr bool exact = false;
  static double zero() { return 0.0; }
  static double one() { return 1.0; }
  static bool is_zero(double x) { return x == 0.0; }
  static double to_double(double x) { return x; }
  static double from_rational(const Rational& x) { return x.get_d(); }
  static double abs(double x) { return std::fabs(x); }
  static int sign(double x) { return (x > 0) - (x < 0); }
  static const char* name() { return "numeric"; }
};

template <class T>
double to_double(const T& x) {
  return ScalarTraits<T>::to_double(x);
}

}  // namespace carnot
