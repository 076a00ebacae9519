#pragma once

#include <gmpxx.h>

#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace cgqn {

/// Arbitrary-precision rational. Every arithmetic result is kept in lowest
/// terms with a positive denominator.
using Rational = mpq_class;

/// Relative + absolute threshold used for every floating-point zero test.
/// Exact arithmetic never consults it.
struct Tolerance {
  double rel = 1e-10;
  double abs = 0.0;

  [[nodiscard]] double threshold(double scale) const { return abs + rel * scale; }
};

class ScalarParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Builds num/den in canonical form.
inline Rational make_rational(long num, long den = 1) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  Rational q(num, den);
  q.canonicalize();
  return q;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return std::string(s.substr(b, e - b));
}

// Decimal or scientific literal converted without rounding: "-20.25" -> -81/4.
inline Rational parse_decimal_exact(const std::string& s) {
  std::size_t pos = 0;
  bool negative = false;
  if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) negative = s[pos++] == '-';
  std::string digits;
  long frac_digits = 0;
  bool seen_point = false, seen_digit = false;
  for (; pos < s.size(); ++pos) {
    const char ch = s[pos];
    if (ch >= '0' && ch <= '9') {
      digits.push_back(ch);
      seen_digit = true;
      if (seen_point) ++frac_digits;
    } else if (ch == '.' && !seen_point) {
      seen_point = true;
    } else {
      break;
    }
  }
  if (!seen_digit) throw ScalarParseError("not a number: '" + s + "'");
  long exponent = 0;
  if (pos < s.size()) {
    if (s[pos] != 'e' && s[pos] != 'E') throw ScalarParseError("not a number: '" + s + "'");
    ++pos;
    const char* first = s.data() + pos;
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, exponent);
    if (ec != std::errc() || ptr != last) throw ScalarParseError("bad exponent in '" + s + "'");
  }
  mpz_class num(digits, 10);
  if (negative) num = -num;
  const long shift = exponent - frac_digits;
  mpz_class scale;
  mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(shift < 0 ? -shift : shift));
  Rational q = shift < 0 ? Rational(num, scale) : Rational(num * scale, 1);
  q.canonicalize();
  return q;
}

}  // namespace detail

template <typename T>
struct scalar_traits;

template <>
struct scalar_traits<Rational> {
  static constexpr bool exact = true;
  static constexpr const char* mode_name = "rational";

  /// Accepts "p", "p/q" and exact decimal notation ("0.5", "-2e3").
  static Rational parse(std::string_view text) {
    const std::string s = detail::trim(text);
    if (s.empty()) throw ScalarParseError("empty scalar");
    if (s.find_first_of(".eE") != std::string::npos) return detail::parse_decimal_exact(s);
    Rational q;
    const std::string body = (s[0] == '+') ? s.substr(1) : s;
    if (q.set_str(body, 10) != 0) throw ScalarParseError("not a rational: '" + s + "'");
    if (q.get_den() == 0) throw ScalarParseError("zero denominator: '" + s + "'");
    q.canonicalize();
    return q;
  }
  static std::string to_string(const Rational& x) { return x.get_str(); }
  static double to_double(const Rational& x) { return x.get_d(); }
  static Rational from_rational(const Rational& x) { return x; }
  static Rational from_double(double x) { return Rational(x); }
};

template <>
struct scalar_traits<double> {
  static constexpr bool exact = false;
  static constexpr const char* mode_name = "float";

  static double parse(std::string_view text) {
    const std::string s = detail::trim(text);
    if (s.find('/') != std::string::npos) return scalar_traits<Rational>::parse(s).get_d();
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw ScalarParseError("not a number: '" + s + "'");
    return v;
  }
  /// Shortest decimal that round-trips.
  static std::string to_string(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
  }
  static double to_double(double x) { return x; }
  static double from_rational(const Rational& x) { return x.get_d(); }
  static double from_double(double x) { return x; }
};

template <typename T>
concept Field = requires(const T& a) {
  { scalar_traits<T>::exact } -> std::convertible_to<bool>;
  { scalar_traits<T>::to_double(a) } -> std::convertible_to<double>;
};

template <Field T>
inline constexpr bool is_exact_v = scalar_traits<T>::exact;

template <Field T>
double to_double(const T& x) {
  return scalar_traits<T>::to_double(x);
}

template <Field T>
std::string to_string(const T& x) {
  return scalar_traits<T>::to_string(x);
}

template <Field T>
T parse_scalar(std::string_view s) {
  return scalar_traits<T>::parse(s);
}

template <Field T>
T from_rational(const Rational& x) {
  return scalar_traits<T>::from_rational(x);
}

template <Field T>
double magnitude(const T& x) {
  return std::fabs(to_double(x));
}

/// Zero test: exact equality for rationals, |x| <= tol.threshold(scale) for floats.
template <Field T>
bool negligible(const T& x, double scale, const Tolerance& tol) {
  if constexpr (is_exact_v<T>) {
    return x == 0;
  } else {
    return std::fabs(x) <= tol.threshold(scale);
  }
}

template <Field T>
int sign(const T& x) {
  if constexpr (is_exact_v<T>) {
    return sgn(x);
  } else {
    return (x > 0) - (x < 0);
  }
}

}  // namespace cgqn
