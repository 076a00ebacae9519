#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cgqn/problem.hpp"

namespace cgqn {

class InvalidSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ProblemKind { RandomSpd, DiagonalSpectrum, HilbertLike, Sr1Trap };

inline std::string_view kind_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::RandomSpd: return "random-spd";
    case ProblemKind::DiagonalSpectrum: return "diagonal-spectrum";
    case ProblemKind::HilbertLike: return "hilbert-like";
    case ProblemKind::Sr1Trap: return "sr1-trap";
  }
  return "?";
}

/// Recipe for a generated problem.
///
///   random-spd         H = L D L^T (exact; small-integer unit lower L) or
///                      Q diag(lambda) Q^T (float; random Householder Q with
///                      log-spaced spectrum up to `condition`).
///   diagonal-spectrum  H with exactly the listed eigenvalues. seed 0 gives
///                      diag(eigs), c = -H 1, x0 = 0; other seeds rotate by a
///                      rational orthogonal Cayley transform and draw x*, x0.
///   hilbert-like       H_ij = 1 / (i + j + 1).
///   sr1-trap           g0 has Rayleigh quotient exactly 1, so the first step
///                      from B_0 = I is a unit step.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::RandomSpd;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<Rational> eigenvalues;
  std::optional<double> condition;
};

namespace detail {

// Splits on `sep` at bracket depth zero.
inline std::vector<std::string> split_top_level(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (const char ch : s) {
    if (ch == '[') ++depth;
    if (ch == ']') --depth;
    if (ch == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw InvalidSpecError("spec key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

}  // namespace detail

/// Validates the invariants every generator relies on.
inline void validate(const ProblemSpec& spec) {
  const bool diag = spec.kind == ProblemKind::DiagonalSpectrum;
  if (diag && spec.eigenvalues.empty()) throw InvalidSpecError("diagonal-spectrum needs eigs=[...]");
  if (diag && spec.n != 0 && spec.n != spec.eigenvalues.size())
    throw InvalidSpecError("n does not match the number of eigenvalues");
  if (!diag && spec.n == 0) throw InvalidSpecError("dimension n must be at least 1");
  if (spec.kind == ProblemKind::Sr1Trap && spec.n < 2) throw InvalidSpecError("sr1-trap needs n >= 2");
  if (spec.kind == ProblemKind::RandomSpd && !spec.eigenvalues.empty() && spec.eigenvalues.size() != spec.n)
    throw InvalidSpecError("random-spd: eigs must have n entries");
  for (const auto& e : spec.eigenvalues)
    if (sgn(e) <= 0) throw InvalidSpecError("spectrum must be strictly positive");
  if (spec.condition && !(*spec.condition >= 1.0)) throw InvalidSpecError("cond must be >= 1");
}

/// Parses "kind[:key=value,...]", keys n, seed, eigs=[a,b,...], cond.
inline ProblemSpec parse_problem_spec(std::string_view text) {
  ProblemSpec spec;
  const auto colon = text.find(':');
  const std::string kind(text.substr(0, colon));
  if (kind == "random-spd")
    spec.kind = ProblemKind::RandomSpd;
  else if (kind == "diagonal-spectrum")
    spec.kind = ProblemKind::DiagonalSpectrum;
  else if (kind == "hilbert-like")
    spec.kind = ProblemKind::HilbertLike;
  else if (kind == "sr1-trap")
    spec.kind = ProblemKind::Sr1Trap;
  else
    throw InvalidSpecError("unknown problem kind '" + kind + "'");

  if (colon != std::string_view::npos) {
    for (const auto& item : detail::split_top_level(text.substr(colon + 1), ',')) {
      if (item.empty()) continue;
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw InvalidSpecError("expected key=value, got '" + item + "'");
      const std::string key = item.substr(0, eq), value = item.substr(eq + 1);
      if (key == "n") {
        spec.n = detail::parse_unsigned(key, value);
      } else if (key == "seed") {
        spec.seed = detail::parse_unsigned(key, value);
      } else if (key == "cond") {
        try {
          spec.condition = scalar_traits<double>::parse(value);
        } catch (const ScalarParseError& e) {
          throw InvalidSpecError(e.what());
        }
      } else if (key == "eigs") {
        std::string body = value;
        if (body.size() < 2 || body.front() != '[' || body.back() != ']')
          throw InvalidSpecError("eigs must be written as [a,b,...]");
        body = body.substr(1, body.size() - 2);
        spec.eigenvalues.clear();
        for (const auto& e : detail::split_top_level(body, ',')) {
          try {
            spec.eigenvalues.push_back(scalar_traits<Rational>::parse(e));
          } catch (const ScalarParseError& err) {
            throw InvalidSpecError(err.what());
          }
        }
      } else {
        throw InvalidSpecError("unknown spec key '" + key + "'");
      }
    }
  }
  if (spec.kind == ProblemKind::DiagonalSpectrum && spec.n == 0) spec.n = spec.eigenvalues.size();
  validate(spec);
  return spec;
}

inline std::string describe(const ProblemSpec& spec) {
  std::ostringstream os;
  os << kind_name(spec.kind) << ":n=" << spec.n << ",seed=" << spec.seed;
  if (!spec.eigenvalues.empty()) {
    os << ",eigs=[";
    for (std::size_t i = 0; i < spec.eigenvalues.size(); ++i) os << (i ? "," : "") << spec.eigenvalues[i].get_str();
    os << "]";
  }
  if (spec.condition) os << ",cond=" << scalar_traits<double>::to_string(*spec.condition);
  return os.str();
}

/// Deterministic draws from a seeded 64-bit Mersenne twister. Only raw engine
/// output is used, so sequences are identical across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : eng_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  long uniform_int(long lo, long hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<long>(eng_() % span);
  }
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

namespace detail {

// Rational orthogonal matrix Q = (I - S)(I + S)^{-1}, S skew-symmetric with
// small integer entries. I + S is always invertible.
inline Matrix<Rational> cayley_orthogonal(std::size_t n, SeededRng& rng) {
  Matrix<Rational> ipS(n, n), imS(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    ipS(i, i) = 1;
    imS(i, i) = 1;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Rational s = rng.uniform_int(-2, 2);
      ipS(i, j) = s;
      ipS(j, i) = -s;
      imS(i, j) = -s;
      imS(j, i) = s;
    }
  }
  auto inv = solve_linear(ipS, [&] {
    Matrix<Rational> I(n, n);
    for (std::size_t i = 0; i < n; ++i) I(i, i) = 1;
    return I;
  }());
  return multiply(imS, *inv);
}

// Q diag(d) Q^T
inline SymMatrix<Rational> congruence(const Matrix<Rational>& Q, const std::vector<Rational>& d) {
  const std::size_t n = d.size();
  Matrix<Rational> QD(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) QD(i, j) = Q(i, j) * d[j];
  Matrix<Rational> out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Rational s = 0;
      for (std::size_t r = 0; r < n; ++r) s += QD(i, r) * Q(j, r);
      out(i, j) = s;
    }
  return SymMatrix<Rational>(std::move(out));
}

inline Vector<Rational> random_int_vector(std::size_t n, SeededRng& rng, long lo, long hi) {
  Vector<Rational> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform_int(lo, hi);
  return v;
}

template <Field T>
QuadraticProblem<T> from_minimizer(const SymMatrix<Rational>& H, const Vector<Rational>& xstar,
                                   const Vector<Rational>& x0) {
  const Vector<Rational> c = -matvec(H, xstar);
  return convert_problem<T>(QuadraticProblem<Rational>(H, c, x0));
}

inline QuadraticProblem<double> random_spd_float(const ProblemSpec& spec) {
  const std::size_t n = spec.n;
  SeededRng rng(spec.seed);
  std::vector<double> lambda(n);
  if (!spec.eigenvalues.empty()) {
    for (std::size_t i = 0; i < n; ++i) lambda[i] = spec.eigenvalues[i].get_d();
  } else {
    const double cond = spec.condition.value_or(100.0);
    for (std::size_t i = 0; i < n; ++i)
      lambda[i] = n == 1 ? 1.0 : std::pow(cond, static_cast<double>(i) / static_cast<double>(n - 1));
  }
  // M <- R M R with Householder reflections R = I - 2 v v^T / v^T v.
  Matrix<double> M(n, n);
  for (std::size_t i = 0; i < n; ++i) M(i, i) = lambda[i];
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> v(n);
    double vv = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      vv += x * x;
    }
    std::vector<double> Mv(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += M(i, j) * v[j];
      Mv[i] = s;
    }
    double vMv = 0.0;
    for (std::size_t i = 0; i < n; ++i) vMv += v[i] * Mv[i];
    // R M R = M - (2/vv)(Mv v^T + v vM) + (4 vMv / vv^2) v v^T
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        M(i, j) += -2.0 / vv * (Mv[i] * v[j] + v[i] * Mv[j]) + 4.0 * vMv / (vv * vv) * v[i] * v[j];
  }
  SymMatrix<double> H(std::move(M));
  Vector<double> xstar(n);
  for (std::size_t i = 0; i < n; ++i) xstar[i] = rng.normal();
  return QuadraticProblem<double>(H, -matvec(H, xstar), Vector<double>(n));
}

}  // namespace detail

template <Field T>
QuadraticProblem<T> generate(const ProblemSpec& spec) {
  validate(spec);
  SeededRng rng(spec.seed);
  const std::size_t n = spec.kind == ProblemKind::DiagonalSpectrum ? spec.eigenvalues.size() : spec.n;

  switch (spec.kind) {
    case ProblemKind::RandomSpd: {
      if constexpr (!is_exact_v<T>) {
        return detail::random_spd_float(spec);
      } else {
        std::vector<Rational> d(n);
        for (std::size_t i = 0; i < n; ++i)
          d[i] = spec.eigenvalues.empty() ? make_rational(rng.uniform_int(1, 9), rng.uniform_int(1, 3))
                                          : spec.eigenvalues[i];
        Matrix<Rational> L(n, n);
        for (std::size_t i = 0; i < n; ++i) {
          L(i, i) = 1;
          for (std::size_t j = 0; j < i; ++j) L(i, j) = rng.uniform_int(-2, 2);
        }
        const SymMatrix<Rational> H = detail::congruence(L, d);
        const Vector<Rational> xstar = detail::random_int_vector(n, rng, -3, 3);
        Vector<Rational> x0 = detail::random_int_vector(n, rng, -3, 3);
        if (x0 == xstar) x0[0] += 1;
        return detail::from_minimizer<T>(H, xstar, x0);
      }
    }
    case ProblemKind::DiagonalSpectrum: {
      if (spec.seed == 0) {
        const SymMatrix<Rational> H = SymMatrix<Rational>::diagonal(Vector<Rational>(spec.eigenvalues));
        return detail::from_minimizer<T>(H, Vector<Rational>(std::vector<Rational>(n, Rational(1))),
                                         Vector<Rational>(n));
      }
      const Matrix<Rational> Q = detail::cayley_orthogonal(n, rng);
      const SymMatrix<Rational> H = detail::congruence(Q, spec.eigenvalues);
      const Vector<Rational> xstar = detail::random_int_vector(n, rng, -3, 3);
      Vector<Rational> x0 = detail::random_int_vector(n, rng, -3, 3);
      if (x0 == xstar) x0[0] += 1;
      return detail::from_minimizer<T>(H, xstar, x0);
    }
    case ProblemKind::HilbertLike: {
      SymMatrix<Rational> H(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) H.set(i, j, make_rational(1, static_cast<long>(i + j + 1)));
      Vector<Rational> xstar(std::vector<Rational>(n, Rational(1)));
      if (spec.seed != 0) {
        xstar = detail::random_int_vector(n, rng, -3, 3);
        if (xstar.is_zero()) xstar[0] = 1;
      }
      return detail::from_minimizer<T>(H, xstar, Vector<Rational>(n));
    }
    case ProblemKind::Sr1Trap: {
      // Eigenvalue pairs 1 -/+ u_j with equal weights in g0 cancel in
      // g0^T (H - I) g0; an odd leftover eigenvalue is exactly 1.
      std::vector<Rational> d;
      for (std::size_t j = 0; d.size() + 1 < n; ++j) {
        const Rational u = make_rational(1, static_cast<long>(j + 2));
        d.push_back(1 - u);
        d.push_back(1 + u);
      }
      if (d.size() < n) d.push_back(1);
      Vector<Rational> g0(std::vector<Rational>(n, Rational(-1)));
      SymMatrix<Rational> H = SymMatrix<Rational>::diagonal(Vector<Rational>(d));
      Vector<Rational> x0(n);
      if (spec.seed != 0) {
        const Matrix<Rational> Q = detail::cayley_orthogonal(n, rng);
        H = detail::congruence(Q, d);
        g0 = matvec(Q, g0);
        x0 = detail::random_int_vector(n, rng, -3, 3);
      }
      const Vector<Rational> c = g0 - matvec(H, x0);
      return convert_problem<T>(QuadraticProblem<Rational>(H, c, x0));
    }
  }
  throw InvalidSpecError("unhandled problem kind");
}

}  // namespace cgqn
