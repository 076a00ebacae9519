#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cgqn/generate.hpp"
#include "cgqn/verify.hpp"

namespace cgqn::testing {

inline Rational q(long num, long den = 1) { return make_rational(num, den); }

inline Vector<Rational> qvec(std::initializer_list<Rational> xs) { return Vector<Rational>(std::vector<Rational>(xs)); }

inline QuadraticProblem<Rational> reference_problem() {
  return QuadraticProblem<Rational>(SymMatrix<Rational>::diagonal(qvec({2, 4})), qvec({-2, -4}), Vector<Rational>(2));
}

inline Rational random_rational(SeededRng& rng, long lo, long hi, long max_den = 4) {
  const long den = rng.uniform_int(1, max_den);
  return make_rational(rng.uniform_int(lo * den, hi * den), den);
}

inline Vector<Rational> random_vector(SeededRng& rng, std::size_t n, long lo = -3, long hi = 3) {
  Vector<Rational> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = random_rational(rng, lo, hi);
  return v;
}

inline SymMatrix<Rational> random_symmetric(SeededRng& rng, std::size_t n, long lo = -3, long hi = 3) {
  SymMatrix<Rational> A(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) A.set(i, j, random_rational(rng, lo, hi));
  return A;
}

inline QuadraticProblem<Rational> random_problem(std::uint64_t seed, std::size_t n) {
  ProblemSpec spec;
  spec.kind = ProblemKind::RandomSpd;
  spec.n = n;
  spec.seed = seed;
  return generate<Rational>(spec);
}

/// phi_k drawn from rationals in [lo, hi] with denominators up to 4; a draw
/// equal to the degenerate value is redrawn.
inline PhiSchedule<Rational> random_phi_schedule(std::uint64_t seed, long lo = -5, long hi = 5) {
  auto rng = std::make_shared<SeededRng>(seed * 7919 + 17);
  return PhiSchedule<Rational>::custom("random", [rng, lo, hi](const PhiContext<Rational>& ctx) {
    while (true) {
      const Rational phi = random_rational(*rng, lo, hi);
      if (phi != ctx.degenerate_value()) return phi;
    }
  });
}

/// Determinant by cofactor expansion along the first row.
inline Rational cofactor_determinant(const std::vector<std::vector<Rational>>& a) {
  const std::size_t n = a.size();
  if (n == 0) return 1;
  if (n == 1) return a[0][0];
  Rational det = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (a[0][j] == 0) continue;
    std::vector<std::vector<Rational>> minor;
    for (std::size_t i = 1; i < n; ++i) {
      std::vector<Rational> row;
      for (std::size_t c = 0; c < n; ++c)
        if (c != j) row.push_back(a[i][c]);
      minor.push_back(std::move(row));
    }
    const Rational term = a[0][j] * cofactor_determinant(minor);
    det += (j % 2 == 0) ? term : Rational(-term);
  }
  return det;
}

inline std::vector<std::vector<Rational>> rows_of(const SymMatrix<Rational>& A) {
  std::vector<std::vector<Rational>> r(A.size(), std::vector<Rational>(A.size()));
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = 0; j < A.size(); ++j) r[i][j] = A(i, j);
  return r;
}

}  // namespace cgqn::testing
