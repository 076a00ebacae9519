#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace cgqn;
using namespace cgqn::testing;

TEST(Scalar, ParsesRationalForms) {
  EXPECT_EQ(parse_scalar<Rational>("3/6"), q(1, 2));
  EXPECT_EQ(parse_scalar<Rational>("-20.25"), q(-81, 4));
  EXPECT_EQ(parse_scalar<Rational>("+7"), q(7));
  EXPECT_EQ(parse_scalar<Rational>("1e-2"), q(1, 100));
  EXPECT_THROW(parse_scalar<Rational>("1/0"), ScalarParseError);
  EXPECT_THROW(parse_scalar<Rational>("abc"), ScalarParseError);
  EXPECT_THROW(parse_scalar<Rational>(""), ScalarParseError);
  EXPECT_DOUBLE_EQ(parse_scalar<double>("1/4"), 0.25);
  EXPECT_THROW(parse_scalar<double>("1.5x"), ScalarParseError);
}

TEST(Scalar, RationalStringsRoundTrip) {
  SeededRng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Rational x = random_rational(rng, -50, 50, 97);
    EXPECT_EQ(parse_scalar<Rational>(to_string(x)), x);
  }
  EXPECT_EQ(to_string(q(4, 2)), "2");
  EXPECT_EQ(to_string(q(-3, 9)), "-1/3");
}

TEST(Scalar, DoublesRoundTripShortest) {
  SeededRng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal() * std::pow(10.0, rng.uniform_int(-20, 20));
    EXPECT_EQ(parse_scalar<double>(to_string(x)), x);
  }
  EXPECT_EQ(to_string(0.1), "0.1");
}

TEST(Vector, ArithmeticAndInner) {
  const auto u = qvec({1, 2, 3});
  const auto v = qvec({q(1, 2), -1, 0});
  EXPECT_EQ(inner(u, v), q(-3, 2));
  EXPECT_EQ(u + v, qvec({q(3, 2), 1, 3}));
  EXPECT_EQ(q(2) * v, qvec({1, -2, 0}));
  EXPECT_THROW(inner(u, qvec({1, 2})), DimensionError);
  EXPECT_THROW(u + qvec({1}), DimensionError);
}

TEST(SymMatrix, RejectsAsymmetricRational) {
  Matrix<Rational> m(2, 2);
  m(0, 0) = 1;
  m(0, 1) = 2;
  m(1, 0) = 3;
  m(1, 1) = 1;
  EXPECT_THROW(SymMatrix<Rational>{m}, AsymmetricMatrixError);
}

TEST(SymMatrix, OuterProductsAreSymmetricRankOne) {
  const auto u = qvec({1, -2, q(1, 3)});
  const auto v = qvec({0, 1, 5});
  const auto M = SymMatrix<Rational>::outer(u, q(3));
  EXPECT_EQ(rank(M), 1u);
  EXPECT_EQ(matvec(M, v), q(3) * inner(u, v) * u);
  const auto S = SymMatrix<Rational>::sym_outer(u, v);
  EXPECT_EQ(rank(S), 2u);
}

TEST(Determinant, MatchesCofactorExpansion) {
  SeededRng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + trial % 5;
    const auto A = random_symmetric(rng, n);
    EXPECT_EQ(determinant(A), cofactor_determinant(rows_of(A))) << "trial " << trial;
  }
}

TEST(Determinant, SingularMatrixIsExactlyZero) {
  const auto u = qvec({1, 2, 3}), v = qvec({q(1, 2), 0, -1});
  const auto A = SymMatrix<Rational>::outer(u) + SymMatrix<Rational>::outer(v, q(-7, 3));
  EXPECT_EQ(determinant(A), 0);
}

TEST(LeadingMinors, NamesFirstFailure) {
  EXPECT_EQ(first_nonpositive_minor(SymMatrix<Rational>::diagonal(qvec({1, -1}))), std::optional<std::size_t>(2));
  EXPECT_EQ(first_nonpositive_minor(SymMatrix<Rational>::diagonal(qvec({0, 1}))), std::optional<std::size_t>(1));
  EXPECT_FALSE(first_nonpositive_minor(SymMatrix<Rational>::diagonal(qvec({2, 4}))).has_value());
}

TEST(LeadingMinors, AgreesWithDirectMinorsOnRandomMatrices) {
  SeededRng rng(12);
  for (int trial = 0; trial < 80; ++trial) {
    const std::size_t n = 1 + trial % 5;
    auto A = random_symmetric(rng, n);
    if (trial % 2 == 0) A = A + q(static_cast<long>(6 * n)) * SymMatrix<Rational>::identity(n);
    const auto minors = leading_principal_minors(A);
    std::optional<std::size_t> expected;
    for (std::size_t k = 0; k < minors.size() && !expected; ++k)
      if (sgn(minors[k]) <= 0) expected = k + 1;
    EXPECT_EQ(first_nonpositive_minor(A), expected) << "trial " << trial;
  }
}

TEST(SolveSymmetric, ExactSolutionsOfIndefiniteSystems) {
  SeededRng rng(13);
  int solved = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + trial % 6;
    const auto A = random_symmetric(rng, n);
    const auto b = random_vector(rng, n);
    const auto x = solve_symmetric(A, b);
    if (determinant(A) == 0) {
      EXPECT_FALSE(x.has_value());
    } else {
      ASSERT_TRUE(x.has_value());
      EXPECT_EQ(matvec(A, *x), b);
      ++solved;
    }
  }
  EXPECT_GT(solved, 40);
}

TEST(SolveSymmetric, SingularRationalReturnsNullopt) {
  const auto A = SymMatrix<Rational>::outer(qvec({1, 1}));
  EXPECT_FALSE(solve_symmetric(A, qvec({1, 0})).has_value());
}

namespace {

SymMatrix<double> float_with_spectrum(const std::vector<double>& d, std::uint64_t seed) {
  ProblemSpec spec;
  spec.kind = ProblemKind::RandomSpd;
  spec.n = d.size();
  spec.seed = seed;
  // Congruence with a random orthogonal matrix, built from a positive
  // spectrum and shifted afterwards.
  std::vector<double> shifted(d);
  const double shift = 1.0 - *std::min_element(d.begin(), d.end());
  for (auto& x : shifted) x += shift;
  for (const double x : shifted) spec.eigenvalues.push_back(Rational(x));
  SymMatrix<double> H = generate<double>(spec).hessian();
  return H - shift * SymMatrix<double>::identity(d.size());
}

}  // namespace

TEST(BunchKaufman, SolvesIndefiniteSystemsAndCountsInertia) {
  SeededRng rng(14);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + trial % 9;
    std::vector<double> d(n);
    std::size_t pos = 0;
    for (auto& x : d) {
      x = (rng.uniform01() < 0.5 ? -1.0 : 1.0) * (0.5 + 4.0 * rng.uniform01());
      pos += x > 0;
    }
    const auto A = float_with_spectrum(d, static_cast<std::uint64_t>(trial + 1));
    BunchKaufman f(A, Tolerance{1e-14, 0.0});
    ASSERT_FALSE(f.singular());
    const auto in = f.inertia();
    EXPECT_EQ(in[0], pos) << "trial " << trial;
    EXPECT_EQ(in[1], n - pos) << "trial " << trial;
    Vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = rng.normal();
    const auto x = f.solve(b);
    EXPECT_LE(norm2(matvec(A, x) - b), 1e-12 * (1.0 + norm2(b)) * 10.0);
  }
}

TEST(BunchKaufman, ZeroDiagonalNeedsTwoByTwoPivot) {
  const SymMatrix<double> A{{0.0, 1.0}, {1.0, 0.0}};
  BunchKaufman f(A, Tolerance{1e-14, 0.0});
  ASSERT_FALSE(f.singular());
  const auto x = f.solve(Vector<double>{2.0, 3.0});
  EXPECT_DOUBLE_EQ(x[0], 3.0);
  EXPECT_DOUBLE_EQ(x[1], 2.0);
  EXPECT_EQ(f.inertia()[0], 1u);
  EXPECT_EQ(f.inertia()[1], 1u);
}

TEST(BunchKaufman, DetectsSingularity) {
  const SymMatrix<double> A{{1.0, 2.0}, {2.0, 4.0}};
  EXPECT_TRUE(BunchKaufman(A, Tolerance{1e-14, 0.0}).singular());
  EXPECT_FALSE(solve_symmetric(A, Vector<double>{1.0, 0.0}, Tolerance{1e-14, 0.0}).has_value());
}

TEST(ConditionEstimate, DiagonalMatrix) {
  const auto A = SymMatrix<double>::diagonal(Vector<double>{1.0, 100.0, 10.0});
  EXPECT_NEAR(condition_estimate(A), 100.0, 1e-9);
}

TEST(Rank, KnownRanks) {
  SeededRng rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 3 + trial % 4;
    const std::size_t r = static_cast<std::size_t>(trial) % (n + 1);
    SymMatrix<Rational> A(n);
    for (std::size_t i = 0; i < r; ++i) A += SymMatrix<Rational>::outer(Vector<Rational>::unit(n, i), q(i + 1));
    // hide the structure with an exact congruence by a unit lower-triangular L
    Matrix<Rational> L(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      L(i, i) = 1;
      for (std::size_t j = 0; j < i; ++j) L(i, j) = rng.uniform_int(-2, 2);
    }
    const Matrix<Rational> LA = multiply(L, A.dense());
    Matrix<Rational> M(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) M(i, j) += LA(i, k) * L(j, k);
    EXPECT_EQ(rank(SymMatrix<Rational>(M)), r) << "trial " << trial;
    SymMatrix<double> Md = convert<Rational, double>(SymMatrix<Rational>(M));
    EXPECT_EQ(rank(Md, Tolerance{1e-10, 0.0}), r) << "trial " << trial;
  }
}

TEST(Span, MembershipExactAndFloat) {
  const std::vector<Vector<Rational>> basis{qvec({1, 0, 1}), qvec({0, 1, 1})};
  EXPECT_TRUE(in_span(qvec({2, -3, -1}), basis));
  EXPECT_FALSE(in_span(qvec({0, 0, 1}), basis));
  EXPECT_TRUE(in_span(Vector<Rational>(3), std::vector<Vector<Rational>>{}));
  const std::vector<Vector<double>> fb{Vector<double>{1.0, 0.0, 1.0}, Vector<double>{0.0, 1.0, 1.0}};
  EXPECT_TRUE(in_span(Vector<double>{2.0, -3.0, -1.0 + 1e-14}, fb, Tolerance{1e-10, 0.0}));
  EXPECT_FALSE(in_span(Vector<double>{0.0, 0.0, 1.0}, fb, Tolerance{1e-10, 0.0}));
  EXPECT_NEAR(projection_residual(Vector<double>{1.0, 1.0, -1.0}, std::span<const Vector<double>>(fb)),
              std::sqrt(3.0), 1e-12);
}

TEST(Angle, RobustNearZeroAndPi) {
  EXPECT_DOUBLE_EQ(angle_between(Vector<double>{1.0, 0.0}, Vector<double>{0.0, 2.0}), M_PI / 2);
  EXPECT_DOUBLE_EQ(angle_between(Vector<double>{1.0, 0.0}, Vector<double>{-3.0, 0.0}), M_PI);
  EXPECT_EQ(angle_between(Vector<double>{1.0, 2.0}, Vector<double>{2.0, 4.0}), 0.0);
  EXPECT_NEAR(angle_between(Vector<double>{1.0, 0.0}, Vector<double>{1.0, 1e-10}), 1e-10, 1e-20);
  EXPECT_TRUE(std::isnan(angle_between(Vector<double>{0.0, 0.0}, Vector<double>{1.0, 0.0})));
}
