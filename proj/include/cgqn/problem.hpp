#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "cgqn/linalg.hpp"

namespace cgqn {

class NotPositiveDefiniteError : public std::invalid_argument {
 public:
  explicit NotPositiveDefiniteError(std::size_t minor)
      : std::invalid_argument("Hessian is not positive definite: leading principal minor " +
                              std::to_string(minor) + " is not positive"),
        minor_index(minor) {}
  /// 1-based order of the first failing leading principal minor.
  std::size_t minor_index;
};

/// min q(x) = 1/2 x^T H x + c^T x with H symmetric positive definite, started
/// from x0.
template <Field T>
class QuadraticProblem {
 public:
  QuadraticProblem(SymMatrix<T> H, Vector<T> c, Vector<T> x0)
      : H_(std::move(H)), c_(std::move(c)), x0_(std::move(x0)) {
    const std::size_t n = H_.size();
    if (n == 0) throw DimensionError("problem dimension must be at least 1");
    if (c_.size() != n || x0_.size() != n) throw DimensionError("problem: c/x0 length differs from H");
    // Strict positivity: float problems are rejected only on a non-positive pivot.
    if (auto bad = first_nonpositive_minor(H_, Tolerance{0.0, 0.0})) throw NotPositiveDefiniteError(*bad);
  }

  [[nodiscard]] std::size_t dimension() const { return H_.size(); }
  const SymMatrix<T>& hessian() const { return H_; }
  const Vector<T>& linear() const { return c_; }
  const Vector<T>& start() const { return x0_; }

 private:
  SymMatrix<T> H_;
  Vector<T> c_;
  Vector<T> x0_;
};

/// g(x) = H x + c
template <Field T>
Vector<T> gradient(const QuadraticProblem<T>& prob, const Vector<T>& x) {
  if (x.size() != prob.dimension()) throw DimensionError("gradient: dimension mismatch");
  return matvec(prob.hessian(), x) + prob.linear();
}

/// q(x) = 1/2 x^T H x + c^T x
template <Field T>
T objective(const QuadraticProblem<T>& prob, const Vector<T>& x) {
  if (x.size() != prob.dimension()) throw DimensionError("objective: dimension mismatch");
  const T half = T(1) / T(2);
  return half * quad_form(prob.hessian(), x, x) + inner(prob.linear(), x);
}

/// x* solving H x = -c.
template <Field T>
Vector<T> minimizer(const QuadraticProblem<T>& prob) {
  auto x = solve_symmetric(prob.hessian(), -prob.linear(), Tolerance{0.0, 0.0});
  if (!x) throw std::runtime_error("minimizer: Hessian numerically singular");
  return *x;
}

template <Field U, Field T>
QuadraticProblem<U> convert_problem(const QuadraticProblem<T>& p) {
  return QuadraticProblem<U>(convert<T, U>(p.hessian()), convert<T, U>(p.linear()), convert<T, U>(p.start()));
}

}  // namespace cgqn
