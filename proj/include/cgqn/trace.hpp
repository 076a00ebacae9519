#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cgqn/broyden.hpp"
#include "cgqn/problem.hpp"

namespace cgqn {

/// One iteration: at x_k with gradient g_k, step alpha_k along p_k.
template <Field T>
struct IterationRecord {
  std::size_t k = 0;
  Vector<T> x, g, p;
  T alpha{};

  // conjugate gradients: beta_{k-1} by the gradient ratio and by the Hessian form
  std::optional<T> beta_prev;
  std::optional<T> beta_prev_hessian;

  // quasi-Newton: B_k, and for k >= 1 the update U_k = B_k - B_{k-1} with phi_k
  std::optional<SymMatrix<T>> B;
  std::optional<BroydenUpdate<T>> update;
};

enum class Termination { Converged, IterationLimit, Breakdown };

inline const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::IterationLimit: return "iteration-limit";
    case Termination::Breakdown: return "breakdown";
  }
  return "?";
}

template <Field T>
struct Trace {
  std::string method;
  std::vector<IterationRecord<T>> iterations;
  Vector<T> x_final, g_final;
  Termination termination = Termination::Converged;

  [[nodiscard]] std::size_t iteration_count() const { return iterations.size(); }

  /// x_{k} for k = 0..iteration_count(), the last one being x_final.
  const Vector<T>& iterate(std::size_t k) const { return k < iterations.size() ? iterations[k].x : x_final; }
  const Vector<T>& gradient_at(std::size_t k) const { return k < iterations.size() ? iterations[k].g : g_final; }
};

/// Exact mode stops at g = 0; float mode at ||g|| <= rel_tol ||g_0||.
/// The iteration cap defaults to n.
struct StopPolicy {
  double rel_tol = 1e-12;
  std::optional<std::size_t> max_iterations;
};

template <Field T>
bool gradient_converged(const Vector<T>& g, double g0_norm, const StopPolicy& stop) {
  if (g.is_zero()) return true;
  if constexpr (is_exact_v<T>) {
    return false;
  } else {
    return norm2(g) <= stop.rel_tol * g0_norm;
  }
}

class AlreadyConvergedError : public std::logic_error {
 public:
  AlreadyConvergedError() : std::logic_error("step requested at a stationary point (g_k = 0)") {}
};

class ZeroDirectionError : public std::invalid_argument {
 public:
  ZeroDirectionError() : std::invalid_argument("steplength: p^T H p is zero") {}
};

/// Exact linesearch on a quadratic: alpha = -p^T g / p^T H p.
template <Field T>
T steplength(const Vector<T>& p, const Vector<T>& g, const SymMatrix<T>& H) {
  const T pHp = quad_form(H, p, p);
  if (pHp == 0) throw ZeroDirectionError();
  return -inner(p, g) / pHp;
}

}  // namespace cgqn
