#pragma once

#include <optional>
#include <vector>

#include "cgqn/trace.hpp"

namespace cgqn {

/// Snapshot of the conjugate gradient iteration before step k.
template <Field T>
struct CgState {
  std::size_t k = 0;
  Vector<T> x, g, p;
  std::optional<T> beta_prev;
  std::optional<T> beta_prev_hessian;
  double g0_norm = 0.0;
  std::vector<IterationRecord<T>> history;
  // H p_j for every direction so far (used by the reconjugated variant)
  std::vector<Vector<T>> Hp_history;
};

/// ThreeTerm: p_{k+1} = -g_{k+1} + beta_k p_k.
/// Reconjugated: -g_{k+1} made H-conjugate to every earlier p_j by modified
/// conjugate Gram-Schmidt. Same directions in exact arithmetic; in floating
/// point it keeps the conjugacy that the three-term recurrence loses.
enum class CgVariant { ThreeTerm, Reconjugated };

inline const char* cg_variant_name(CgVariant v) { return v == CgVariant::ThreeTerm ? "three-term" : "reconjugated"; }

/// p_0 = -g_0.
template <Field T>
CgState<T> cg_init(const QuadraticProblem<T>& prob) {
  CgState<T> s;
  s.x = prob.start();
  s.g = gradient(prob, s.x);
  s.p = -s.g;
  s.g0_norm = norm2(s.g);
  return s;
}

/// One step x_{k+1} = x_k + alpha_k p_k followed by
/// p_{k+1} = -g_{k+1} + beta_k p_k, beta_k = g_{k+1}^T g_{k+1} / g_k^T g_k.
/// The Hessian form beta_k = p_k^T H g_{k+1} / p_k^T H p_k is kept alongside.
template <Field T>
CgState<T> cg_step(const CgState<T>& state, const QuadraticProblem<T>& prob,
                   CgVariant variant = CgVariant::ThreeTerm) {
  if (state.g.is_zero()) throw AlreadyConvergedError();
  const SymMatrix<T>& H = prob.hessian();
  const Vector<T> Hp = matvec(H, state.p);
  const T pHp = inner(state.p, Hp);
  if (pHp == 0) throw ZeroDirectionError();
  const T alpha = -inner(state.p, state.g) / pHp;

  CgState<T> next;
  next.k = state.k + 1;
  next.g0_norm = state.g0_norm;
  next.history = state.history;
  next.Hp_history = state.Hp_history;
  next.Hp_history.push_back(Hp);
  next.history.push_back(IterationRecord<T>{
      .k = state.k,
      .x = state.x,
      .g = state.g,
      .p = state.p,
      .alpha = alpha,
      .beta_prev = state.beta_prev,
      .beta_prev_hessian = state.beta_prev_hessian,
      .B = std::nullopt,
      .update = std::nullopt,
  });

  next.x = state.x + alpha * state.p;
  next.g = state.g + alpha * Hp;
  const T beta = inner(next.g, next.g) / inner(state.g, state.g);
  next.beta_prev = beta;
  next.beta_prev_hessian = inner(Hp, next.g) / pHp;
  if (variant == CgVariant::ThreeTerm || next.g.is_zero()) {
    next.p = beta * state.p - next.g;
    return next;
  }
  Vector<T> p = -next.g;
  for (std::size_t j = next.history.size(); j-- > 0;) {
    const Vector<T>& Hpj = next.Hp_history[j];
    const T c = inner(Hpj, p) / inner(Hpj, next.history[j].p);
    p -= c * next.history[j].p;
  }
  next.p = std::move(p);
  return next;
}

template <Field T>
Trace<T> cg_run(const QuadraticProblem<T>& prob, const StopPolicy& stop = {},
                CgVariant variant = CgVariant::ThreeTerm) {
  const std::size_t cap = stop.max_iterations.value_or(prob.dimension());
  CgState<T> s = cg_init(prob);
  Trace<T> trace;
  trace.method = "cg";
  trace.termination = Termination::IterationLimit;
  while (true) {
    if (gradient_converged(s.g, s.g0_norm, stop)) {
      trace.termination = Termination::Converged;
      break;
    }
    if (s.k >= cap) break;
    s = cg_step(s, prob, variant);
  }
  trace.iterations = std::move(s.history);
  trace.x_final = std::move(s.x);
  trace.g_final = std::move(s.g);
  return trace;
}

}  // namespace cgqn
