#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgqn/cg.hpp"
#include "cgqn/qn.hpp"

namespace cgqn {

/// Outcome of one checkable condition. A failed check always names where it
/// failed in `witness` and how badly in `residual`.
struct Check {
  bool ok = true;
  std::string witness;
  double residual = 0.0;

  static Check pass() { return {}; }
  static Check fail(std::string witness, double residual = 0.0) { return {false, std::move(witness), residual}; }
  /// Keeps the first failure.
  void merge(const Check& other) {
    if (ok && !other.ok) *this = other;
  }
};

class LinearDependenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <Field T>
T absval(const T& x) {
  if constexpr (is_exact_v<T>) {
    return T(abs(x));
  } else {
    return std::fabs(x);
  }
}

template <Field T>
bool scalar_close(const T& a, const T& b, const Tolerance& tol) {
  if constexpr (is_exact_v<T>) {
    return a == b;
  } else {
    return std::fabs(a - b) <= tol.threshold(std::max(std::fabs(a), std::fabs(b)));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parallelism
// ---------------------------------------------------------------------------

template <Field T>
struct ParallelResult {
  bool ok = false;
  std::optional<T> delta;
  /// max_i |p_i - delta p_cg,i| (exact) or 1 - |cos theta| (float).
  double residual = 0.0;
  double angle = 0.0;
};

/// Is p = delta p_cg for some nonzero delta? Exact mode compares every
/// component against the ratio at the first nonzero entry of p_cg. Float mode
/// accepts 1 - |cos theta| <= tol.rel and fits delta by least squares.
template <Field T>
ParallelResult<T> check_parallel(const Vector<T>& p, const Vector<T>& p_cg, const Tolerance& tol = {}) {
  if (p.size() != p_cg.size()) throw DimensionError("check_parallel: length mismatch");
  if (p_cg.is_zero()) throw std::invalid_argument("check_parallel: reference direction is zero");
  ParallelResult<T> r;
  if constexpr (is_exact_v<T>) {
    std::size_t j = 0;
    while (p_cg[j] == 0) ++j;
    const T delta = p[j] / p_cg[j];
    const Vector<T> diff = p - delta * p_cg;
    r.residual = max_abs(diff);
    r.delta = delta;
    r.ok = diff.is_zero() && delta != 0;
    r.angle = r.ok ? 0.0 : angle_between(p, p_cg);
  } else {
    const double theta = angle_between(p, p_cg);
    const double folded = std::min(theta, M_PI - theta);
    const double s = std::sin(folded / 2.0);
    r.angle = folded;
    r.residual = 2.0 * s * s;
    r.delta = inner(p, p_cg) / inner(p_cg, p_cg);
    r.ok = std::isfinite(theta) && r.residual <= tol.rel && *r.delta != 0.0;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Update-matrix conditions
// ---------------------------------------------------------------------------

struct ConditionTriple {
  Check range;
  Check nullspace;
  Check quasi_newton;
  [[nodiscard]] bool all() const { return range.ok && nullspace.ok && quasi_newton.ok; }
};

/// The three conditions on U_k:
///   range         every column of U_k lies in span{g_{k-1}, g_k};
///   null-space    U_k p_i = 0 for i <= k-2;
///   quasi-Newton  U_k p_{k-1} = (H - B_{k-1}) p_{k-1}.
/// `directions` holds p_0 .. p_{k-1}.
template <Field T>
ConditionTriple check_update_conditions(const SymMatrix<T>& U, const Vector<T>& g_prev, const Vector<T>& g_cur,
                                        std::span<const Vector<T>> directions, const SymMatrix<T>& B_prev,
                                        const SymMatrix<T>& H, const Tolerance& tol = {}) {
  if (directions.empty()) throw std::invalid_argument("check_update_conditions: needs p_{k-1}");
  const std::size_t n = U.size();
  ConditionTriple out;
  const std::vector<Vector<T>> frame{g_prev, g_cur};
  for (std::size_t j = 0; j < n; ++j) {
    const Vector<T> col = U.dense().column(j);
    if (!in_span(col, frame, tol)) {
      out.range = Check::fail("U e_" + std::to_string(j) + " is outside span{g_{k-1}, g_k}",
                              projection_residual(col, std::span(frame), tol));
      break;
    }
  }
  const double u_scale = U.max_abs() * std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i + 1 < directions.size(); ++i) {
    const Vector<T> Upi = matvec(U, directions[i]);
    if (!nearly_zero(Upi, u_scale * norm2(directions[i]), tol)) {
      out.nullspace = Check::fail("U p_" + std::to_string(i) + " != 0", norm2(Upi));
      break;
    }
  }
  const Vector<T>& p = directions.back();
  const Vector<T> Up = matvec(U, p);
  const Vector<T> target = matvec(H, p) - matvec(B_prev, p);
  if (!nearly_equal(Up, target, tol))
    out.quasi_newton = Check::fail("U p_{k-1} != (H - B_{k-1}) p_{k-1}", norm2(Up - target));
  return out;
}

template <Field T>
ConditionTriple check_update_conditions(const SymMatrix<T>& U, const Vector<T>& g_prev, const Vector<T>& g_cur,
                                        const std::vector<Vector<T>>& directions, const SymMatrix<T>& B_prev,
                                        const SymMatrix<T>& H, const Tolerance& tol = {}) {
  return check_update_conditions(U, g_prev, g_cur, std::span<const Vector<T>>(directions), B_prev, H, tol);
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

/// Conjugate Gram-Schmidt: p_0 = a_0, p_k = a_k + sum_j beta_kj p_j with
/// beta_kj = -p_j^T H a_k / p_j^T H p_j. Throws LinearDependenceError when a
/// p_k has zero H-norm.
template <Field T>
std::vector<Vector<T>> gram_schmidt_conjugate(std::span<const Vector<T>> a, const SymMatrix<T>& H,
                                              const Tolerance& tol = {}) {
  std::vector<Vector<T>> p;
  std::vector<Vector<T>> Hp;
  std::vector<T> pHp;
  for (std::size_t k = 0; k < a.size(); ++k) {
    Vector<T> pk = a[k];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T beta = -inner(Hp[j], a[k]) / pHp[j];
      pk += beta * p[j];
    }
    Vector<T> Hpk = matvec(H, pk);
    const T norm = inner(pk, Hpk);
    if (negligible(norm, norm2(a[k]) * norm2(a[k]) * H.max_abs(), tol))
      throw LinearDependenceError("gram_schmidt_conjugate: a_" + std::to_string(k) + " depends on earlier vectors");
    p.push_back(std::move(pk));
    Hp.push_back(std::move(Hpk));
    pHp.push_back(norm);
  }
  return p;
}

template <Field T>
std::vector<Vector<T>> gram_schmidt_conjugate(const std::vector<Vector<T>>& a, const SymMatrix<T>& H,
                                              const Tolerance& tol = {}) {
  return gram_schmidt_conjugate(std::span<const Vector<T>>(a), H, tol);
}

/// {b, A b, ..., A^{m-1} b}
template <Field T>
std::vector<Vector<T>> krylov_basis(const Vector<T>& b, const SymMatrix<T>& A, std::size_t m) {
  std::vector<Vector<T>> out;
  if (m == 0) return out;
  out.push_back(b);
  for (std::size_t i = 1; i < m; ++i) out.push_back(matvec(A, out.back()));
  return out;
}

class ReducedSystemSingular : public std::invalid_argument {
 public:
  ReducedSystemSingular() : std::invalid_argument("reduced system Z^T H Z is singular (basis is dependent)") {}
};

/// Minimizer of q over x_0 + span(basis): x_0 + Z y with (Z^T H Z) y = -Z^T g_0.
template <Field T>
Vector<T> subspace_minimizer(const QuadraticProblem<T>& prob, std::span<const Vector<T>> basis,
                             const Tolerance& tol = {}) {
  const std::size_t n = prob.dimension();
  const Matrix<T> Z = Matrix<T>::from_columns(basis, n);
  const Matrix<T> HZ = multiply(prob.hessian().dense(), Z);
  const SymMatrix<T> reduced(transpose_times(Z, HZ));
  const Vector<T> g0 = gradient(prob, prob.start());
  Vector<T> rhs(basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) rhs[j] = -inner(basis[j], g0);
  auto y = solve_symmetric(reduced, rhs, Tolerance{tol.rel * 1e-4, 0.0});
  if (!y) throw ReducedSystemSingular();
  return prob.start() + matvec(Z, *y);
}

template <Field T>
Check check_subspace_minimizer(const Vector<T>& x_next, const QuadraticProblem<T>& prob,
                               std::span<const Vector<T>> basis, const Tolerance& tol = {}) {
  const Vector<T> xs = subspace_minimizer(prob, basis, tol);
  if (nearly_equal(x_next, xs, tol)) return Check::pass();
  return Check::fail("iterate differs from the reduced-system minimizer", norm2(x_next - xs));
}

template <Field T>
Check check_subspace_minimizer(const Vector<T>& x_next, const QuadraticProblem<T>& prob,
                               const std::vector<Vector<T>>& basis, const Tolerance& tol = {}) {
  return check_subspace_minimizer(x_next, prob, std::span<const Vector<T>>(basis), tol);
}

// ---------------------------------------------------------------------------
// Side-by-side verification
// ---------------------------------------------------------------------------

template <Field T>
struct IterationReport {
  std::size_t k = 0;
  std::optional<T> phi;
  std::optional<T> delta_measured;
  std::optional<T> delta_predicted;
  std::optional<T> delta_deviation;
  double angle = 0.0;

  Check iterate_match;
  Check parallel;
  Check delta_law;
  Check conjugacy;
  Check krylov_membership;
  Check range_condition;
  Check nullspace_condition;
  Check qn_condition;
  Check rank_at_most_two;
  Check frame_identity;
  Check phi_round_trip;
  Check hereditary;
  Check pbp_nonzero;
  Check subspace_min;
  Check pd_expected;
  bool positive_definite = false;
  /// 1-based order of the first non-positive leading minor of B_k.
  std::optional<std::size_t> first_nonpositive_minor;

  template <typename F>
  void for_each_check(F&& f) const {
    f("iterate_match", iterate_match);
    f("parallel", parallel);
    f("delta_law", delta_law);
    f("conjugacy", conjugacy);
    f("krylov_membership", krylov_membership);
    f("range_condition", range_condition);
    f("nullspace_condition", nullspace_condition);
    f("qn_condition", qn_condition);
    f("rank_at_most_two", rank_at_most_two);
    f("frame_identity", frame_identity);
    f("phi_round_trip", phi_round_trip);
    f("hereditary", hereditary);
    f("pbp_nonzero", pbp_nonzero);
    f("subspace_min", subspace_min);
    f("pd_expected", pd_expected);
  }
  [[nodiscard]] bool all_ok() const {
    bool ok = true;
    for_each_check([&](const char*, const Check& c) { ok = ok && c.ok; });
    return ok;
  }
};

template <Field T>
struct BreakdownEvent {
  BreakdownKind kind;
  std::size_t k = 0;
  /// Matches a case the theory predicts (SR1 after a unit step, or the
  /// degenerate phi with a singular B_k).
  bool predicted = false;
  std::string detail;
  std::optional<T> phi;
  std::optional<T> degenerate_phi;
  std::optional<T> previous_step;
  std::optional<T> determinant;
  std::optional<double> condition_estimate;
};

template <Field T>
struct VerificationReport {
  std::string schedule;
  std::size_t n = 0;
  std::size_t cg_iterations = 0;
  std::size_t qn_iterations = 0;
  Termination cg_termination = Termination::Converged;
  Termination qn_termination = Termination::Converged;
  std::vector<IterationReport<T>> iterations;

  // properties of the conjugate gradient trace alone
  Check cg_gradient_orthogonality;
  Check cg_conjugacy;
  Check cg_gradient_direction_products;
  Check cg_beta_formulas;
  Check cg_krylov_spans;
  Check cg_subspace_min;
  Check gram_schmidt_oracle;
  Check termination;

  std::optional<BreakdownEvent<T>> breakdown;
  double max_angle = 0.0;
  std::optional<T> max_delta_deviation;
  bool verdict = false;

  template <typename F>
  void for_each_global_check(F&& f) const {
    f("cg_gradient_orthogonality", cg_gradient_orthogonality);
    f("cg_conjugacy", cg_conjugacy);
    f("cg_gradient_direction_products", cg_gradient_direction_products);
    f("cg_beta_formulas", cg_beta_formulas);
    f("cg_krylov_spans", cg_krylov_spans);
    f("cg_subspace_min", cg_subspace_min);
    f("gram_schmidt_oracle", gram_schmidt_oracle);
    f("termination", termination);
  }
};

struct VerifyOptions {
  /// Zero tests inside the checks; only consulted in float mode.
  Tolerance tol{1e-8, 0.0};
  QnOptions qn{};
  /// Recurrence of the conjugate gradient reference run.
  CgVariant cg_variant = CgVariant::ThreeTerm;
};

namespace detail {

template <Field T>
std::vector<Vector<T>> directions_of(const Trace<T>& t, std::size_t count) {
  std::vector<Vector<T>> out;
  for (std::size_t i = 0; i < count && i < t.iterations.size(); ++i) out.push_back(t.iterations[i].p);
  return out;
}

template <Field T>
std::vector<Vector<T>> gradients_of(const Trace<T>& t, std::size_t count) {
  std::vector<Vector<T>> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(t.gradient_at(i));
  return out;
}

// Basis of K_{k+1}(p_0, H): the power basis in exact mode, the (orthogonal)
// CG gradients in float mode where the power basis is numerically dependent.
template <Field T>
std::vector<Vector<T>> krylov_space(const Trace<T>& cg, const SymMatrix<T>& H, std::size_t dim) {
  if constexpr (is_exact_v<T>) {
    return krylov_basis(cg.iterations.front().p, H, dim);
  } else {
    return gradients_of(cg, std::min(dim, cg.iterations.size() + 1));
  }
}

template <Field T>
void check_cg_trace(const Trace<T>& cg, const QuadraticProblem<T>& prob, const Tolerance& tol,
                    VerificationReport<T>& rep) {
  const SymMatrix<T>& H = prob.hessian();
  const std::size_t K = cg.iteration_count();
  const auto g = gradients_of(cg, K + 1);
  const auto p = directions_of(cg, K);
  std::vector<Vector<T>> Hp;
  for (const auto& v : p) Hp.push_back(matvec(H, v));

  // a float gradient already below tol * |g_0| is roundoff; its direction means nothing
  auto is_noise = [&](const Vector<T>& v) {
    if constexpr (is_exact_v<T>) return false;
    else return norm2(v) <= tol.threshold(norm2(g[0]));
  };
  for (std::size_t k = 0; k <= K; ++k)
    for (std::size_t j = 0; j < k; ++j) {
      if (is_noise(g[k])) continue;
      const T gg = inner(g[k], g[j]);
      if (!negligible(gg, norm2(g[k]) * norm2(g[j]), tol))
        rep.cg_gradient_orthogonality.merge(
            Check::fail("g_" + std::to_string(k) + "^T g_" + std::to_string(j) + " != 0", magnitude(gg)));
      if (j < K) {
        const T gp = inner(g[k], p[j]);
        if (!negligible(gp, norm2(g[k]) * norm2(p[j]), tol))
          rep.cg_gradient_orthogonality.merge(
              Check::fail("g_" + std::to_string(k) + "^T p_" + std::to_string(j) + " != 0", magnitude(gp)));
      }
    }
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const T c = inner(p[i], Hp[j]);
      if (!negligible(c, norm2(p[i]) * norm2(Hp[j]), tol))
        rep.cg_conjugacy.merge(
            Check::fail("p_" + std::to_string(i) + "^T H p_" + std::to_string(j) + " != 0", magnitude(c)));
    }
  // g_i^T p_k = -g_k^T g_k for all i <= k
  for (std::size_t k = 0; k < K; ++k) {
    const T target = -inner(g[k], g[k]);
    for (std::size_t i = 0; i <= k; ++i)
      if (!scalar_close(inner(g[i], p[k]), target, tol))
        rep.cg_gradient_direction_products.merge(Check::fail(
            "g_" + std::to_string(i) + "^T p_" + std::to_string(k) + " != -g_k^T g_k",
            magnitude(T(inner(g[i], p[k]) - target))));
  }
  for (std::size_t k = 1; k < K; ++k) {
    const auto& r = cg.iterations[k];
    if (!r.beta_prev || !r.beta_prev_hessian || !scalar_close(*r.beta_prev, *r.beta_prev_hessian, tol))
      rep.cg_beta_formulas.merge(Check::fail("beta_" + std::to_string(k - 1) + ": gradient ratio != Hessian form",
                                             r.beta_prev && r.beta_prev_hessian
                                                 ? magnitude(T(*r.beta_prev - *r.beta_prev_hessian))
                                                 : 0.0));
  }
  // span{p_0..p_k} = span{g_0..g_k} (= K_{k+1}(p_0, H) in exact mode)
  for (std::size_t k = 0; k < K; ++k) {
    const std::span<const Vector<T>> ps(p.data(), k + 1), gs(g.data(), k + 1);
    std::vector<std::span<const Vector<T>>> spaces{ps, gs};
    std::vector<Vector<T>> kry;
    if constexpr (is_exact_v<T>) {
      kry = krylov_basis(p[0], H, k + 1);
      spaces.emplace_back(kry);
    }
    for (std::size_t a = 0; a < spaces.size(); ++a)
      for (std::size_t b = 0; b < spaces.size(); ++b) {
        if (a == b) continue;
        for (const auto& v : spaces[a])
          if (!in_span(v, spaces[b], tol)) {
            static const char* names[] = {"directions", "gradients", "Krylov vectors"};
            rep.cg_krylov_spans.merge(Check::fail(std::string("k=") + std::to_string(k) + ": " + names[a] +
                                                  " not in span of " + names[b]));
          }
      }
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto basis = krylov_space(cg, H, k + 1);
    try {
      Check c = check_subspace_minimizer(cg.iterate(k + 1), prob, basis, tol);
      if (!c.ok) c.witness = "x_" + std::to_string(k + 1) + ": " + c.witness;
      rep.cg_subspace_min.merge(c);
    } catch (const ReducedSystemSingular& e) {
      rep.cg_subspace_min.merge(Check::fail("x_" + std::to_string(k + 1) + ": " + e.what()));
    }
  }
  if (K > 0) {
    std::vector<Vector<T>> a;
    for (std::size_t i = 0; i < K; ++i) a.push_back(-g[i]);
    try {
      const auto gs = gram_schmidt_conjugate(a, H, tol);
      for (std::size_t i = 0; i < K; ++i) {
        const auto par = check_parallel(gs[i], p[i], tol);
        if (!par.ok)
          rep.gram_schmidt_oracle.merge(
              Check::fail("Gram-Schmidt direction " + std::to_string(i) + " not parallel to p_" + std::to_string(i),
                          par.residual));
      }
    } catch (const LinearDependenceError& e) {
      rep.gram_schmidt_oracle.merge(Check::fail(e.what()));
    }
  }
}

}  // namespace detail

/// Runs conjugate gradients and the quasi-Newton method with `sched` on the
/// same problem and checks, iteration by iteration, parallel directions, the
/// delta(phi) law, the update-matrix conditions and the oracles.
template <Field T>
VerificationReport<T> verify_equivalence(const QuadraticProblem<T>& prob, const PhiSchedule<T>& sched,
                                         const VerifyOptions& opts = {}) {
  const Tolerance& tol = opts.tol;
  const SymMatrix<T>& H = prob.hessian();
  const std::size_t n = prob.dimension();

  const Trace<T> cg = cg_run(prob, opts.qn.stop, opts.cg_variant);
  const QnRun<T> qn = qn_run(prob, sched, opts.qn);
  const Trace<T>& qt = qn.trace;

  VerificationReport<T> rep;
  rep.schedule = sched.describe();
  rep.n = n;
  rep.cg_iterations = cg.iteration_count();
  rep.qn_iterations = qt.iteration_count();
  rep.cg_termination = cg.termination;
  rep.qn_termination = qt.termination;

  detail::check_cg_trace(cg, prob, tol, rep);

  if (cg.termination != Termination::Converged || cg.iteration_count() > n)
    rep.termination = Check::fail("conjugate gradients did not reach g = 0 within n iterations");
  if (qn.breakdown) {
    const auto& b = *qn.breakdown;
    BreakdownEvent<T> ev{b.kind, b.k, false, b.detail, b.phi, b.degenerate_phi, b.previous_step, b.determinant,
                         b.condition_estimate};
    if (b.kind == BreakdownKind::Sr1Undefined) {
      ev.predicted = b.previous_step && detail::scalar_close(*b.previous_step, T(1), opts.qn.tol);
    } else if (b.kind == BreakdownKind::DegeneratePhi) {
      ev.predicted = b.phi && b.degenerate_phi && detail::scalar_close(*b.phi, *b.degenerate_phi, opts.qn.tol);
      if constexpr (is_exact_v<T>) ev.predicted = ev.predicted && b.determinant && *b.determinant == 0;
    }
    rep.breakdown = ev;
  } else if (qt.termination != Termination::Converged || qt.iteration_count() != cg.iteration_count()) {
    rep.termination.merge(Check::fail("quasi-Newton took " + std::to_string(qt.iteration_count()) +
                                      " iterations, conjugate gradients " + std::to_string(cg.iteration_count())));
  }

  bool all_phi_nonnegative = true;
  std::vector<Vector<T>> qn_dirs;
  for (std::size_t k = 0; k < qt.iteration_count(); ++k) {
    const IterationRecord<T>& q = qt.iterations[k];
    IterationReport<T> ir;
    ir.k = k;
    const bool have_cg = k < cg.iteration_count();

    if (have_cg) {
      const IterationRecord<T>& c = cg.iterations[k];
      if (!nearly_equal(q.x, c.x, tol) || !nearly_equal(q.g, c.g, tol))
        ir.iterate_match = Check::fail("x_k or g_k differs from conjugate gradients", norm2(q.x - c.x));
      const auto par = check_parallel(q.p, c.p, tol);
      ir.angle = par.angle;
      ir.delta_measured = par.delta;
      if (!par.ok) ir.parallel = Check::fail("p_k is not parallel to p_k^CG", par.residual);
    } else {
      ir.iterate_match = Check::fail("conjugate gradients stopped before iteration " + std::to_string(k));
      ir.parallel = ir.iterate_match;
    }
    rep.max_angle = std::max(rep.max_angle, std::isfinite(ir.angle) ? ir.angle : M_PI);

    // predicted delta_k
    if (k == 0) {
      ir.delta_predicted = T(1);
    } else if (q.update) {
      ir.phi = q.update->phi;
      all_phi_nonnegative = all_phi_nonnegative && sign(q.update->phi) >= 0;
      ir.delta_predicted = delta_of_phi(q.update->phi, q.update->pBp, inner(q.g, q.g), opts.qn.tol);
    }
    if (ir.delta_measured && ir.delta_predicted) {
      ir.delta_deviation = detail::absval(T(*ir.delta_measured - *ir.delta_predicted));
      if (!rep.max_delta_deviation || *ir.delta_deviation > *rep.max_delta_deviation)
        rep.max_delta_deviation = ir.delta_deviation;
      if (!detail::scalar_close(*ir.delta_measured, *ir.delta_predicted, tol))
        ir.delta_law = Check::fail("measured delta_k differs from delta(phi_k)", magnitude(*ir.delta_deviation));
    } else {
      ir.delta_law = Check::fail("delta_k not available");
    }

    const Vector<T> Hpk = matvec(H, q.p);
    for (std::size_t i = 0; i < k; ++i) {
      const T c = inner(Hpk, qn_dirs[i]);
      if (!negligible(c, norm2(Hpk) * norm2(qn_dirs[i]), tol)) {
        ir.conjugacy = Check::fail("p_k^T H p_" + std::to_string(i) + " != 0", magnitude(c));
        break;
      }
    }
    if (!in_span(q.p, detail::krylov_space(cg, H, k + 1), tol))
      ir.krylov_membership = Check::fail("p_k is outside K_{k+1}(p_0, H)");

    const SymMatrix<T>& Bk = *q.B;
    if (k >= 1) {
      if (!q.update) {
        ir.range_condition = Check::fail("no update recorded");
      } else {
        const BroydenUpdate<T>& u = *q.update;
        const IterationRecord<T>& prev = qt.iterations[k - 1];
        const auto cond = check_update_conditions(u.U, prev.g, q.g, qn_dirs, *prev.B, H, tol);
        ir.range_condition = cond.range;
        ir.nullspace_condition = cond.nullspace;
        ir.qn_condition = cond.quasi_newton;
        const std::size_t r = rank(u.U, tol);
        if (r > 2) ir.rank_at_most_two = Check::fail("rank(U_k) = " + std::to_string(r), static_cast<double>(r));
        const SymMatrix<T> via_hb = expand_frame(u.h, u.b, u.frame_hb);
        const SymMatrix<T> via_gg = expand_frame(prev.g, q.g, u.frame_gg);
        if (!nearly_equal(u.U, via_hb, tol))
          ir.frame_identity = Check::fail("{Hp, Bp}-frame expansion differs from U_k", (u.U - via_hb).max_abs());
        else if (!nearly_equal(u.U, via_gg, tol))
          ir.frame_identity = Check::fail("{g_{k-1}, g_k}-frame expansion differs from U_k", (u.U - via_gg).max_abs());
        else if (!nearly_equal(u.g_prev, prev.g, tol) || !nearly_equal(u.g_cur, q.g, tol))
          ir.frame_identity = Check::fail("frame gradients differ from the trajectory gradients");
        try {
          const std::span<const Vector<T>> earlier(qn_dirs.data(), k - 1);
          const auto ex = extract_phi(u.U, *prev.B, prev.p, H, earlier, tol);
          if (!ex.ok())
            ir.phi_round_trip = Check::fail(std::string("extract_phi rejected U_k: ") + witness_name(ex.witness->kind),
                                            ex.witness->residual);
          else if (!negligible(T(*ex.phi - u.phi), 1.0 + magnitude(u.phi), tol))
            ir.phi_round_trip = Check::fail("extract_phi returned a different phi", magnitude(T(*ex.phi - u.phi)));
        } catch (const FrameDegenerateError& e) {
          ir.phi_round_trip = Check::fail(e.what());
        }
      }
    }

    for (std::size_t i = 0; i < k; ++i) {
      const Vector<T> lhs = matvec(Bk, qn_dirs[i]);
      const Vector<T> rhs = matvec(H, qn_dirs[i]);
      if (!nearly_equal(lhs, rhs, tol)) {
        ir.hereditary = Check::fail("B_k p_" + std::to_string(i) + " != H p_" + std::to_string(i), norm2(lhs - rhs));
        break;
      }
    }

    const T pBp = quad_form(Bk, q.p, q.p);
    const T minus_pg = -inner(q.p, q.g);
    if (!detail::scalar_close(pBp, minus_pg, tol) || negligible(pBp, norm2(q.p) * norm2(q.g), tol))
      ir.pbp_nonzero = Check::fail("p_k^T B_k p_k is zero or differs from -p_k^T g_k", magnitude(pBp));

    qn_dirs.push_back(q.p);
    try {
      std::vector<Vector<T>> basis;
      if constexpr (is_exact_v<T>) {
        basis = krylov_basis(qt.iterations.front().p, H, k + 1);
      } else {
        basis = qn_dirs;
      }
      Check c = check_subspace_minimizer(qt.iterate(k + 1), prob, basis, tol);
      ir.subspace_min = c;
    } catch (const ReducedSystemSingular& e) {
      ir.subspace_min = Check::fail(e.what());
    }

    ir.first_nonpositive_minor = first_nonpositive_minor(Bk, Tolerance{0.0, 0.0});
    if constexpr (is_exact_v<T>) {
      // Independent evaluation of every leading minor.
      const auto minors = leading_principal_minors(Bk);
      const auto it = std::find_if(minors.begin(), minors.end(), [](const T& m) { return sgn(m) <= 0; });
      const std::optional<std::size_t> direct =
          it == minors.end() ? std::nullopt : std::optional<std::size_t>(static_cast<std::size_t>(it - minors.begin()) + 1);
      if (direct != ir.first_nonpositive_minor) ir.first_nonpositive_minor = direct;
    }
    ir.positive_definite = !ir.first_nonpositive_minor.has_value();
    if (all_phi_nonnegative && !ir.positive_definite)
      ir.pd_expected = Check::fail("B_k is not positive definite although every phi_i >= 0",
                                   static_cast<double>(*ir.first_nonpositive_minor));

    rep.iterations.push_back(std::move(ir));
  }

  bool ok = true;
  rep.for_each_global_check([&](const char*, const Check& c) { ok = ok && c.ok; });
  for (const auto& ir : rep.iterations) ok = ok && ir.all_ok();
  if (rep.breakdown) ok = ok && rep.breakdown->predicted;
  rep.verdict = ok;
  return rep;
}

}  // namespace cgqn
