#pragma once

#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cgqn/trace.hpp"

namespace cgqn {

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Quantities available when choosing phi_k, all from iteration k-1 except
/// the new gradient g_k.
template <Field T>
struct PhiContext {
  std::size_t k;
  const SymMatrix<T>& B_prev;
  const Vector<T>& p_prev;
  const SymMatrix<T>& H;
  const Vector<T>& g;
  T pBp;
  T pHp;
  T gTg;

  [[nodiscard]] T degenerate_value() const { return -pBp / gTg; }
};

enum class PhiRule { Bfgs, Sr1, Constant, Sequence, DegenerateProbe, Custom };

/// Rule for the Broyden parameter phi_k, k >= 1.
template <Field T>
class PhiSchedule {
 public:
  using CustomFn = std::function<T(const PhiContext<T>&)>;

  static PhiSchedule bfgs() { return PhiSchedule(PhiRule::Bfgs); }
  static PhiSchedule sr1() { return PhiSchedule(PhiRule::Sr1); }
  static PhiSchedule constant(T phi) {
    PhiSchedule s(PhiRule::Constant);
    s.value_ = std::move(phi);
    return s;
  }
  /// phi_1, phi_2, ... in order.
  static PhiSchedule sequence(std::vector<T> phis) {
    PhiSchedule s(PhiRule::Sequence);
    s.sequence_ = std::move(phis);
    return s;
  }
  /// BFGS everywhere except iteration k, which uses the degenerate value.
  static PhiSchedule degenerate_probe(std::size_t k) {
    PhiSchedule s(PhiRule::DegenerateProbe);
    s.probe_ = k;
    return s;
  }
  static PhiSchedule custom(std::string name, CustomFn fn) {
    PhiSchedule s(PhiRule::Custom);
    s.name_ = std::move(name);
    s.custom_ = std::move(fn);
    return s;
  }

  [[nodiscard]] PhiRule rule() const { return rule_; }

  /// phi_k, or nullopt when the SR1 parameter is undefined.
  std::optional<T> phi_for(const PhiContext<T>& ctx, const Tolerance& tol) const {
    switch (rule_) {
      case PhiRule::Bfgs: return T(0);
      case PhiRule::Constant: return value_;
      case PhiRule::Sr1: return phi_sr1(ctx.B_prev, ctx.p_prev, ctx.H, tol).phi;
      case PhiRule::Sequence:
        if (ctx.k == 0 || ctx.k > sequence_.size())
          throw ScheduleError("phi sequence has no entry for iteration " + std::to_string(ctx.k));
        return sequence_[ctx.k - 1];
      case PhiRule::DegenerateProbe: return ctx.k == probe_ ? ctx.degenerate_value() : T(0);
      case PhiRule::Custom: return custom_(ctx);
    }
    throw ScheduleError("unknown phi rule");
  }

  /// True when every phi_k the schedule can produce is >= 0 (BFGS, or a
  /// non-negative constant or sequence). Unknown for the data-dependent rules.
  [[nodiscard]] bool provably_nonnegative() const {
    switch (rule_) {
      case PhiRule::Bfgs: return true;
      case PhiRule::Constant: return sign(value_) >= 0;
      case PhiRule::Sequence:
        for (const auto& v : sequence_)
          if (sign(v) < 0) return false;
        return true;
      default: return false;
    }
  }

  /// Mini-language form: bfgs, sr1, const:<q>, seq:q1,q2,..., degenerate-probe:<k>.
  [[nodiscard]] std::string describe() const {
    switch (rule_) {
      case PhiRule::Bfgs: return "bfgs";
      case PhiRule::Sr1: return "sr1";
      case PhiRule::Constant: return "const:" + to_string(value_);
      case PhiRule::Sequence: {
        std::string s = "seq:";
        for (std::size_t i = 0; i < sequence_.size(); ++i) s += (i ? "," : "") + to_string(sequence_[i]);
        return s;
      }
      case PhiRule::DegenerateProbe: return "degenerate-probe:" + std::to_string(probe_);
      case PhiRule::Custom: return "custom:" + name_;
    }
    return "?";
  }

 private:
  explicit PhiSchedule(PhiRule r) : rule_(r) {}

  PhiRule rule_;
  T value_{};
  std::vector<T> sequence_;
  std::size_t probe_ = 0;
  std::string name_;
  CustomFn custom_;
};

template <Field T>
PhiSchedule<T> parse_schedule(std::string_view text) {
  const auto colon = text.find(':');
  const std::string head(text.substr(0, colon));
  const std::string arg = colon == std::string_view::npos ? "" : std::string(text.substr(colon + 1));
  const bool has_arg = colon != std::string_view::npos;
  try {
    if (head == "bfgs" && !has_arg) return PhiSchedule<T>::bfgs();
    if (head == "sr1" && !has_arg) return PhiSchedule<T>::sr1();
    if (head == "const" && has_arg) return PhiSchedule<T>::constant(parse_scalar<T>(arg));
    if (head == "seq" && has_arg) {
      std::vector<T> values;
      std::size_t start = 0;
      while (start <= arg.size()) {
        const auto comma = arg.find(',', start);
        const auto end = comma == std::string::npos ? arg.size() : comma;
        values.push_back(parse_scalar<T>(std::string_view(arg).substr(start, end - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return PhiSchedule<T>::sequence(std::move(values));
    }
    if (head == "degenerate-probe" && has_arg) {
      std::size_t k = 0;
      auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), k);
      if (ec != std::errc() || ptr != arg.data() + arg.size() || k == 0)
        throw ScheduleError("degenerate-probe needs an iteration index >= 1");
      return PhiSchedule<T>::degenerate_probe(k);
    }
  } catch (const ScalarParseError& e) {
    throw ScheduleError(std::string("bad phi schedule '") + std::string(text) + "': " + e.what());
  }
  throw ScheduleError("bad phi schedule '" + std::string(text) +
                      "' (expected bfgs, sr1, const:<q>, seq:<q1,q2,...> or degenerate-probe:<k>)");
}

enum class BreakdownKind {
  /// phi_SR1 undefined: the previous iteration took the unit step.
  Sr1Undefined,
  /// phi equals the degenerate value; the new B_k is singular.
  DegeneratePhi,
  /// B_k p_k = -g_k has no (numerically acceptable) solution.
  SolveIncompatible,
  /// p^T B p = 0 with B p != 0 in the update.
  UpdateNotWellDefined,
};

inline const char* breakdown_name(BreakdownKind k) {
  switch (k) {
    case BreakdownKind::Sr1Undefined: return "SR1Undefined";
    case BreakdownKind::DegeneratePhi: return "DegeneratePhi";
    case BreakdownKind::SolveIncompatible: return "SolveIncompatible";
    case BreakdownKind::UpdateNotWellDefined: return "UpdateNotWellDefined";
  }
  return "?";
}

/// Failure to form p_k at iteration k. `history` holds iterations 0..k-1 and
/// (x, g) the point x_k that was reached.
template <Field T>
struct Breakdown {
  BreakdownKind kind;
  std::size_t k = 0;
  std::string detail;
  std::optional<T> phi;
  std::optional<T> degenerate_phi;
  std::optional<T> previous_step;
  std::optional<SymMatrix<T>> B;
  std::optional<T> determinant;
  std::optional<double> condition_estimate;
  std::vector<IterationRecord<T>> history;
  Vector<T> x, g;
};

template <Field T>
struct QnState {
  std::size_t k = 0;
  Vector<T> x, g, p;
  SymMatrix<T> B;
  std::optional<BroydenUpdate<T>> update;
  double g0_norm = 0.0;
  std::vector<IterationRecord<T>> history;
};

struct QnOptions {
  /// Zero tests on phi-dependent quantities (SR1 denominator, 1 + phi g^Tg/p^TBp).
  Tolerance tol{1e-10, 0.0};
  /// Pivot threshold of the symmetric indefinite solve.
  Tolerance singular_tol{1e-14, 0.0};
  StopPolicy stop{};
};

/// B_0 = I, so p_0 = -g_0.
template <Field T>
QnState<T> qn_init(const QuadraticProblem<T>& prob) {
  QnState<T> s;
  s.x = prob.start();
  s.g = gradient(prob, s.x);
  s.B = SymMatrix<T>::identity(prob.dimension());
  s.p = -s.g;
  s.g0_norm = norm2(s.g);
  return s;
}

template <Field T>
using QnStepResult = std::variant<QnState<T>, Breakdown<T>>;

/// Exact linesearch along p_k, then (unless converged) B_{k+1} = B_k + U_{k+1}
/// from the schedule's phi_{k+1} and B_{k+1} p_{k+1} = -g_{k+1}.
template <Field T>
QnStepResult<T> qn_step(const QnState<T>& state, const QuadraticProblem<T>& prob, const PhiSchedule<T>& sched,
                        const QnOptions& opts = {}) {
  if (state.g.is_zero()) throw AlreadyConvergedError();
  const SymMatrix<T>& H = prob.hessian();
  const Vector<T> Hp = matvec(H, state.p);
  const T pHp = inner(state.p, Hp);
  if (pHp == 0) throw ZeroDirectionError();
  const T alpha = -inner(state.p, state.g) / pHp;

  QnState<T> next;
  next.k = state.k + 1;
  next.g0_norm = state.g0_norm;
  next.history = state.history;
  next.history.push_back(IterationRecord<T>{
      .k = state.k,
      .x = state.x,
      .g = state.g,
      .p = state.p,
      .alpha = alpha,
      .beta_prev = std::nullopt,
      .beta_prev_hessian = std::nullopt,
      .B = state.B,
      .update = state.update,
  });
  next.x = state.x + alpha * state.p;
  next.g = state.g + alpha * Hp;
  next.B = state.B;
  if (gradient_converged(next.g, next.g0_norm, opts.stop)) {
    next.p = Vector<T>(state.p.size());
    return next;
  }

  auto fail = [&](BreakdownKind kind, std::string detail) {
    Breakdown<T> b;
    b.kind = kind;
    b.k = next.k;
    b.detail = std::move(detail);
    b.previous_step = alpha;
    b.history = next.history;
    b.x = next.x;
    b.g = next.g;
    return b;
  };

  const PhiContext<T> ctx{next.k, state.B, state.p, H, next.g, quad_form(state.B, state.p, state.p), pHp,
                          inner(next.g, next.g)};
  const std::optional<T> phi = sched.phi_for(ctx, opts.tol);
  if (!phi) {
    return fail(BreakdownKind::Sr1Undefined,
                "SR1 parameter undefined: p^T (H - B) p = 0, i.e. the previous step was the unit step (alpha = " +
                    to_string(alpha) + ")");
  }
  const T degenerate = ctx.degenerate_value();
  const bool is_degenerate = !delta_of_phi(*phi, ctx.pBp, ctx.gTg, opts.tol).has_value();

  std::optional<BroydenUpdate<T>> upd;
  try {
    upd = broyden_update(state.B, state.p, H, *phi, opts.tol);
  } catch (const UpdateNotWellDefined& e) {
    auto b = fail(BreakdownKind::UpdateNotWellDefined, e.what());
    b.phi = phi;
    return b;
  }
  SymMatrix<T> B_new = state.B + upd->U;

  if (is_degenerate) {
    auto b = fail(BreakdownKind::DegeneratePhi, "phi equals the degenerate value -p^T B p / g^T g; B_k is singular");
    b.phi = phi;
    b.degenerate_phi = degenerate;
    b.determinant = determinant(B_new);
    if constexpr (!is_exact_v<T>) b.condition_estimate = condition_estimate(B_new, opts.singular_tol);
    b.B = std::move(B_new);
    return b;
  }

  auto p_new = solve_symmetric(B_new, -next.g, opts.singular_tol);
  if (!p_new) {
    auto b = fail(BreakdownKind::SolveIncompatible, "B_k p_k = -g_k has no solution (B_k singular)");
    b.phi = phi;
    b.degenerate_phi = degenerate;
    b.determinant = determinant(B_new);
    if constexpr (!is_exact_v<T>) b.condition_estimate = condition_estimate(B_new, opts.singular_tol);
    b.B = std::move(B_new);
    return b;
  }
  next.p = std::move(*p_new);
  next.B = std::move(B_new);
  next.update = std::move(upd);
  return next;
}

template <Field T>
struct QnRun {
  Trace<T> trace;
  std::optional<Breakdown<T>> breakdown;
};

template <Field T>
QnRun<T> qn_run(const QuadraticProblem<T>& prob, const PhiSchedule<T>& sched, const QnOptions& opts = {}) {
  const std::size_t cap = opts.stop.max_iterations.value_or(prob.dimension());
  QnState<T> s = qn_init(prob);
  QnRun<T> run;
  run.trace.method = "qn";
  run.trace.termination = Termination::IterationLimit;
  while (true) {
    if (gradient_converged(s.g, s.g0_norm, opts.stop)) {
      run.trace.termination = Termination::Converged;
      break;
    }
    if (s.k >= cap) break;
    QnStepResult<T> r = qn_step(s, prob, sched, opts);
    if (auto* b = std::get_if<Breakdown<T>>(&r)) {
      run.trace.iterations = b->history;
      run.trace.x_final = b->x;
      run.trace.g_final = b->g;
      run.trace.termination = Termination::Breakdown;
      run.breakdown = std::move(*b);
      return run;
    }
    s = std::move(std::get<QnState<T>>(r));
  }
  run.trace.iterations = std::move(s.history);
  run.trace.x_final = std::move(s.x);
  run.trace.g_final = std::move(s.g);
  return run;
}

}  // namespace cgqn
