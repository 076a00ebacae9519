#pragma once

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cgqn/linalg.hpp"

namespace cgqn {

/// p^T B p vanished while B p did not, so the Bp-term of the update has no value.
class UpdateNotWellDefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Hp and Bp are parallel; the two-dimensional update frame collapses.
class FrameDegenerateError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A Broyden-family update U = Hp p^T H / p^T H p - Bp p^T B / p^T B p
/// + phi (p^T B p) w w^T, w = Hp / p^T H p - Bp / p^T B p, together with its
/// 2x2 coefficient matrices in two frames:
///   {h, b} = {Hp / p^T H p, Bp / p^T B p}: [[a + s, -s], [-s, -pBp + s]],
///     a = p^T H p, s = phi p^T B p;
///   {g_prev, g_cur}: the gradients an exact linesearch along p produces,
///     g_prev = -Bp and g_cur = (pBp / pHp) Hp - Bp.
/// Coefficients are stored as {m11, m12, m22}.
template <Field T>
struct BroydenUpdate {
  SymMatrix<T> U;
  T phi;
  T pHp;
  T pBp;
  Vector<T> h, b;
  std::array<T, 3> frame_hb;
  Vector<T> g_prev, g_cur;
  std::array<T, 3> frame_gg;
};

/// m11 u u^T + m12 (u v^T + v u^T) + m22 v v^T
template <Field T>
SymMatrix<T> expand_frame(const Vector<T>& u, const Vector<T>& v, const std::array<T, 3>& m) {
  SymMatrix<T> out = SymMatrix<T>::outer(u, m[0]);
  out += SymMatrix<T>::sym_outer(u, v, m[1]);
  out += SymMatrix<T>::outer(v, m[2]);
  return out;
}

/// Three-term Broyden update of B along p with parameter phi.
/// Throws std::invalid_argument when p^T H p = 0 and UpdateNotWellDefined when
/// p^T B p = 0.
template <Field T>
BroydenUpdate<T> broyden_update(const SymMatrix<T>& B, const Vector<T>& p, const SymMatrix<T>& H, const T& phi,
                                const Tolerance& tol = {}) {
  const Vector<T> Hp = matvec(H, p);
  const Vector<T> Bp = matvec(B, p);
  const T a = inner(p, Hp);
  const T beta = inner(p, Bp);
  if (negligible(a, norm2(p) * norm2(Hp), tol)) throw std::invalid_argument("broyden_update: p^T H p is zero");
  if (negligible(beta, norm2(p) * norm2(Bp), tol)) {
    if (nearly_zero(Bp, 0.0, tol)) throw UpdateNotWellDefined("broyden_update: B p = 0");
    throw UpdateNotWellDefined("broyden_update: p^T B p = 0 while B p != 0");
  }
  const T inv_a = T(1) / a;
  const T inv_beta = T(1) / beta;
  BroydenUpdate<T> u{
      .U = SymMatrix<T>(p.size()),
      .phi = phi,
      .pHp = a,
      .pBp = beta,
      .h = Hp * inv_a,
      .b = Bp * inv_beta,
      .frame_hb = {},
      .g_prev = -Bp,
      .g_cur = Hp * T(beta * inv_a) - Bp,
      .frame_gg = {},
  };
  const Vector<T> w = u.h - u.b;
  u.U = SymMatrix<T>::outer(Hp, inv_a);
  u.U -= SymMatrix<T>::outer(Bp, inv_beta);
  u.U += SymMatrix<T>::outer(w, T(phi * beta));

  const T scaled = phi * beta;
  u.frame_hb = {T(a + scaled), T(-scaled), T(scaled - beta)};
  const T a_over_b2 = a * inv_beta * inv_beta;
  u.frame_gg = {T(a_over_b2 - inv_beta), T(-a_over_b2), T(a_over_b2 + phi * inv_beta)};
  return u;
}

template <Field T>
struct Sr1Parameter {
  /// nullopt when p^T (H - B) p = 0.
  std::optional<T> phi;
  /// The exact-linesearch step p^T B p / p^T H p that produced the next
  /// gradient; equal to 1 exactly when phi is undefined.
  T implied_step;
  bool unit_step = false;
};

/// phi_SR1 = p^T H p / p^T (H - B) p.
template <Field T>
Sr1Parameter<T> phi_sr1(const SymMatrix<T>& B, const Vector<T>& p, const SymMatrix<T>& H, const Tolerance& tol = {}) {
  const T a = quad_form(H, p, p);
  const T beta = quad_form(B, p, p);
  const T denom = a - beta;
  Sr1Parameter<T> out{std::nullopt, T(beta / a), false};
  if (negligible(denom, magnitude(a) + magnitude(beta), tol)) {
    out.unit_step = true;
    return out;
  }
  out.phi = a / denom;
  return out;
}

/// The degenerate value -p^T B p / g^T g that makes B + U singular.
template <Field T>
T phi_degenerate(const SymMatrix<T>& B, const Vector<T>& p, const Vector<T>& g_next) {
  const T gg = inner(g_next, g_next);
  if (gg == 0) throw std::invalid_argument("phi_degenerate: next gradient is zero");
  return -quad_form(B, p, p) / gg;
}

/// delta(phi) = 1 / (1 + phi g^T g / p^T B p); nullopt at the degenerate value.
template <Field T>
std::optional<T> delta_of_phi(const T& phi, const T& pBp, const T& gTg, const Tolerance& tol = {}) {
  if (pBp == 0) throw std::invalid_argument("delta_of_phi: p^T B p is zero");
  const T ratio = phi * gTg / pBp;
  const T denom = T(1) + ratio;
  if (negligible(denom, 1.0 + magnitude(ratio), tol)) return std::nullopt;
  return T(1) / denom;
}

enum class WitnessClass { Range, NullSpace, QuasiNewton, Reconstruction };

inline const char* witness_name(WitnessClass w) {
  switch (w) {
    case WitnessClass::Range: return "range";
    case WitnessClass::NullSpace: return "null-space";
    case WitnessClass::QuasiNewton: return "quasi-newton";
    case WitnessClass::Reconstruction: return "reconstruction";
  }
  return "?";
}

struct ConditionWitness {
  WitnessClass kind;
  /// Range: the unit vector e_index with U e_index outside the frame.
  /// NullSpace: the earlier direction p_index with U p_index != 0.
  std::size_t index = 0;
  double residual = 0.0;
};

template <Field T>
struct PhiExtraction {
  std::optional<T> phi;
  std::optional<ConditionWitness> witness;
  [[nodiscard]] bool ok() const { return phi.has_value(); }
};

/// Recovers the Broyden parameter of an update U of B along p, or names the
/// condition that rules U out of the family. Conditions are tested in the
/// order null-space (U p_i = 0 for the earlier directions), quasi-Newton
/// (U p = (H - B) p), range (U e_j in span{Hp, Bp}).
/// Throws FrameDegenerateError when Hp and Bp are parallel.
template <Field T>
PhiExtraction<T> extract_phi(const SymMatrix<T>& U, const SymMatrix<T>& B, const Vector<T>& p,
                             const SymMatrix<T>& H, std::span<const Vector<T>> earlier_directions,
                             const Tolerance& tol = {}) {
  const std::size_t n = p.size();
  if (U.size() != n || B.size() != n || H.size() != n) throw DimensionError("extract_phi: dimension mismatch");
  const Vector<T> Hp = matvec(H, p);
  const Vector<T> Bp = matvec(B, p);
  const std::vector<Vector<T>> frame{Hp, Bp};
  if (rank(Matrix<T>::from_columns(frame, n), tol) < 2)
    throw FrameDegenerateError("extract_phi: H p and B p are linearly dependent");

  const double u_scale = U.max_abs() * std::sqrt(static_cast<double>(n));
  PhiExtraction<T> out;
  for (std::size_t i = 0; i < earlier_directions.size(); ++i) {
    const Vector<T> Upi = matvec(U, earlier_directions[i]);
    if (!nearly_zero(Upi, u_scale * norm2(earlier_directions[i]), tol)) {
      out.witness = ConditionWitness{WitnessClass::NullSpace, i, norm2(Upi)};
      return out;
    }
  }
  const Vector<T> Up = matvec(U, p);
  const Vector<T> target = Hp - Bp;
  if (!nearly_equal(Up, target, tol)) {
    out.witness = ConditionWitness{WitnessClass::QuasiNewton, 0, norm2(Up - target)};
    return out;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const Vector<T> col = U.dense().column(j);
    if (!in_span(col, frame, tol)) {
      out.witness = ConditionWitness{WitnessClass::Range, j, projection_residual(col, std::span(frame), tol)};
      return out;
    }
  }

  // Coefficients in the {h, b} frame: M = G^{-1} F^T U F G^{-1}, G = F^T F.
  const T a = inner(p, Hp), beta = inner(p, Bp);
  const std::vector<Vector<T>> hb{Hp * T(T(1) / a), Bp * T(T(1) / beta)};
  const Matrix<T> F = Matrix<T>::from_columns(hb, n);
  const Matrix<T> G = transpose_times(F, F);
  const Matrix<T> C = transpose_times(F, Matrix<T>(multiply(U.dense(), F)));
  const T det = G(0, 0) * G(1, 1) - G(0, 1) * G(1, 0);
  Matrix<T> Gi(2, 2);
  Gi(0, 0) = G(1, 1) / det;
  Gi(1, 1) = G(0, 0) / det;
  Gi(0, 1) = -G(0, 1) / det;
  Gi(1, 0) = -G(1, 0) / det;
  const Matrix<T> M = multiply(multiply(Gi, C), Gi);
  const T phi = -M(0, 1) / beta;

  const BroydenUpdate<T> rebuilt = broyden_update(B, p, H, phi, tol);
  if (!nearly_equal(rebuilt.U, U, tol)) {
    out.witness = ConditionWitness{WitnessClass::Reconstruction, 0, (rebuilt.U - U).max_abs()};
    return out;
  }
  out.phi = phi;
  return out;
}

template <Field T>
PhiExtraction<T> extract_phi(const SymMatrix<T>& U, const SymMatrix<T>& B, const Vector<T>& p,
                             const SymMatrix<T>& H, const std::vector<Vector<T>>& earlier_directions,
                             const Tolerance& tol = {}) {
  return extract_phi(U, B, p, H, std::span<const Vector<T>>(earlier_directions), tol);
}

}  // namespace cgqn
