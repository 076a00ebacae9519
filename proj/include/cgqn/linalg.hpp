#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cgqn/scalar.hpp"

namespace cgqn {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AsymmetricMatrixError : public std::invalid_argument {
 public:
  AsymmetricMatrixError(std::size_t i, std::size_t j)
      : std::invalid_argument("matrix is not symmetric at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")"),
        row(i),
        col(j) {}
  std::size_t row, col;
};

// ---------------------------------------------------------------------------
// Vector
// ---------------------------------------------------------------------------

template <Field T>
class Vector {
 public:
  using value_type = T;

  Vector() = default;
  explicit Vector(std::size_t n) : data_(n, T(0)) {}
  Vector(std::initializer_list<T> init) : data_(init) {}
  explicit Vector(std::vector<T> data) : data_(std::move(data)) {}

  static Vector unit(std::size_t n, std::size_t i) {
    Vector e(n);
    e.at(i) = T(1);
    return e;
  }

  [[nodiscard]] std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t i) {
    assert(i < data_.size());
    return data_[i];
  }
  const T& operator[](std::size_t i) const {
    assert(i < data_.size());
    return data_[i];
  }
  T& at(std::size_t i) { return data_.at(i); }
  const T& at(std::size_t i) const { return data_.at(i); }

  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  std::span<const T> view() const { return data_; }

  [[nodiscard]] bool is_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](const T& v) { return v == 0; });
  }

  Vector& operator+=(const Vector& o) {
    require_same(o);
    for (std::size_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Vector& operator-=(const Vector& o) {
    require_same(o);
    for (std::size_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Vector& operator*=(const T& s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend Vector operator+(Vector a, const Vector& b) { return a += b; }
  friend Vector operator-(Vector a, const Vector& b) { return a -= b; }
  friend Vector operator*(const T& s, Vector a) { return a *= s; }
  friend Vector operator*(Vector a, const T& s) { return a *= s; }
  friend Vector operator-(Vector a) {
    for (auto& v : a.data_) v = -v;
    return a;
  }
  friend bool operator==(const Vector& a, const Vector& b) { return a.data_ == b.data_; }

 private:
  void require_same(const Vector& o) const {
    if (o.size() != size()) throw DimensionError("vector length mismatch");
  }
  std::vector<T> data_;
};

template <Field T>
T inner(const Vector<T>& u, const Vector<T>& v) {
  if (u.size() != v.size()) throw DimensionError("inner: length mismatch");
  T s(0);
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

/// Euclidean norm, always evaluated in double.
template <Field T>
double norm2(const Vector<T>& v) {
  double s = 0.0;
  for (const auto& x : v) {
    const double d = to_double(x);
    s += d * d;
  }
  return std::sqrt(s);
}

template <Field T>
double max_abs(const Vector<T>& v) {
  double m = 0.0;
  for (const auto& x : v) m = std::max(m, magnitude(x));
  return m;
}

/// Vector equality: exact in rational mode, ||a-b|| <= tol relative to the
/// larger norm in float mode.
template <Field T>
bool nearly_equal(const Vector<T>& a, const Vector<T>& b, const Tolerance& tol) {
  if (a.size() != b.size()) return false;
  if constexpr (is_exact_v<T>) {
    return a == b;
  } else {
    return norm2(a - b) <= tol.threshold(std::max(norm2(a), norm2(b)));
  }
}

template <Field T>
bool nearly_zero(const Vector<T>& v, double scale, const Tolerance& tol) {
  if constexpr (is_exact_v<T>) {
    return v.is_zero();
  } else {
    return norm2(v) <= tol.threshold(scale);
  }
}

// ---------------------------------------------------------------------------
// Matrix (general dense, row-major)
// ---------------------------------------------------------------------------

template <Field T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T(0)) {}

  static Matrix from_columns(std::span<const Vector<T>> cols, std::size_t n) {
    Matrix m(n, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j].size() != n) throw DimensionError("from_columns: length mismatch");
      for (std::size_t i = 0; i < n; ++i) m(i, j) = cols[j][i];
    }
    return m;
  }

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }

  T& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  void swap_rows(std::size_t a, std::size_t b) {
    if (a == b) return;
    for (std::size_t j = 0; j < cols_; ++j) std::swap((*this)(a, j), (*this)(b, j));
  }

  Vector<T> column(std::size_t j) const {
    Vector<T> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (const auto& x : data_) m = std::max(m, magnitude(x));
    return m;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

template <Field T>
Vector<T> matvec(const Matrix<T>& A, const Vector<T>& v) {
  if (A.cols() != v.size()) throw DimensionError("matvec: dimension mismatch");
  Vector<T> out(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    T s(0);
    for (std::size_t j = 0; j < A.cols(); ++j) s += A(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

template <Field T>
Matrix<T> transpose_times(const Matrix<T>& A, const Matrix<T>& B) {
  if (A.rows() != B.rows()) throw DimensionError("transpose_times: dimension mismatch");
  Matrix<T> out(A.cols(), B.cols());
  for (std::size_t i = 0; i < A.cols(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      T s(0);
      for (std::size_t r = 0; r < A.rows(); ++r) s += A(r, i) * B(r, j);
      out(i, j) = s;
    }
  return out;
}

template <Field T>
Matrix<T> multiply(const Matrix<T>& A, const Matrix<T>& B) {
  if (A.cols() != B.rows()) throw DimensionError("multiply: dimension mismatch");
  Matrix<T> out(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t r = 0; r < A.cols(); ++r) {
      if (A(i, r) == 0) continue;
      for (std::size_t j = 0; j < B.cols(); ++j) out(i, j) += A(i, r) * B(r, j);
    }
  return out;
}

// ---------------------------------------------------------------------------
// SymMatrix
// ---------------------------------------------------------------------------

/// Dense symmetric matrix. Construction from a general matrix requires exact
/// symmetry for rationals and averages the two triangles for doubles.
template <Field T>
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n) : a_(n, n) {}

  explicit SymMatrix(Matrix<T> m) : a_(std::move(m)) {
    if (a_.rows() != a_.cols()) throw DimensionError("SymMatrix: matrix is not square");
    const std::size_t n = a_.rows();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        if constexpr (is_exact_v<T>) {
          if (a_(i, j) != a_(j, i)) throw AsymmetricMatrixError(i, j);
        } else {
          const double avg = 0.5 * (a_(i, j) + a_(j, i));
          a_(i, j) = avg;
          a_(j, i) = avg;
        }
      }
  }

  SymMatrix(std::initializer_list<std::initializer_list<T>> rows) : SymMatrix(from_rows(rows)) {}

  static SymMatrix identity(std::size_t n) {
    SymMatrix I(n);
    for (std::size_t i = 0; i < n; ++i) I.a_(i, i) = T(1);
    return I;
  }

  static SymMatrix diagonal(const Vector<T>& d) {
    SymMatrix D(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) D.a_(i, i) = d[i];
    return D;
  }

  /// s * u u^T
  static SymMatrix outer(const Vector<T>& u, const T& s = T(1)) {
    SymMatrix M(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j) M.a_(i, j) = s * u[i] * u[j];
    return M;
  }

  /// s * (u v^T + v u^T)
  static SymMatrix sym_outer(const Vector<T>& u, const Vector<T>& v, const T& s = T(1)) {
    if (u.size() != v.size()) throw DimensionError("sym_outer: length mismatch");
    SymMatrix M(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j) M.a_(i, j) = s * (u[i] * v[j] + v[i] * u[j]);
    return M;
  }

  [[nodiscard]] std::size_t size() const { return a_.rows(); }
  const T& operator()(std::size_t i, std::size_t j) const { return a_(i, j); }

  /// Writes both (i,j) and (j,i).
  void set(std::size_t i, std::size_t j, const T& v) {
    a_(i, j) = v;
    a_(j, i) = v;
  }

  const Matrix<T>& dense() const { return a_; }
  [[nodiscard]] double max_abs() const { return a_.max_abs(); }

  SymMatrix& operator+=(const SymMatrix& o) {
    require_same(o);
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j) a_(i, j) += o.a_(i, j);
    return *this;
  }
  SymMatrix& operator-=(const SymMatrix& o) {
    require_same(o);
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j) a_(i, j) -= o.a_(i, j);
    return *this;
  }
  SymMatrix& operator*=(const T& s) {
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j) a_(i, j) *= s;
    return *this;
  }
  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
  friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
  friend SymMatrix operator*(const T& s, SymMatrix a) { return a *= s; }
  friend bool operator==(const SymMatrix& a, const SymMatrix& b) { return a.a_ == b.a_; }

 private:
  static Matrix<T> from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t n = rows.size();
    Matrix<T> m(n, n);
    std::size_t i = 0;
    for (const auto& r : rows) {
      if (r.size() != n) throw DimensionError("SymMatrix: ragged initializer");
      std::size_t j = 0;
      for (const auto& v : r) m(i, j++) = v;
      ++i;
    }
    return m;
  }
  void require_same(const SymMatrix& o) const {
    if (o.size() != size()) throw DimensionError("SymMatrix: size mismatch");
  }

  Matrix<T> a_;
};

template <Field T>
Vector<T> matvec(const SymMatrix<T>& A, const Vector<T>& v) {
  return matvec(A.dense(), v);
}

/// u^T A v
template <Field T>
T quad_form(const SymMatrix<T>& A, const Vector<T>& u, const Vector<T>& v) {
  return inner(u, matvec(A, v));
}

template <Field T>
bool nearly_equal(const SymMatrix<T>& A, const SymMatrix<T>& B, const Tolerance& tol) {
  if (A.size() != B.size()) return false;
  if constexpr (is_exact_v<T>) {
    return A == B;
  } else {
    return (A - B).max_abs() <= tol.threshold(std::max(A.max_abs(), B.max_abs()));
  }
}

template <Field T, Field U>
SymMatrix<U> convert(const SymMatrix<T>& A) {
  SymMatrix<U> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i)
    for (std::size_t j = i; j < A.size(); ++j) {
      if constexpr (std::is_same_v<T, Rational>)
        out.set(i, j, from_rational<U>(A(i, j)));
      else
        out.set(i, j, scalar_traits<U>::from_double(to_double(A(i, j))));
    }
  return out;
}

template <Field T, Field U>
Vector<U> convert(const Vector<T>& v) {
  Vector<U> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if constexpr (std::is_same_v<T, Rational>)
      out[i] = from_rational<U>(v[i]);
    else
      out[i] = scalar_traits<U>::from_double(to_double(v[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact elimination kernels
// ---------------------------------------------------------------------------

namespace detail {

// Fraction-free (Bareiss) forward elimination with row pivoting on a copy of
// [A | rhs]. Returns the signed determinant of the leading square block, or
// zero when it is singular (in which case `m` is left partially reduced).
template <Field T>
T bareiss_forward(Matrix<T>& m, std::size_t n) {
  T prev(1);
  int swaps = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    while (piv < n && m(piv, k) == 0) ++piv;
    if (piv == n) return T(0);
    if (piv != k) {
      m.swap_rows(piv, k);
      ++swaps;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < m.cols(); ++j) {
        m(i, j) = (m(k, k) * m(i, j) - m(i, k) * m(k, j)) / prev;
      }
      m(i, k) = T(0);
    }
    prev = m(k, k);
  }
  return (swaps % 2 == 0) ? m(n - 1, n - 1) : T(-m(n - 1, n - 1));
}

}  // namespace detail

/// Determinant of a square matrix. Exact mode uses fraction-free elimination;
/// float mode uses partial-pivoted LU.
template <Field T>
T determinant(const Matrix<T>& A) {
  if (A.rows() != A.cols()) throw DimensionError("determinant: not square");
  const std::size_t n = A.rows();
  if (n == 0) return T(1);
  Matrix<T> m = A;
  if constexpr (is_exact_v<T>) {
    return detail::bareiss_forward(m, n);
  } else {
    double det = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::fabs(m(i, k)) > std::fabs(m(piv, k))) piv = i;
      if (m(piv, k) == 0.0) return 0.0;
      if (piv != k) {
        m.swap_rows(piv, k);
        det = -det;
      }
      det *= m(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        const double l = m(i, k) / m(k, k);
        for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= l * m(k, j);
      }
    }
    return det;
  }
}

template <Field T>
T determinant(const SymMatrix<T>& A) {
  return determinant(A.dense());
}

/// All leading principal minors det(A[0..k, 0..k]), k = 1..n.
template <Field T>
std::vector<T> leading_principal_minors(const SymMatrix<T>& A) {
  std::vector<T> out;
  const std::size_t n = A.size();
  for (std::size_t k = 1; k <= n; ++k) {
    Matrix<T> sub(k, k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) sub(i, j) = A(i, j);
    out.push_back(determinant(sub));
  }
  return out;
}

/// Index (1-based) of the first leading principal minor that is not positive,
/// or nullopt when A is positive definite. Uses the unpivoted LDL^T pivots
/// d_k = M_k / M_{k-1}, whose signs match the minors while the earlier ones
/// are positive.
template <Field T>
std::optional<std::size_t> first_nonpositive_minor(const SymMatrix<T>& A,
                                                   const Tolerance& tol = {}) {
  const std::size_t n = A.size();
  Matrix<T> m = A.dense();
  const double scale = A.max_abs();
  for (std::size_t k = 0; k < n; ++k) {
    const T d = m(k, k);
    if (sign(d) <= 0 || negligible(d, scale, tol)) return k + 1;
    for (std::size_t i = k + 1; i < n; ++i) {
      const T l = m(i, k) / d;
      for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= l * m(k, j);
    }
  }
  return std::nullopt;
}

template <Field T>
bool is_positive_definite(const SymMatrix<T>& A, const Tolerance& tol = {}) {
  return !first_nonpositive_minor(A, tol).has_value();
}

// ---------------------------------------------------------------------------
// Symmetric indefinite factorization (float mode): Bunch-Kaufman
// ---------------------------------------------------------------------------

/// P A P^T = L D L^T with unit lower-triangular L and block-diagonal D made of
/// 1x1 and 2x2 blocks, chosen with the Bunch-Kaufman partial pivoting rule.
class BunchKaufman {
 public:
  BunchKaufman(const SymMatrix<double>& A, const Tolerance& tol) : n_(A.size()), L_(n_, n_), D_(n_, n_) {
    Matrix<double> a = A.dense();
    perm_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) perm_[i] = i;
    const double alpha = (1.0 + std::sqrt(17.0)) / 8.0;
    const double thresh = tol.threshold(A.max_abs());

    std::size_t k = 0;
    while (k < n_) {
      std::size_t kstep = 1;
      const double absakk = std::fabs(a(k, k));
      std::size_t imax = k;
      double colmax = 0.0;
      for (std::size_t i = k + 1; i < n_; ++i)
        if (std::fabs(a(i, k)) > colmax) {
          colmax = std::fabs(a(i, k));
          imax = i;
        }
      std::size_t kp = k;
      if (std::max(absakk, colmax) <= thresh) {
        singular_ = true;
        L_(k, k) = 1.0;
        D_(k, k) = a(k, k);
        blocks_.push_back(1);
        ++k;
        continue;
      }
      if (absakk < alpha * colmax) {
        double rowmax = 0.0;
        for (std::size_t j = k; j < n_; ++j)
          if (j != imax) rowmax = std::max(rowmax, std::fabs(a(imax, j)));
        if (absakk >= alpha * colmax * (colmax / rowmax)) {
          kp = k;
        } else if (std::fabs(a(imax, imax)) >= alpha * rowmax) {
          kp = imax;
        } else {
          kp = imax;
          kstep = 2;
        }
      }
      const std::size_t kk = k + kstep - 1;
      if (kp != kk) symmetric_swap(a, kk, kp, k);

      if (kstep == 1) {
        const double d = a(k, k);
        if (std::fabs(d) <= thresh) singular_ = true;
        D_(k, k) = d;
        L_(k, k) = 1.0;
        for (std::size_t i = k + 1; i < n_; ++i) L_(i, k) = a(i, k) / d;
        for (std::size_t i = k + 1; i < n_; ++i)
          for (std::size_t j = k + 1; j < n_; ++j) a(i, j) -= L_(i, k) * a(j, k);
        blocks_.push_back(1);
      } else {
        const double d11 = a(k, k), d21 = a(k + 1, k), d22 = a(k + 1, k + 1);
        const double det = d11 * d22 - d21 * d21;
        if (std::fabs(det) <= thresh * std::max({std::fabs(d11), std::fabs(d21), std::fabs(d22)}))
          singular_ = true;
        D_(k, k) = d11;
        D_(k + 1, k) = d21;
        D_(k, k + 1) = d21;
        D_(k + 1, k + 1) = d22;
        L_(k, k) = 1.0;
        L_(k + 1, k + 1) = 1.0;
        for (std::size_t i = k + 2; i < n_; ++i) {
          // [l_i0 l_i1] = [a_ik a_i,k+1] D^{-1}
          L_(i, k) = (a(i, k) * d22 - a(i, k + 1) * d21) / det;
          L_(i, k + 1) = (a(i, k + 1) * d11 - a(i, k) * d21) / det;
        }
        for (std::size_t i = k + 2; i < n_; ++i)
          for (std::size_t j = k + 2; j < n_; ++j)
            a(i, j) -= L_(i, k) * a(j, k) + L_(i, k + 1) * a(j, k + 1);
        blocks_.push_back(2);
        blocks_.push_back(0);
      }
      k += kstep;
    }
  }

  [[nodiscard]] bool singular() const { return singular_; }

  Vector<double> solve(const Vector<double>& b) const {
    if (b.size() != n_) throw DimensionError("solve: dimension mismatch");
    Vector<double> y(n_);
    for (std::size_t i = 0; i < n_; ++i) y[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < i; ++j) y[i] -= L_(i, j) * y[j];
    for (std::size_t k = 0; k < n_;) {
      if (blocks_[k] == 1) {
        y[k] /= D_(k, k);
        k += 1;
      } else {
        const double d11 = D_(k, k), d21 = D_(k + 1, k), d22 = D_(k + 1, k + 1);
        const double det = d11 * d22 - d21 * d21;
        const double y0 = y[k], y1 = y[k + 1];
        y[k] = (d22 * y0 - d21 * y1) / det;
        y[k + 1] = (d11 * y1 - d21 * y0) / det;
        k += 2;
      }
    }
    for (std::size_t ii = n_; ii-- > 0;)
      for (std::size_t j = ii + 1; j < n_; ++j) y[ii] -= L_(j, ii) * y[j];
    Vector<double> x(n_);
    for (std::size_t i = 0; i < n_; ++i) x[perm_[i]] = y[i];
    return x;
  }

  /// Inertia (positive, negative, zero eigenvalue counts) by Sylvester's law.
  [[nodiscard]] std::array<std::size_t, 3> inertia() const {
    std::array<std::size_t, 3> in{0, 0, 0};
    for (std::size_t k = 0; k < n_;) {
      if (blocks_[k] == 1) {
        const double d = D_(k, k);
        ++in[d > 0 ? 0 : (d < 0 ? 1 : 2)];
        k += 1;
      } else {
        // 2x2 blocks from this pivoting rule always have det < 0: one of each sign.
        ++in[0];
        ++in[1];
        k += 2;
      }
    }
    return in;
  }

 private:
  // Swap index r and s (r < s) in the trailing block and the computed rows of L.
  void symmetric_swap(Matrix<double>& a, std::size_t r, std::size_t s, std::size_t k) {
    if (r > s) std::swap(r, s);
    a.swap_rows(r, s);
    for (std::size_t i = 0; i < n_; ++i) std::swap(a(i, r), a(i, s));
    for (std::size_t j = 0; j < k; ++j) std::swap(L_(r, j), L_(s, j));
    std::swap(perm_[r], perm_[s]);
  }

  std::size_t n_;
  Matrix<double> L_, D_;
  std::vector<std::size_t> perm_;
  std::vector<int> blocks_;
  bool singular_ = false;
};

/// Solves A x = b for symmetric, possibly indefinite A. Returns nullopt when A
/// is singular: exactly (rational) or to within `tol` (float).
template <Field T>
std::optional<Vector<T>> solve_symmetric(const SymMatrix<T>& A, const Vector<T>& b,
                                         const Tolerance& tol = {}) {
  const std::size_t n = A.size();
  if (b.size() != n) throw DimensionError("solve_symmetric: dimension mismatch");
  if (n == 0) return Vector<T>();
  if constexpr (is_exact_v<T>) {
    Matrix<T> m(n, n + 1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) m(i, j) = A(i, j);
      m(i, n) = b[i];
    }
    if (detail::bareiss_forward(m, n) == 0) return std::nullopt;
    Vector<T> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
      T s = m(ii, n);
      for (std::size_t j = ii + 1; j < n; ++j) s -= m(ii, j) * x[j];
      x[ii] = s / m(ii, ii);
    }
    return x;
  } else {
    BunchKaufman f(A, tol);
    if (f.singular()) return std::nullopt;
    return f.solve(b);
  }
}

/// General square solve A X = B (column block). Bareiss in exact mode,
/// partial-pivoted LU in float mode. nullopt when singular.
template <Field T>
std::optional<Matrix<T>> solve_linear(const Matrix<T>& A, const Matrix<T>& B, const Tolerance& tol = {}) {
  const std::size_t n = A.rows();
  if (A.cols() != n || B.rows() != n) throw DimensionError("solve_linear: dimension mismatch");
  const std::size_t m = B.cols();
  Matrix<T> aug(n, n + m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) aug(i, j) = A(i, j);
    for (std::size_t j = 0; j < m; ++j) aug(i, n + j) = B(i, j);
  }
  if constexpr (is_exact_v<T>) {
    if (n > 0 && detail::bareiss_forward(aug, n) == 0) return std::nullopt;
  } else {
    const double thresh = tol.threshold(A.max_abs());
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::fabs(aug(i, k)) > std::fabs(aug(piv, k))) piv = i;
      if (std::fabs(aug(piv, k)) <= thresh || aug(piv, k) == 0.0) return std::nullopt;
      aug.swap_rows(piv, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        const double l = aug(i, k) / aug(k, k);
        for (std::size_t j = k; j < n + m; ++j) aug(i, j) -= l * aug(k, j);
      }
    }
  }
  Matrix<T> X(n, m);
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t ii = n; ii-- > 0;) {
      T s = aug(ii, n + c);
      for (std::size_t j = ii + 1; j < n; ++j) s -= aug(ii, j) * X(j, c);
      X(ii, c) = s / aug(ii, ii);
    }
  return X;
}

/// 1-norm condition number estimate kappa_1(A) = ||A||_1 ||A^{-1}||_1 from n
/// solves; infinity when the factorization is singular.
inline double condition_estimate(const SymMatrix<double>& A, const Tolerance& tol = {}) {
  const std::size_t n = A.size();
  BunchKaufman f(A, tol);
  if (f.singular()) return std::numeric_limits<double>::infinity();
  double norm_a = 0.0, norm_inv = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < n; ++i) col += std::fabs(A(i, j));
    norm_a = std::max(norm_a, col);
    const Vector<double> x = f.solve(Vector<double>::unit(n, j));
    double xcol = 0.0;
    for (const double v : x) xcol += std::fabs(v);
    norm_inv = std::max(norm_inv, xcol);
  }
  return norm_a * norm_inv;
}

// ---------------------------------------------------------------------------
// Rank and span tests
// ---------------------------------------------------------------------------

/// Rank by complete-pivoting elimination. Float pivots below
/// tol.threshold(max|A|) count as zero.
template <Field T>
std::size_t rank(const Matrix<T>& A, const Tolerance& tol = {}) {
  Matrix<T> m = A;
  const std::size_t rows = m.rows(), cols = m.cols();
  const double scale = m.max_abs();
  std::vector<std::size_t> colidx(cols);
  for (std::size_t j = 0; j < cols; ++j) colidx[j] = j;
  std::size_t r = 0;
  for (; r < std::min(rows, cols); ++r) {
    std::size_t pi = r, pj = r;
    double best = -1.0;
    bool found = false;
    for (std::size_t i = r; i < rows && !(found && is_exact_v<T>); ++i)
      for (std::size_t j = r; j < cols; ++j) {
        const auto& v = m(i, colidx[j]);
        if constexpr (is_exact_v<T>) {
          if (v != 0) {
            pi = i;
            pj = j;
            found = true;
            break;
          }
        } else {
          if (std::fabs(v) > best) {
            best = std::fabs(v);
            pi = i;
            pj = j;
          }
        }
      }
    if constexpr (is_exact_v<T>) {
      if (!found) break;
    } else {
      if (best <= tol.threshold(scale)) break;
    }
    m.swap_rows(pi, r);
    std::swap(colidx[pj], colidx[r]);
    const T piv = m(r, colidx[r]);
    for (std::size_t i = r + 1; i < rows; ++i) {
      const T l = m(i, colidx[r]) / piv;
      if (l == 0) continue;
      for (std::size_t j = r; j < cols; ++j) m(i, colidx[j]) -= l * m(r, colidx[j]);
    }
  }
  return r;
}

template <Field T>
std::size_t rank(const SymMatrix<T>& A, const Tolerance& tol = {}) {
  return rank(A.dense(), tol);
}

/// Residual of v after orthogonal projection onto span(basis), in double.
/// Uses modified Gram-Schmidt with one reorthogonalization pass.
template <Field T>
double projection_residual(const Vector<T>& v, std::span<const Vector<T>> basis, const Tolerance& tol = {}) {
  std::vector<std::vector<double>> q;
  auto to_d = [](const Vector<T>& x) {
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = to_double(x[i]);
    return d;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto project_out = [&](std::vector<double>& w) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& qi : q) {
        const double c = dot(qi, w);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= c * qi[i];
      }
  };
  for (const auto& b : basis) {
    auto w = to_d(b);
    const double nb = std::sqrt(dot(w, w));
    project_out(w);
    const double nw = std::sqrt(dot(w, w));
    if (nw <= tol.threshold(nb) || nw == 0.0) continue;
    for (auto& x : w) x /= nw;
    q.push_back(std::move(w));
  }
  auto w = to_d(v);
  project_out(w);
  return std::sqrt(dot(w, w));
}

/// v in span(basis)? Exact rank test in rational mode; least-squares residual
/// below tol relative to ||v|| in float mode. The empty basis spans {0}.
template <Field T>
bool in_span(const Vector<T>& v, std::span<const Vector<T>> basis, const Tolerance& tol = {}) {
  for (const auto& b : basis)
    if (b.size() != v.size()) throw DimensionError("in_span: length mismatch");
  if (basis.empty()) return nearly_zero(v, 0.0, tol);
  if constexpr (is_exact_v<T>) {
    if (v.is_zero()) return true;
    const Matrix<T> B = Matrix<T>::from_columns(basis, v.size());
    std::vector<Vector<T>> ext(basis.begin(), basis.end());
    ext.push_back(v);
    const Matrix<T> E = Matrix<T>::from_columns(ext, v.size());
    return rank(B) == rank(E);
  } else {
    return projection_residual(v, basis, tol) <= tol.threshold(norm2(v));
  }
}

template <Field T>
bool in_span(const Vector<T>& v, const std::vector<Vector<T>>& basis, const Tolerance& tol = {}) {
  return in_span(v, std::span<const Vector<T>>(basis), tol);
}

/// Angle between two nonzero vectors, robust near 0 and pi:
/// theta = 2 atan2(|| u/|u| - v/|v| ||, || u/|u| + v/|v| ||).
template <Field T>
double angle_between(const Vector<T>& u, const Vector<T>& v) {
  const double nu = norm2(u), nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) return std::numeric_limits<double>::quiet_NaN();
  double dm = 0.0, dp = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = to_double(u[i]) / nu, b = to_double(v[i]) / nv;
    dm += (a - b) * (a - b);
    dp += (a + b) * (a + b);
  }
  return 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
}

}  // namespace cgqn
