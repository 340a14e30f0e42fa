#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "carnot/error.hpp"
#include "carnot/scalar.hpp"

namespace carnot {

template <class T>
using Vec = std::vector<T>;

/// Dense row-major matrix.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : r_(rows), c_(cols), a_(rows * cols, ScalarTraits<T>::zero()) {}
  Matrix(std::initializer_list<std::initializer_list<T>> init) {
    r_ = init.size();
    c_ = r_ ? init.begin()->size() : 0;
    for (const auto& row : init) {
      if (row.size() != c_) throw validation_error("ragged matrix literal");
      a_.insert(a_.end(), row.begin(), row.end());
    }
  }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = ScalarTraits<T>::one();
    return m;
  }
  static Matrix from_columns(const std::vector<Vec<T>>& cols, std::size_t rows) {
    Matrix m(rows, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < rows; ++i) m(i, j) = cols[j][i];
    return m;
  }
  static Matrix from_rows(const std::vector<Vec<T>>& rows, std::size_t cols) {
    Matrix m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    return m;
  }

  std::size_t rows() const { return r_; }
  std::size_t cols() const { return c_; }
  T& operator()(std::size_t i, std::size_t j) { return a_[i * c_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return a_[i * c_ + j]; }

  Vec<T> row(std::size_t i) const { return Vec<T>(a_.begin() + i * c_, a_.begin() + (i + 1) * c_); }
  Vec<T> col(std::size_t j) const {
    Vec<T> v(r_);
    for (std::size_t i = 0; i < r_; ++i) v[i] = (*this)(i, j);
    return v;
  }
  Matrix transpose() const {
    Matrix t(c_, r_);
    for (std::size_t i = 0; i < r_; ++i)
      for (std::size_t j = 0; j < c_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }
  bool is_zero() const {
    for (const auto& x : a_)
      if (!ScalarTraits<T>::is_zero(x)) return false;
    return true;
  }

  Matrix& operator+=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
  }
  Matrix& operator*=(const T& s) {
    for (auto& x : a_) x *= s;
    return *this;
  }
  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, const T& s) { return a *= s; }
  friend Matrix operator*(const T& s, Matrix a) { return a *= s; }
  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.c_ != b.r_) throw validation_error("matrix product shape mismatch");
    Matrix m(a.r_, b.c_);
    for (std::size_t i = 0; i < a.r_; ++i)
      for (std::size_t k = 0; k < a.c_; ++k) {
        const T& x = a(i, k);
        if (ScalarTraits<T>::is_zero(x)) continue;
        for (std::size_t j = 0; j < b.c_; ++j) m(i, j) += x * b(k, j);
      }
    return m;
  }
  friend Vec<T> operator*(const Matrix& a, const Vec<T>& v) {
    if (a.c_ != v.size()) throw validation_error("matrix-vector shape mismatch");
    Vec<T> out(a.r_, ScalarTraits<T>::zero());
    for (std::size_t i = 0; i < a.r_; ++i)
      for (std::size_t j = 0; j < a.c_; ++j) out[i] += a(i, j) * v[j];
    return out;
  }
  friend bool operator==(const Matrix& a, const Matrix& b) { return a.r_ == b.r_ && a.c_ == b.c_ && a.a_ == b.a_; }

  template <class U>
  Matrix<U> cast() const {
    Matrix<U> m(r_, c_);
    for (std::size_t i = 0; i < r_; ++i)
      for (std::size_t j = 0; j < c_; ++j) {
        if constexpr (std::is_same_v<U, double>)
          m(i, j) = to_double((*this)(i, j));
        else
          m(i, j) = U((*this)(i, j));
      }
    return m;
  }

 private:
  void check_same(const Matrix& o) const {
    if (r_ != o.r_ || c_ != o.c_) throw validation_error("matrix shape mismatch");
  }
  std::size_t r_ = 0, c_ = 0;
  std::vector<T> a_;
};

/// Pivot threshold: exact zero for rationals, `tol` scaled by the largest entry for doubles.
template <class T>
bool negligible(const T& x, double tol) {
  if constexpr (ScalarTraits<T>::exact) {
    (void)tol;
    return ScalarTraits<T>::is_zero(x);
  } else {
    return ScalarTraits<T>::abs(x) <= tol;
  }
}

template <class T>
struct Echelon {
  Matrix<T> reduced;
  std::vector<std::size_t> pivots;
};

/// Reduced row echelon form. Float input uses partial pivoting and treats
/// entries below tol * max|entry| as zero.
template <class T>
Echelon<T> rref(Matrix<T> m, double tol = 1e-12) {
  const std::size_t R = m.rows(), C = m.cols();
  double scale = 0;
  if constexpr (!ScalarTraits<T>::exact) {
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) scale = std::max(scale, std::fabs(m(i, j)));
  }
  const double thr = tol * (scale > 0 ? scale : 1.0);
  std::vector<std::size_t> piv;
  std::size_t row = 0;
  for (std::size_t col = 0; col < C && row < R; ++col) {
    std::size_t best = R;
    if constexpr (ScalarTraits<T>::exact) {
      for (std::size_t i = row; i < R; ++i)
        if (!ScalarTraits<T>::is_zero(m(i, col))) {
          best = i;
          break;
        }
    } else {
      double bv = thr;
      for (std::size_t i = row; i < R; ++i)
        if (std::fabs(m(i, col)) > bv) {
          bv = std::fabs(m(i, col));
          best = i;
        }
    }
    if (best == R) {
      if constexpr (!ScalarTraits<T>::exact)
        for (std::size_t i = row; i < R; ++i) m(i, col) = 0;
      continue;
    }
    if (best != row)
      for (std::size_t j = 0; j < C; ++j) std::swap(m(row, j), m(best, j));
    const T inv = ScalarTraits<T>::one() / m(row, col);
    for (std::size_t j = col; j < C; ++j) m(row, j) *= inv;
    for (std::size_t i = 0; i < R; ++i) {
      if (i == row || ScalarTraits<T>::is_zero(m(i, col))) continue;
      const T f = m(i, col);
      for (std::size_t j = col; j < C; ++j) m(i, j) -= f * m(row, j);
      if constexpr (!ScalarTraits<T>::exact) m(i, col) = 0;
    }
    piv.push_back(col);
    ++row;
  }
  return {std::move(m), std::move(piv)};
}

template <class T>
std::size_t rank(const Matrix<T>& m, double tol = 1e-12) {
  return rref(m, tol).pivots.size();
}

/// Basis of {x : m x = 0}; each vector has a 1 in its free coordinate.
template <class T>
std::vector<Vec<T>> nullspace(const Matrix<T>& m, double tol = 1e-12) {
  const auto e = rref(m, tol);
  const std::size_t C = m.cols();
  std::vector<bool> is_piv(C, false);
  for (auto p : e.pivots) is_piv[p] = true;
  std::vector<Vec<T>> out;
  for (std::size_t f = 0; f < C; ++f) {
    if (is_piv[f]) continue;
    Vec<T> x(C, ScalarTraits<T>::zero());
    x[f] = ScalarTraits<T>::one();
    for (std::size_t k = 0; k < e.pivots.size(); ++k) x[e.pivots[k]] = -e.reduced(k, f);
    out.push_back(std::move(x));
  }
  return out;
}

/// A solution of a x = b with free unknowns set to zero, or nullopt when inconsistent.
template <class T>
std::optional<Vec<T>> solve(const Matrix<T>& a, const Vec<T>& b, double tol = 1e-12) {
  if (b.size() != a.rows()) throw validation_error("solve: right-hand side length mismatch");
  Matrix<T> aug(a.rows(), a.cols() + 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) aug(i, j) = a(i, j);
    aug(i, a.cols()) = b[i];
  }
  const auto e = rref(aug, tol);
  if (!e.pivots.empty() && e.pivots.back() == a.cols()) return std::nullopt;
  Vec<T> x(a.cols(), ScalarTraits<T>::zero());
  for (std::size_t k = 0; k < e.pivots.size(); ++k) x[e.pivots[k]] = e.reduced(k, a.cols());
  return x;
}

template <class T>
std::optional<Matrix<T>> inverse(const Matrix<T>& a, double tol = 1e-12) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw validation_error("inverse of a non-square matrix");
  Matrix<T> aug(n, 2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
    aug(i, n + i) = ScalarTraits<T>::one();
  }
  const auto e = rref(aug, tol);
  if (e.pivots.size() < n || e.pivots[n - 1] != n - 1) return std::nullopt;
  Matrix<T> inv(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) inv(i, j) = e.reduced(i, n + j);
  return inv;
}

/// Determinant by cofactor expansion for n <= 3, elimination otherwise.
template <class T>
T determinant(const Matrix<T>& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw validation_error("determinant of a non-square matrix");
  if (n == 0) return ScalarTraits<T>::one();
  if (n == 1) return a(0, 0);
  if (n == 2) return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  if (n == 3)
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  Matrix<T> m = a;
  T det = ScalarTraits<T>::one();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    while (p < n && ScalarTraits<T>::is_zero(m(p, c))) ++p;
    if (p == n) return ScalarTraits<T>::zero();
    if (p != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(p, j), m(c, j));
      det = -det;
    }
    det *= m(c, c);
    for (std::size_t i = c + 1; i < n; ++i) {
      const T f = m(i, c) / m(c, c);
      for (std::size_t j = c; j < n; ++j) m(i, j) -= f * m(c, j);
    }
  }
  return det;
}

template <class T>
T dot(const Vec<T>& a, const Vec<T>& b) {
  T s = ScalarTraits<T>::zero();
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class T>
double norm2(const Vec<T>& a) {
  double s = 0;
  for (const auto& x : a) {
    const double d = to_double(x);
    s += d * d;
  }
  return std::sqrt(s);
}

template <class T>
bool is_zero_vec(const Vec<T>& a) {
  for (const auto& x : a)
    if (!ScalarTraits<T>::is_zero(x)) return false;
  return true;
}

template <class T>
Vec<T> axpy(const Vec<T>& x, const T& a, const Vec<T>& y) {  // x + a*y
  Vec<T> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * y[i];
  return out;
}

/// Numeric rank from singular values: count of sigma > tol * max(1, sigma_max).
std::size_t numeric_rank(const Matrix<double>& m, double tol);
/// Orthonormal basis of the numeric nullspace (right singular vectors).
std::vector<Vec<double>> numeric_nullspace(const Matrix<double>& m, double tol);
std::vector<double> singular_values(const Matrix<double>& m);
/// Right singular vectors of the k smallest singular values.
std::vector<Vec<double>> smallest_singular_vectors(const Matrix<double>& m, std::size_t k);

}  // namespace carnot
