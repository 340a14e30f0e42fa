#pragma once

#include <optional>
#include <string>
#include <vector>

#include "carnot/chen_flow.hpp"

namespace carnot {

/// Span of A(t) X_i over t in the control domain and i <= r.
template <class T>
struct DifferentialImage {
  AlgebraPtr alg;
  std::vector<Vec<T>> generators;  // polynomial coefficient vectors of A(t_k) A_k(s) X_i
  std::size_t rank = 0;
  std::vector<Vec<T>> basis;  // echelon basis of the span
  double tol = 0;             // numeric rank threshold (unused for exact scalars)

  /// True when v lies in the span (exactly, or within tol for floats).
  bool contains(const Vec<T>& v) const;
};

template <class T>
DifferentialImage<T> image_of_differential(const AdjointFlow<T>& flow, double tol = 1e-9);
template <class T>
DifferentialImage<T> image_of_differential(const PolyControl<T>& u, AlgebraPtr alg, double tol = 1e-9) {
  return image_of_differential(adjoint_flow(u, std::move(alg)), tol);
}

/// Basis of the annihilator of the image. Exact vectors are denominator-cleared,
/// float vectors have unit norm; in both the first nonzero entry is positive.
template <class T>
std::vector<DualCovector<T>> annihilator(const DifferentialImage<T>& d);

/// M(t)_ij = <lambda, A(t) [X_i, X_j]>, a polynomial in local time on each piece.
template <class T>
struct MomentMatrix {
  AlgebraPtr alg;
  PolyControl<T> u;
  DualCovector<T> lambda;
  std::vector<std::vector<Polynomial<T>>> entries;  // per piece, row-major r x r

  Matrix<T> operator()(const T& t) const {
    const auto [k, s] = u.locate(t);
    return at_local(k, s);
  }
  Matrix<T> at_local(std::size_t k, const T& s) const {
    const int r = alg->rank();
    Matrix<T> m(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) m(i, j) = entries[k][i * r + j](s);
    return m;
  }
};

template <class T>
MomentMatrix<T> moment_matrix(const AdjointFlow<T>& flow, const DualCovector<T>& lambda);
template <class T>
MomentMatrix<T> moment_matrix(const PolyControl<T>& u, const DualCovector<T>& lambda) {
  return moment_matrix(adjoint_flow(u, lambda.algebra()), lambda);
}

/// (1,2) entry of a 2x2 skew-symmetric matrix.
template <class T>
T pfaffian2(const Matrix<T>& m) {
  if (m.rows() != 2 || m.cols() != 2) throw validation_error("pfaffian2 needs a 2x2 matrix");
  if (!ScalarTraits<T>::is_zero(m(0, 0)) || !ScalarTraits<T>::is_zero(m(1, 1)) || m(0, 1) != -m(1, 0))
    throw validation_error("pfaffian2 needs a skew-symmetric matrix");
  return m(0, 1);
}

struct KernelResidual {
  double value = 0;              // max over the grid of |M(t) u(t)|
  bool identically_zero = false;  // exact scalars: M(s) u(s) vanishes as a polynomial on every piece
  bool exact = false;
};

/// Residual of the kernel criterion M(t) u(t) = 0. Exact scalars are decided
/// symbolically; floats are sampled at t = g T/(grid-1).
template <class T>
KernelResidual kernel_residual(const MomentMatrix<T>& m, int grid);
template <class T>
KernelResidual kernel_residual(const PolyControl<T>& u, const DualCovector<T>& lambda, int grid) {
  return kernel_residual(moment_matrix(u, lambda), grid);
}

struct SingularityReport {
  std::string control_id;
  std::size_t dim = 0;
  std::size_t rank = 0;
  std::size_t codim = 0;
  json annihilator = json::array();
  bool goh = true;  // every annihilating covector vanishes on g2
  std::optional<double> residual;
  std::optional<bool> residual_exact_zero;
  std::string mode;  // "exact" or "numeric"
  double tol = 0;

  bool singular() const { return codim > 0; }
  json to_json() const;
};

template <class T>
SingularityReport singularity_report(const PolyControl<T>& u, AlgebraPtr alg,
                                     const std::optional<DualCovector<T>>& lambda = std::nullopt, int grid = 101,
                                     double tol = 1e-9, std::string id = "");

/// Denominator-cleared integer vector with first nonzero entry positive.
Vec<Rational> primitive_integer_vector(const Vec<Rational>& v);

}  // namespace carnot

#include "carnot/singularity_impl.hpp"
