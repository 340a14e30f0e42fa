#pragma once

// Template definitions for singularity.hpp.

namespace carnot {

template <class T>
bool DifferentialImage<T>::contains(const Vec<T>& v) const {
  auto rows = basis;
  rows.push_back(v);
  const auto m = Matrix<T>::from_rows(rows, alg->dim());
  if constexpr (ScalarTraits<T>::exact)
    return carnot::rank(m) == rank;
  else
    return numeric_rank(m, tol) == rank;
}

template <class T>
DifferentialImage<T> image_of_differential(const AdjointFlow<T>& flow, double tol) {
  const auto& alg = flow.alg;
  const std::size_t n = alg->dim();
  DifferentialImage<T> d{alg, {}, 0, {}, tol};
  for (std::size_t k = 0; k < flow.piece.size(); ++k)
    for (const auto& c : flow.piece[k].c) {
      const Matrix<T> m = flow.at_break[k] * c;
      for (int i = 0; i < alg->rank(); ++i) {
        auto v = m.col(i);
        if (!is_zero_vec(v)) d.generators.push_back(std::move(v));
      }
    }
  if (d.generators.empty()) return d;
  const auto g = Matrix<T>::from_rows(d.generators, n);
  if constexpr (ScalarTraits<T>::exact) {
    const auto e = rref(g);
    d.rank = e.pivots.size();
    for (std::size_t i = 0; i < d.rank; ++i) d.basis.push_back(e.reduced.row(i));
  } else {
    d.rank = numeric_rank(g, tol);
    // orthonormal row-space basis: the complement of the numeric nullspace
    const auto null = numeric_nullspace(g, tol);
    if (null.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        Vec<double> e(n, 0.0);
        e[i] = 1;
        d.basis.push_back(e);
      }
    } else {
      for (auto& v : numeric_nullspace(Matrix<double>::from_rows(null, n), 1e-12)) d.basis.push_back(v);
    }
  }
  return d;
}

template <class T>
std::vector<DualCovector<T>> annihilator(const DifferentialImage<T>& d) {
  const auto& alg = d.alg;
  const std::size_t n = alg->dim();
  std::vector<DualCovector<T>> out;
  // A(t) X_i at t = 0 is always a generator, so the list is never empty
  const auto g = Matrix<T>::from_rows(d.generators, n);
  if constexpr (ScalarTraits<T>::exact) {
    // canonical representative of the subspace: reduced echelon rows, then cleared denominators
    const auto null = nullspace(g);
    if (null.empty()) return out;
    const auto e = rref(Matrix<T>::from_rows(null, n));
    for (std::size_t i = 0; i < e.pivots.size(); ++i) out.emplace_back(alg, primitive_integer_vector(e.reduced.row(i)));
  } else {
    auto null = numeric_nullspace(g, d.tol);
    if (null.empty()) return out;
    // canonical representative of the subspace: reduced echelon rows, then unit norm
    const auto e = rref(Matrix<double>::from_rows(null, n), 1e-10);
    for (std::size_t i = 0; i < e.pivots.size(); ++i) {
      auto v = e.reduced.row(i);
      const double nv = norm2(v);
      for (auto& x : v) x /= nv;
      for (double x : v)
        if (std::fabs(x) > 1e-14) {
          if (x < 0)
            for (auto& y : v) y = -y;
          break;
        }
      out.emplace_back(alg, std::move(v));
    }
  }
  return out;
}

template <class T>
MomentMatrix<T> moment_matrix(const AdjointFlow<T>& flow, const DualCovector<T>& lambda) {
  const auto& alg = flow.alg;
  if (lambda.algebra() != alg) throw validation_error("covector and control flow use different algebras");
  const int r = alg->rank();
  const std::size_t n = alg->dim();
  std::vector<Vec<T>> brackets;  // [X_i, X_j], row-major
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      Vec<T> ei(n, ScalarTraits<T>::zero()), ej(n, ScalarTraits<T>::zero());
      ei[i] = ScalarTraits<T>::one();
      ej[j] = ScalarTraits<T>::one();
      brackets.push_back(alg->bracket(ei, ej));
    }
  MomentMatrix<T> mm{alg, flow.u, lambda, {}};
  const auto lt = Matrix<T>::from_rows({lambda.coords()}, n);
  for (std::size_t k = 0; k < flow.piece.size(); ++k) {
    const Matrix<T> mu = lt * flow.at_break[k];
    std::vector<std::vector<T>> coeffs(r * r);
    for (const auto& c : flow.piece[k].c) {
      const auto row = (mu * c).row(0);
      for (int ij = 0; ij < r * r; ++ij) coeffs[ij].push_back(dot(row, brackets[ij]));
    }
    std::vector<Polynomial<T>> entries;
    for (auto& c : coeffs) entries.emplace_back(std::move(c));
    mm.entries.push_back(std::move(entries));
  }
  return mm;
}

template <class T>
KernelResidual kernel_residual(const MomentMatrix<T>& m, int grid) {
  if (grid < 2) throw validation_error("kernel_residual needs grid >= 2");
  const int r = m.alg->rank();
  KernelResidual res;
  res.exact = ScalarTraits<T>::exact;
  const auto& pieces = m.u.pieces();
  if constexpr (ScalarTraits<T>::exact) {
    bool zero = true;
    for (std::size_t k = 0; k < pieces.size() && zero; ++k)
      for (int i = 0; i < r && zero; ++i) {
        Polynomial<T> acc;
        for (int j = 0; j < r; ++j) acc += m.entries[k][i * r + j] * pieces[k].poly[j];
        zero = acc.is_zero();
      }
    if (zero) {
      res.identically_zero = true;
      return res;
    }
  }
  auto eval_at = [&](std::size_t k, const T& s) {
    const auto mat = m.at_local(k, s);
    Vec<T> u;
    for (const auto& q : pieces[k].poly) u.push_back(q(s));
    return norm2(mat * u);
  };
  const T total = m.u.total();
  for (int g = 0; g < grid; ++g) {
    const T t = total * T(g) / T(grid - 1);
    const auto [k, s] = m.u.locate(t);
    res.value = std::max(res.value, eval_at(k, s));
  }
  if constexpr (ScalarTraits<T>::exact) {
    // a nonzero polynomial may vanish on the grid; midpoints keep the value positive
    for (std::size_t k = 0; k < pieces.size() && res.value == 0; ++k)
      for (int q = 1; q < 8; ++q) res.value = std::max(res.value, eval_at(k, pieces[k].duration * T(q) / T(8)));
  }
  return res;
}

template <class T>
SingularityReport singularity_report(const PolyControl<T>& u, AlgebraPtr alg, const std::optional<DualCovector<T>>& lambda,
                                     int grid, double tol, std::string id) {
  const auto flow = adjoint_flow(u, alg);
  const auto img = image_of_differential(flow, tol);
  SingularityReport rep;
  rep.control_id = std::move(id);
  rep.dim = alg->dim();
  rep.rank = img.rank;
  rep.codim = alg->dim() - img.rank;
  rep.mode = ScalarTraits<T>::name();
  rep.tol = ScalarTraits<T>::exact ? 0.0 : tol;
  for (const auto& l : annihilator(img)) {
    rep.annihilator.push_back(coords_to_json(*alg, l.coords()));
    if (alg->step() >= 2) {
      for (std::size_t i = alg->layer_offset(2); i < alg->layer_offset(2) + alg->layer_dims()[1]; ++i)
        if (ScalarTraits<T>::exact ? !ScalarTraits<T>::is_zero(l[i]) : std::fabs(to_double(l[i])) > tol) rep.goh = false;
    }
  }
  if (lambda) {
    const auto kr = kernel_residual(moment_matrix(flow, *lambda), grid);
    rep.residual = kr.value;
    if (kr.exact) rep.residual_exact_zero = kr.identically_zero;
  }
  return rep;
}

}  // namespace carnot
