#pragma once

// Template definitions for chen_flow.hpp.

namespace carnot {

template <class T>
Matrix<T> scalar_matrix(const Matrix<Rational>& m) {
  if constexpr (ScalarTraits<T>::exact)
    return m;
  else
    return m.template cast<double>();
}

template <class T>
TensorSeries<T> chen_signature(const PolyControl<T>& u, AlgebraPtr alg, const T& t0, const T& t1) {
  if (u.rank() != alg->rank()) throw validation_error("control rank differs from algebra rank");
  if (t1 < t0 || ScalarTraits<T>::sign(t0) < 0 || t1 > u.total())
    throw validation_error("signature interval outside the control domain");
  const int r = alg->rank(), L = alg->step();
  TensorSeries<T> sig = TensorSeries<T>::one(alg);
  T start = ScalarTraits<T>::zero();
  for (const auto& piece : u.pieces()) {
    const T end = start + piece.duration;
    const T a = t0 > start ? t0 : start;
    const T b = t1 < end ? t1 : end;
    if (a < b) {
      const T len = b - a;
      std::vector<Polynomial<T>> ui;
      for (const auto& q : piece.poly) ui.push_back(q.shifted(T(a - start)));
      // iterated integrals as polynomials in local time, then evaluated at len
      std::vector<std::vector<Polynomial<T>>> P(L + 1);
      P[0] = {Polynomial<T>::constant(ScalarTraits<T>::one())};
      TensorSeries<T> ps(alg);
      ps[0][0] = ScalarTraits<T>::one();
      for (int k = 1; k <= L; ++k) {
        P[k].resize(P[k - 1].size() * r);
        for (std::size_t w = 0; w < P[k - 1].size(); ++w)
          for (int i = 0; i < r; ++i) {
            P[k][w * r + i] = (P[k - 1][w] * ui[i]).integral();
            ps[k][w * r + i] = P[k][w * r + i](len);
          }
      }
      sig = sig * ps;
    }
    start = end;
  }
  return sig;
}

template <class T>
GroupElement<T> log_to_group(const TensorSeries<T>& s) {
  const auto& alg = s.algebra();
  const T& c0 = s[0][0];
  if constexpr (ScalarTraits<T>::exact) {
    if (c0 != 1) throw validation_error("series is not group-like: empty-word coefficient differs from 1");
  } else {
    if (std::fabs(c0 - 1.0) > 1e-12) throw validation_error("series is not group-like: empty-word coefficient differs from 1");
  }
  const int L = s.level();
  TensorSeries<T> x = s;
  x[0][0] = ScalarTraits<T>::zero();
  TensorSeries<T> log(alg), power = x;
  for (int n = 1; n <= L; ++n) {
    TensorSeries<T> term = power;
    term *= T((n % 2 ? 1 : -1)) / T(n);
    log += term;
    if (n < L) power = power * x;
  }
  const auto& cover = alg->cover();
  Vec<T> cc(cover.dim(), ScalarTraits<T>::zero());
  for (int k = 1; k <= L; ++k) {
    auto layer = cover.template tensor_to_layer<T>(k, log[k]);
    if (!layer) throw validation_error("series is not group-like: its logarithm is not a Lie element");
    const std::size_t off = cover.layer_offset(k);
    for (std::size_t i = 0; i < layer->size(); ++i) cc[off + i] = (*layer)[i];
  }
  if (alg->is_own_cover()) return GroupElement<T>(alg, std::move(cc));
  return GroupElement<T>(alg, scalar_matrix<T>(alg->projection()) * cc);
}

template <class T>
TensorSeries<T> exp_series(const LieVector<T>& xv) {
  const auto& alg = xv.algebra();
  const auto& cover = alg->cover();
  const Vec<T> cc = alg->is_own_cover() ? xv.coords() : scalar_matrix<T>(alg->section()) * xv.coords();
  TensorSeries<T> x(alg);
  for (std::size_t i = 0; i < cc.size(); ++i) {
    if (ScalarTraits<T>::is_zero(cc[i])) continue;
    const auto& t = cover.tensor_of(i);
    auto& lv = x[cover.layer_of(i)];
    for (std::size_t w = 0; w < t.size(); ++w)
      if (!ScalarTraits<Rational>::is_zero(t[w])) lv[w] += cc[i] * ScalarTraits<T>::from_rational(t[w]);
  }
  TensorSeries<T> out = TensorSeries<T>::one(alg), power = x;
  T fact = ScalarTraits<T>::one();
  for (int n = 1; n <= x.level(); ++n) {
    fact *= T(n);
    TensorSeries<T> term = power;
    term *= ScalarTraits<T>::one() / fact;
    out += term;
    if (n < x.level()) power = power * x;
  }
  return out;
}

template <class T>
AdjointFlow<T> adjoint_flow(const PolyControl<T>& u, AlgebraPtr alg) {
  if (u.rank() != alg->rank()) throw validation_error("control rank differs from algebra rank");
  const std::size_t n = alg->dim();
  const int r = alg->rank();
  AdjointFlow<T> f{alg, u, {Matrix<T>::identity(n)}, {}};
  for (const auto& piece : u.pieces()) {
    MatPoly<T> total{{Matrix<T>::identity(n)}};
    MatPoly<T> prev = total;
    for (int j = 1; j < alg->step(); ++j) {
      std::size_t deg = 0;
      for (const auto& q : piece.poly) deg = std::max<std::size_t>(deg, q.coeffs().size());
      std::vector<Matrix<T>> prod(prev.c.size() + deg, Matrix<T>(n, n));
      for (std::size_t m = 0; m < prev.c.size(); ++m) {
        if (prev.c[m].is_zero()) continue;
        for (int i = 0; i < r; ++i) {
          const auto& q = piece.poly[i].coeffs();
          if (q.empty()) continue;
          const Matrix<T> ba = prev.c[m] * alg->template ad<T>(i);
          for (std::size_t p = 0; p < q.size(); ++p) prod[m + p] += ba * q[p];
        }
      }
      MatPoly<T> next{std::vector<Matrix<T>>(prod.size() + 1, Matrix<T>(n, n))};
      for (std::size_t q = 0; q < prod.size(); ++q) next.c[q + 1] = prod[q] * (ScalarTraits<T>::one() / T(long(q + 1)));
      if (next.c.size() > total.c.size()) total.c.resize(next.c.size(), Matrix<T>(n, n));
      for (std::size_t q = 0; q < next.c.size(); ++q) total.c[q] += next.c[q];
      prev = std::move(next);
    }
    while (total.c.size() > 1 && total.c.back().is_zero()) total.c.pop_back();
    f.at_break.push_back(f.at_break.back() * total(piece.duration));
    f.piece.push_back(std::move(total));
  }
  return f;
}

}  // namespace carnot
