#include "carnot/strata.hpp"

#include <cmath>
#include <functional>
#include <numbers>

#include "carnot/parallel.hpp"

namespace carnot {

namespace {

template <class T>
using ST = ScalarTraits<T>;

template <class T>
T num(long a, long b = 1) {
  if constexpr (ST<T>::exact) {
    Rational q(a, b);
    q.canonicalize();
    return q;
  } else {
    return static_cast<double>(a) / static_cast<double>(b);
  }
}

template <class T>
double max_abs(const Matrix<T>& m) {
  double s = 0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s = std::max(s, std::fabs(to_double(m(i, j))));
  return s;
}

template <class T>
double max_abs(const Vec<T>& v) {
  double s = 0;
  for (const auto& x : v) s = std::max(s, std::fabs(to_double(x)));
  return s;
}

Error inconsistent(const std::string& what) { return {ErrorKind::Inconsistent, what}; }

/// Thrown internally when a normal form would need an irrational number.
struct Irrational {};

template <class T>
T sqrt_or_throw(const T& x) {
  if constexpr (ST<T>::exact) {
    auto r = exact_sqrt(x);
    if (!r) throw Irrational{};
    return *r;
  } else {
    return std::sqrt(std::max(x, 0.0));
  }
}

double newton_polish(double t, double p, double q) {
  for (int i = 0; i < 3; ++i) {
    const double f = t * t * t + p * t + q, d = 3 * t * t + p;
    if (d == 0) break;
    t -= f / d;
  }
  return t;
}

/// Real roots of t^3 + p t + q, ascending: three when the discriminant is positive, else one.
std::vector<double> depressed_cubic_roots(double p, double q) {
  const double disc = -4 * p * p * p - 27 * q * q;
  std::vector<double> out;
  if (disc > 0 && p < 0) {
    const double m = 2 * std::sqrt(-p / 3);
    const double arg = std::clamp(3 * q / (p * m), -1.0, 1.0);
    const double th = std::acos(arg) / 3;
    for (int k = 0; k < 3; ++k) out.push_back(newton_polish(m * std::cos(th - 2 * std::numbers::pi * k / 3), p, q));
  } else {
    const double D = std::sqrt(std::max(q * q / 4 + p * p * p / 27, 0.0));
    out.push_back(newton_polish(std::cbrt(-q / 2 + D) + std::cbrt(-q / 2 - D), p, q));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<Rational> rational_root(double x, const Rational& p, const Rational& q) {
  Rational r = rationalize(x);
  r.canonicalize();
  if (r * r * r + p * r + q == 0) return r;
  return std::nullopt;
}

template <class T>
T root_as(double x, const T& p, const T& q) {
  if constexpr (ST<T>::exact) {
    auto r = rational_root(x, p, q);
    if (!r) throw Irrational{};
    return *r;
  } else {
    (void)p;
    (void)q;
    return x;
  }
}

template <class T>
Matrix<T> shifted(const Matrix<T>& m, const T& mu) {
  Matrix<T> a = m;
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, i) -= mu;
  return a;
}

template <class T>
Vec<T> normalized_column(Vec<T> v) {
  if constexpr (ST<T>::exact) {
    return primitive_integer_vector(v);
  } else {
    const double n = norm2(v);
    if (n == 0) return v;
    for (auto& x : v) x /= n;
    for (const auto& x : v)
      if (std::fabs(x) > 1e-12) {
        if (x < 0)
          for (auto& y : v) y = -y;
        break;
      }
    return v;
  }
}

/// Deterministic basis of a kernel of known dimension k: echelon rows, columns normalized.
template <class T>
std::vector<Vec<T>> kernel_basis(const Matrix<T>& a, std::size_t k, double tol) {
  std::vector<Vec<T>> raw;
  if constexpr (ST<T>::exact) {
    (void)tol;
    raw = nullspace(a);
    if (raw.size() != k)
      throw inconsistent("kernel of dimension " + std::to_string(raw.size()) + " where the stratum requires " +
                         std::to_string(k));
  } else {
    raw = smallest_singular_vectors(a, k);
  }
  auto e = rref(Matrix<T>::from_rows(raw, a.cols()), tol);
  std::vector<Vec<T>> out;
  for (std::size_t i = 0; i < e.pivots.size(); ++i) out.push_back(normalized_column(e.reduced.row(i)));
  if (out.size() != k) throw inconsistent("degenerate kernel basis");
  return out;
}

/// First vector of `basis` not sent to zero by `a`.
template <class T>
Vec<T> first_outside_kernel(const std::vector<Vec<T>>& basis, const Matrix<T>& a) {
  if constexpr (ST<T>::exact) {
    for (const auto& e : basis)
      if (!is_zero_vec(a * e)) return e;
  } else {
    double best = 0;
    for (const auto& e : basis) best = std::max(best, norm2(a * e));
    for (const auto& e : basis)
      if (best > 0 && norm2(a * e) > 1e-6 * best) return e;
  }
  throw inconsistent("no vector outside the kernel; the matrix is smaller than its stratum requires");
}

template <class T>
Matrix<T> diag(std::initializer_list<T> d) {
  Matrix<T> m(d.size(), d.size());
  std::size_t i = 0;
  for (const auto& x : d) {
    m(i, i) = x;
    ++i;
  }
  return m;
}

template <class T>
Vec<T> scaled(Vec<T> v, const T& s) {
  for (auto& x : v) x *= s;
  return v;
}

/// Sum of principal 2x2 minors: the linear coefficient p of the trace-free characteristic polynomial.
template <class T>
T second_invariant(const Matrix<T>& m) {
  return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0) + m(1, 1) * m(2, 2) -
         m(1, 2) * m(2, 1);
}

struct R3Roots {
  double a, b, m;  // a, b share sign with |a| > |b|; m = -(a + b)
};

R3Roots order_three_roots(std::vector<double> r) {
  // exactly two roots share a sign; the odd one out is m
  int pos = 0;
  for (double x : r) pos += x > 0;
  std::vector<double> same;
  double m = 0;
  for (double x : r) ((pos == 2) == (x > 0) ? same.push_back(x) : void(m = x));
  if (same.size() != 2) throw inconsistent("three real eigenvalues without a same-sign pair");
  if (std::fabs(same[0]) < std::fabs(same[1])) std::swap(same[0], same[1]);
  return {same[0], same[1], m};
}

template <class T>
std::optional<NormalizedSystem<T>> try_normalize(const AffineSystem<T>& a, const StratumLabel& label, double tol) {
  const int r = a.tag.rank();
  const auto& M = a.M;
  NormalizedSystem<T> ns;
  ns.label = label;
  ns.M = M;
  ns.v = a.v;
  T c = ST<T>::one();
  std::vector<Vec<T>> cols;
  Matrix<T> N(r, r);
  auto identity_cols = [&] {
    for (int i = 0; i < r; ++i) cols.push_back(Matrix<T>::identity(r).col(i));
  };
  try {
    if (a.tag.kind != CaseKind::R3S3) {
      const T d = determinant(M);
      switch (label.major) {
        case 1: {
          const T mu = sqrt_or_throw(T(-d));
          c = mu;
          N = diag<T>({num<T>(1), num<T>(-1)});
          cols.push_back(kernel_basis(shifted(M, mu), 1, tol)[0]);
          cols.push_back(kernel_basis(shifted(M, T(-mu)), 1, tol)[0]);
          break;
        }
        case 2: {
          const T beta = sqrt_or_throw(d);
          c = beta;
          N(0, 1) = num<T>(-1);
          N(1, 0) = num<T>(1);
          auto x = kernel_basis(shifted(M * M, T(-d)), 2, tol)[0];
          cols.push_back(x);
          cols.push_back(scaled(M * x, T(ST<T>::one() / beta)));
          break;
        }
        case 3: {
          N(0, 1) = num<T>(1);
          auto top = first_outside_kernel(kernel_basis(M * M, 2, tol), M);
          cols.push_back(M * top);
          cols.push_back(top);
          break;
        }
        default:
          identity_cols();
      }
    } else {
      const T p = second_invariant(M);
      const T q = -determinant(M);
      const double pd = to_double(p), qd = to_double(q);
      switch (label.major) {
        case 1: {
          const auto o = order_three_roots(depressed_cubic_roots(pd, qd));
          const T ea = root_as(o.a, p, q), eb = root_as(o.b, p, q);
          const T em = -(ea + eb);
          N = diag<T>({ea, eb, em});
          ns.params = {ea, eb};
          for (const T& mu : {ea, eb, em}) cols.push_back(kernel_basis(shifted(M, mu), 1, tol)[0]);
          break;
        }
        case 2: {
          const T ea = num<T>(-3) * q / (num<T>(2) * p);
          N = diag<T>({ea, ea, T(num<T>(-2) * ea)});
          ns.params = {ea};
          for (auto& x : kernel_basis(shifted(M, ea), 2, tol)) cols.push_back(x);
          cols.push_back(kernel_basis(shifted(M, T(num<T>(-2) * ea)), 1, tol)[0]);
          break;
        }
        case 3: {
          const T mu3 = root_as(depressed_cubic_roots(pd, qd).front(), p, q);
          const T alpha = -mu3 / num<T>(2);
          const T beta2 = p + num<T>(3) * alpha * alpha;
          const T beta = sqrt_or_throw(beta2);
          c = alpha;
          const T av = beta / alpha;
          N(0, 0) = N(1, 1) = num<T>(1);
          N(0, 1) = -av;
          N(1, 0) = av;
          N(2, 2) = num<T>(-2);
          ns.params = {av};
          const Matrix<T> A = shifted(M, alpha);
          auto x = kernel_basis(shifted(A * A, T(-beta2)), 2, tol)[0];
          cols.push_back(x);
          cols.push_back(scaled(A * x, T(ST<T>::one() / beta)));
          cols.push_back(kernel_basis(shifted(M, mu3), 1, tol)[0]);
          break;
        }
        case 4: {
          const T mu = num<T>(-3) * q / (num<T>(2) * p);
          c = mu;
          N(0, 0) = N(1, 1) = N(0, 1) = num<T>(1);
          N(2, 2) = num<T>(-2);
          const Matrix<T> A = shifted(M, mu);
          auto top = first_outside_kernel(kernel_basis(A * A, 2, tol), A);
          cols.push_back(scaled(A * top, T(ST<T>::one() / mu)));
          cols.push_back(top);
          cols.push_back(kernel_basis(shifted(M, T(num<T>(-2) * mu)), 1, tol)[0]);
          break;
        }
        case 5: {
          const T mu = sqrt_or_throw(T(-p));
          c = mu;
          N = diag<T>({num<T>(1), num<T>(-1), num<T>(0)});
          cols.push_back(kernel_basis(shifted(M, mu), 1, tol)[0]);
          cols.push_back(kernel_basis(shifted(M, T(-mu)), 1, tol)[0]);
          cols.push_back(kernel_basis(M, 1, tol)[0]);
          break;
        }
        case 6: {
          const T beta = sqrt_or_throw(p);
          c = beta;
          N(0, 1) = num<T>(-1);
          N(1, 0) = num<T>(1);
          auto x = kernel_basis(shifted(M * M, T(-p)), 2, tol)[0];
          cols.push_back(x);
          cols.push_back(scaled(M * x, T(ST<T>::one() / beta)));
          cols.push_back(kernel_basis(M, 1, tol)[0]);
          break;
        }
        case 7: {
          N(0, 1) = N(1, 2) = num<T>(1);
          const Matrix<T> M2 = M * M;
          auto top = first_outside_kernel(kernel_basis(M2 * M, 3, tol), M2);
          cols.push_back(M2 * top);
          cols.push_back(M * top);
          cols.push_back(top);
          break;
        }
        case 8: {
          N(0, 1) = num<T>(1);
          auto top = first_outside_kernel(kernel_basis(M * M, 3, tol), M);
          const Vec<T> p1 = M * top;
          Vec<T> p3;
          for (const auto& k : kernel_basis(M, 2, tol)) {
            if (rank(Matrix<T>::from_columns({p1, k}, 3), tol) == 2) {
              p3 = k;
              break;
            }
          }
          if (p3.empty()) throw inconsistent("rank-one stratum without a second kernel direction");
          cols = {p1, top, p3};
          break;
        }
        default:
          identity_cols();
      }
    }
  } catch (const Irrational&) {
    return std::nullopt;
  }
  ns.N = N;
  ns.time_scale = c;
  ns.P = Matrix<T>::from_columns(cols, r);
  auto inv = inverse(ns.P, tol);
  if (!inv) throw inconsistent("singular change of basis for stratum " + label.text());
  ns.Pinv = *inv;
  ns.b = scaled(ns.Pinv * a.v, T(ST<T>::one() / c));
  const double def = ns.defect();
  if constexpr (ST<T>::exact) {
    if (def != 0) throw inconsistent("normal form does not reproduce M for stratum " + label.text());
  } else {
    if (def > 1e-9 * std::max(1.0, max_abs(M)))
      throw inconsistent("normal form defect " + std::to_string(def) + " for stratum " + label.text());
  }
  return ns;
}

/// Xi memberships from zero tests on groups of normal coordinates.
std::vector<int> xi_of(CaseKind kind, int major, const std::function<bool(std::vector<int>)>& z) {
  std::vector<int> xi;
  auto add = [&](bool cond, int idx) {
    if (cond) xi.push_back(idx);
  };
  if (kind == CaseKind::R2S4) {
    switch (major) {
      case 1:
        add(!z({0}) && !z({1}), 1);
        add(z({0}), 2);
        add(z({1}), 3);
        break;
      case 2:
        add(z({0, 1}), 4);
        add(!z({0}), 5);
        add(!z({1}), 6);
        break;
      case 3:
        add(!z({1}), 7);
        add(z({1}) && !z({0}), 8);
        add(z({0, 1}), 9);
        break;
      default:
        break;
    }
  } else if (kind == CaseKind::R3S3) {
    switch (major) {
      case 1:
        add(!z({0, 1}) && !z({2}), 1);
        add(z({2}), 2);
        add(z({0, 1}), 3);
        break;
      case 3:
        add(!z({0, 1}) && !z({2}), 4);
        add(z({0, 1}), 5);
        add(z({2}), 6);
        break;
      case 5:
        add(!z({2}), 7);
        add(z({2}) && !z({0}) && !z({1}), 8);
        add(z({2}) && z({0}), 9);
        add(z({2}) && z({1}), 10);
        break;
      case 6:
        add(!z({2}), 11);
        add(!z({0}) && z({2}), 12);
        add(!z({1}) && z({2}), 13);
        add(z({0, 1, 2}), 14);
        break;
      case 7:
        add(!z({2}), 15);
        add(z({2}) && !z({0}), 16);
        add(z({2}) && !z({1}), 17);
        add(z({0, 1, 2}), 18);
        break;
      case 8:
        add(!z({1}), 19);
        add(!z({2}), 20);
        add(z({1}) && z({2}) && !z({0}), 21);
        add(z({0, 1, 2}), 22);
        break;
      default:
        break;
    }
  }
  return xi;
}

Vec<Rational> poly_matrix_apply(const Polynomial<Rational>& f, const Matrix<Rational>& m, const Vec<Rational>& v) {
  Vec<Rational> acc(v.size(), Rational(0));
  Vec<Rational> pw = v;
  for (std::size_t k = 0; k < f.coeffs().size(); ++k) {
    acc = axpy(acc, f.coeffs()[k], pw);
    pw = m * pw;
  }
  return acc;
}

/// Divides f by (t - rho), assuming rho is a root.
Polynomial<Rational> divide_linear(const Polynomial<Rational>& f, const Rational& rho) {
  const auto& c = f.coeffs();
  if (c.size() < 2) return Polynomial<Rational>();
  std::vector<Rational> out(c.size() - 1);
  Rational carry = 0;
  for (std::size_t k = c.size() - 1; k >= 1; --k) {
    carry = c[k] + carry * rho;
    out[k - 1] = carry;
  }
  return Polynomial<Rational>(out);
}

/// Exact Xi tests when the eigenvalues are not all rational. A normal coordinate
/// group vanishes iff v has no component in the matching invariant subspace; the
/// subspace is enlarged to its Galois closure so the test polynomial is rational.
class InvariantTests {
 public:
  InvariantTests(const AffineSystem<Rational>& a, int major) : a_(a), major_(major) {
    const auto& M = a.M;
    if (a.tag.kind == CaseKind::R2S4) {
      chi_ = Polynomial<Rational>({determinant(M), Rational(0), Rational(1)});
      if (major == 1) eig_ = {std::nullopt, std::nullopt};
      if (major == 2) rotation_basis(Rational(0), determinant(M), {});
      return;
    }
    p_ = second_invariant(M);
    const Rational q = -determinant(M);
    chi_ = Polynomial<Rational>({q, p_, Rational(0), Rational(1)});
    const double pd = p_.get_d(), qd = q.get_d();
    switch (major) {
      case 1: {
        const auto o = order_three_roots(depressed_cubic_roots(pd, qd));
        for (double x : {o.a, o.b, o.m}) eig_.push_back(rational_root(x, p_, q));
        break;
      }
      case 3: {
        const auto mu3 = rational_root(depressed_cubic_roots(pd, qd).front(), p_, q);
        eig_ = {std::nullopt, std::nullopt, mu3};
        break;
      }
      case 5:
        eig_ = {std::nullopt, std::nullopt, Rational(0)};
        break;
      case 6:
        rotation_basis(Rational(0), p_, kernel_basis(M, 1, 0)[0]);
        break;
      default:
        throw inconsistent("stratum " + std::to_string(major) + " always has a rational normal form");
    }
  }

  bool zero(const std::vector<int>& s) const {
    if (!q_coords_.empty()) {
      for (int i : s)
        if (sgn(q_coords_[i]) != 0) return false;
      return true;
    }
    const std::size_t n = eig_.size();
    std::vector<bool> in(n, false);
    bool irr = false;
    for (int i : s) {
      in[i] = true;
      irr = irr || !eig_[i];
    }
    if (irr)
      for (std::size_t j = 0; j < n; ++j)
        if (!eig_[j]) in[j] = true;
    // f = product over the complementary eigenvalues
    Polynomial<Rational> f = Polynomial<Rational>::constant(Rational(1));
    bool irr_outside = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (in[j]) continue;
      if (eig_[j])
        f = f * Polynomial<Rational>({-*eig_[j], Rational(1)});
      else
        irr_outside = true;
    }
    if (irr_outside) {
      Polynomial<Rational> g = chi_;
      for (std::size_t j = 0; j < n; ++j)
        if (eig_[j]) g = divide_linear(g, *eig_[j]);
      f = f * g;
    }
    return is_zero_vec(poly_matrix_apply(f, a_.M, a_.v));
  }

 private:
  /// Coordinates of v in the rational basis x, (M - alpha) x [, k] of the rotation normal form.
  void rotation_basis(const Rational& alpha, const Rational& beta2, const Vec<Rational>& k) {
    const Matrix<Rational> A = shifted(a_.M, alpha);
    const auto x = kernel_basis(shifted(A * A, Rational(-beta2)), 2, 0)[0];
    std::vector<Vec<Rational>> cols{x, A * x};
    if (!k.empty()) cols.push_back(k);
    auto sol = solve(Matrix<Rational>::from_columns(cols, x.size()), a_.v);
    if (!sol) throw inconsistent("rotation basis is not a basis");
    q_coords_ = *sol;
  }

  const AffineSystem<Rational>& a_;
  int major_;
  Rational p_;
  Polynomial<Rational> chi_;
  std::vector<std::optional<Rational>> eig_;
  Vec<Rational> q_coords_;
};

template <class T>
int sign_with(const T& x, double thr, bool& near) {
  if constexpr (ST<T>::exact) {
    (void)thr;
    (void)near;
    return sgn(x);
  } else {
    if (std::fabs(x) <= thr) {
      if (x != 0) near = true;
      return 0;
    }
    return x > 0 ? 1 : -1;
  }
}

template <class T>
int major_of(const AffineSystem<T>& a, double tol, bool& near) {
  if (a.tag.kind == CaseKind::R2S3) return 0;
  const auto& M = a.M;
  const double s = 1.0;  // doubles arrive scaled to unit max entry
  const bool m_zero = [&] {
    if constexpr (ST<T>::exact)
      return M.is_zero();
    else {
      const double mx = max_abs(M);
      if (mx <= tol * s) {
        if (mx != 0) near = true;
        return true;
      }
      return false;
    }
  }();
  if (a.tag.kind == CaseKind::R2S4) {
    if (m_zero) return 4;
    const int sd = sign_with(determinant(M), tol, near);
    return sd < 0 ? 1 : sd > 0 ? 2 : 3;
  }
  if (m_zero) return 9;
  const T d = determinant(M);
  const T p = second_invariant(M);
  if (sign_with(d, tol, near) != 0) {
    const T q = -d;
    const T disc = num<T>(-4) * p * p * p - num<T>(27) * q * q;
    const int sd = sign_with(disc, tol, near);
    if (sd > 0) return 1;
    if (sd < 0) return 3;
    const T ea = num<T>(-3) * q / (num<T>(2) * p);
    return rank(shifted(M, ea), tol) == 1 ? 2 : 4;
  }
  const std::size_t rk = rank(M, tol);
  if (rk <= 1) return 8;
  const int sp = sign_with(p, tol, near);
  return sp < 0 ? 5 : sp > 0 ? 6 : 7;
}

template <class T>
AffineSystem<T> unit_scaled(const AffineSystem<T>& a) {
  if constexpr (ST<T>::exact) {
    return a;
  } else {
    const double s = std::max(max_abs(a.M), max_abs(a.v));
    if (s == 0) return a;
    AffineSystem<T> out = a;
    for (std::size_t i = 0; i < out.M.rows(); ++i)
      for (std::size_t j = 0; j < out.M.cols(); ++j) out.M(i, j) /= s;
    for (auto& x : out.v) x /= s;
    return out;
  }
}

}  // namespace

std::string CaseTag::name() const {
  switch (kind) {
    case CaseKind::R2S3:
      return "r2s3";
    case CaseKind::R2S4:
      return "r2s4";
    case CaseKind::R3S3:
      return free ? "r3s3-free" : "r3s3";
  }
  return "";
}

CaseTag CaseTag::of(const GradedAlgebra& alg) {
  CaseTag t;
  t.free = alg.is_free();
  if (alg.rank() == 2 && alg.step() == 3)
    t.kind = CaseKind::R2S3;
  else if (alg.rank() == 2 && alg.step() == 4)
    t.kind = CaseKind::R2S4;
  else if (alg.rank() == 3 && alg.step() == 3)
    t.kind = CaseKind::R3S3;
  else
    throw validation_error("no stratification for rank " + std::to_string(alg.rank()) + " step " +
                           std::to_string(alg.step()) + "; supported: (2,3), (2,4), (3,3)");
  return t;
}

CaseTag CaseTag::parse(std::string_view name) {
  if (name == "r2s3") return {CaseKind::R2S3, false};
  if (name == "r2s4") return {CaseKind::R2S4, false};
  if (name == "r3s3") return {CaseKind::R3S3, false};
  if (name == "r3s3-free") return {CaseKind::R3S3, true};
  throw validation_error("unknown case '" + std::string(name) + "'; expected r2s3, r2s4, r3s3 or r3s3-free");
}

std::string StratumLabel::text() const {
  if (major == 0) return "line";
  std::string s = "L" + std::to_string(major);
  if (minor) s += "/X" + std::to_string(*minor);
  return s;
}

json StratumLabel::to_json() const {
  json j;
  j["case"] = tag.name();
  j["Lambda"] = major;
  j["Xi"] = minor ? json(*minor) : json(nullptr);
  j["Xi_all"] = xi;
  j["near_boundary"] = near_boundary;
  return j;
}

template <class T>
AffineSystem<T> system_of(const DualCovector<T>& l, const CaseTag& tag) {
  const auto& alg = *l.algebra();
  if (alg.rank() != tag.rank() || alg.step() != tag.step())
    throw validation_error("algebra of rank " + std::to_string(alg.rank()) + " step " + std::to_string(alg.step()) +
                           " does not match case " + tag.name());
  l.require_zero_layer(1);
  if (tag.rank() == 2) l.require_zero_layer(2);
  const int r = tag.rank();
  AffineSystem<T> a{tag, Matrix<T>(r, r), Vec<T>(r, ST<T>::zero()), l};
  auto L = [&](const char* w) { return l.value(w); };
  switch (tag.kind) {
    case CaseKind::R2S3:
      a.v = {L("212"), -L("112")};
      break;
    case CaseKind::R2S4:
      a.M = Matrix<T>{{L("2112"), L("2212")}, {-L("1112"), -L("2112")}};
      a.v = {L("212"), -L("112")};
      break;
    case CaseKind::R3S3:
      a.M = Matrix<T>{{L("123"), L("223"), L("323")}, {L("131"), L("231"), L("331")}, {L("112"), L("212"), L("312")}};
      a.v = {L("23"), L("31"), L("12")};
      break;
  }
  return a;
}

template <class T>
StratumLabel classify(const AffineSystem<T>& a0, double tol) {
  const AffineSystem<T> a = unit_scaled(a0);
  StratumLabel label;
  label.tag = a.tag;
  bool near = false;
  label.major = major_of(a, tol, near);
  std::function<bool(std::vector<int>)> zero;
  std::optional<NormalizedSystem<T>> ns;
  std::optional<InvariantTests> inv;
  const bool needs_xi = label.major != 0 && !xi_of(a.tag.kind, label.major, [](auto) { return true; }).empty();
  if (needs_xi) {
    ns = try_normalize(a, label, tol);
    if (ns) {
      const double thr = tol * std::max(1.0, max_abs(ns->b));
      zero = [&](std::vector<int> s) {
        for (int i : s)
          if (sign_with(ns->b[i], thr, near) != 0) return false;
        return true;
      };
    } else {
      if constexpr (ST<T>::exact) {
        inv.emplace(a, label.major);
        zero = [&](std::vector<int> s) { return inv->zero(s); };
      } else {
        throw inconsistent("numeric normal form failed");
      }
    }
    label.xi = xi_of(a.tag.kind, label.major, zero);
    if (!label.xi.empty()) label.minor = label.xi.front();
  }
  label.near_boundary = near;
  return label;
}

std::vector<StratumLabel> classify_batch(const std::vector<DualCovector<Rational>>& lambdas, const CaseTag& tag) {
  return parallel_map(lambdas, [&](const DualCovector<Rational>& l) { return classify(l, tag); });
}

template <class T>
double NormalizedSystem<T>::defect() const {
  Matrix<T> recon = P * N * Pinv;
  double d = 0;
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j) d = std::max(d, std::fabs(to_double(T(time_scale * recon(i, j) - M(i, j)))));
  return d;
}

template <class T>
json matrix_to_json(const Matrix<T>& m) {
  json j = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) j.push_back(vec_to_json(m.row(i)));
  return j;
}

template <class T>
json vec_to_json(const Vec<T>& v) {
  json j = json::array();
  for (const auto& x : v) {
    if constexpr (ST<T>::exact)
      j.push_back(format_rational(x));
    else
      j.push_back(x);
  }
  return j;
}

template <class T>
json NormalizedSystem<T>::to_json() const {
  json j;
  j["N"] = matrix_to_json(N);
  j["P"] = matrix_to_json(P);
  j["b"] = vec_to_json(b);
  j["time_scale"] = vec_to_json(Vec<T>{time_scale});
  j["time_scale"] = j["time_scale"][0];
  j["params"] = vec_to_json(params);
  j["exact"] = ST<T>::exact;
  return j;
}

bool exactly_normalizable(const AffineSystem<Rational>& a, const StratumLabel& label) {
  return try_normalize(a, label, 0).has_value();
}

template <class T>
NormalizedSystem<T> normalize(const AffineSystem<T>& a, const StratumLabel& label, double tol) {
  auto ns = try_normalize(a, label, tol);
  if (!ns)
    throw validation_error("the normal form of stratum " + label.text() +
                           " needs irrational numbers for this covector; use numeric mode");
  return *ns;
}

NormalizedSystem<double> normalize_numeric(const AffineSystem<Rational>& a, const StratumLabel& label, double tol) {
  AffineSystem<double> d{a.tag, a.M.template cast<double>(), {}, covector_cast<double>(a.lambda)};
  for (const auto& x : a.v) d.v.push_back(x.get_d());
  return normalize(d, label, tol);
}

template <class T>
bool EquilibriumSet<T>::contains(const Vec<T>& z, double tol) const {
  if (kind == Kind::None) return false;
  Vec<T> d = z;
  for (std::size_t i = 0; i < d.size(); ++i) d[i] -= point[i];
  auto cols = directions;
  cols.push_back(d);
  if constexpr (ST<T>::exact) {
    return rank(Matrix<T>::from_columns(cols, d.size())) == directions.size();
  } else {
    // distance from the affine set, by least squares on the orthonormalized directions
    Vec<T> res = d;
    auto basis = directions;
    for (std::size_t k = 0; k < basis.size(); ++k) {
      for (std::size_t m = 0; m < k; ++m) basis[k] = axpy(basis[k], -dot(basis[k], basis[m]), basis[m]);
      const double n = norm2(basis[k]);
      for (auto& x : basis[k]) x /= n;
      res = axpy(res, -dot(res, basis[k]), basis[k]);
    }
    return norm2(res) <= tol * std::max(1.0, norm2(z));
  }
}

template <class T>
json EquilibriumSet<T>::to_json() const {
  static const char* names[] = {"none", "point", "line", "plane", "space"};
  json j;
  j["kind"] = names[static_cast<int>(kind)];
  if (kind != Kind::None) {
    j["point"] = vec_to_json(point);
    j["directions"] = json::array();
    for (const auto& d : directions) j["directions"].push_back(vec_to_json(d));
  }
  return j;
}

template <class T>
EquilibriumSet<T> equilibria(const NormalizedSystem<T>& ns) {
  EquilibriumSet<T> e;
  Vec<T> rhs = ns.b;
  for (auto& x : rhs) x = -x;
  auto sol = solve(ns.N, rhs, 1e-12);
  if (!sol) return e;
  e.point = *sol;
  e.directions = nullspace(ns.N, 1e-12);
  e.kind = static_cast<typename EquilibriumSet<T>::Kind>(1 + e.directions.size());
  return e;
}

ClosedFormTrajectory trajectory(const NormalizedSystem<double>& ns, Vec<double> z0) {
  if (static_cast<int>(z0.size()) != ns.dim()) throw validation_error("initial point has the wrong dimension");
  return {ns, std::move(z0)};
}

Vec<double> ClosedFormTrajectory::operator()(double t) const {
  const auto& b = ns.b;
  const auto& z = z0;
  const int L = ns.label.major;
  using std::cos;
  using std::exp;
  using std::sin;
  if (ns.label.tag.kind != CaseKind::R3S3) {
    switch (L) {
      case 1:
        return {(exp(t) - 1) * b[0] + exp(t) * z[0], -(exp(-t) - 1) * b[1] + exp(-t) * z[1]};
      case 2: {
        const double A = b[1] + z[0], B = z[1] - b[0];
        return {A * cos(t) - B * sin(t) - b[1], A * sin(t) + B * cos(t) + b[0]};
      }
      case 3:
        return {b[1] * t * t / 2 + (b[0] + z[1]) * t + z[0], b[1] * t + z[1]};
      default:
        return {z[0] + b[0] * t, z[1] + b[1] * t};
    }
  }
  switch (L) {
    case 1:
    case 2: {
      const double A = ns.params[0], B = L == 1 ? ns.params[1] : ns.params[0], S = A + B;
      return {(exp(A * t) - 1) / A * b[0] + exp(A * t) * z[0], (exp(B * t) - 1) / B * b[1] + exp(B * t) * z[1],
              -(exp(-S * t) - 1) / S * b[2] + exp(-S * t) * z[2]};
    }
    case 3: {
      const double a = ns.params[0], w = 1 + a * a;
      const double al = b[0] + a * b[1] + w * z[0];
      const double be = -a * b[0] + b[1] + w * z[1];
      const double E = exp(t), C = cos(a * t), S = sin(a * t);
      return {E * (al * C - be * S) / w - (b[0] + a * b[1]) / w, E * (al * S + be * C) / w - (-a * b[0] + b[1]) / w,
              0.5 * exp(-2 * t) * (-b[2] + 2 * z[2]) + b[2] / 2};
    }
    case 4: {
      const double E = exp(t);
      return {(E - 1) * b[0] + E * (t - 1) * b[1] + b[1] + E * (z[0] + t * z[1]), (E - 1) * b[1] + E * z[1],
              -(exp(-2 * t) - 1) / 2 * b[2] + exp(-2 * t) * z[2]};
    }
    case 5:
      return {(exp(t) - 1) * b[0] + exp(t) * z[0], -(exp(-t) - 1) * b[1] + exp(-t) * z[1], b[2] * t + z[2]};
    case 6: {
      const double A = b[1] + z[0], B = z[1] - b[0];
      return {A * cos(t) - B * sin(t) - b[1], B * cos(t) + A * sin(t) + b[0], b[2] * t + z[2]};
    }
    case 7:
      return {z[0] + (b[0] + z[1]) * t + (b[1] + z[2]) * t * t / 2 + b[2] * t * t * t / 6,
              z[1] + (b[1] + z[2]) * t + b[2] * t * t / 2, z[2] + b[2] * t};
    case 8:
      return {z[0] + (b[0] + z[1]) * t + b[1] * t * t / 2, z[1] + b[1] * t, z[2] + b[2] * t};
    default:
      return {z[0] + b[0] * t, z[1] + b[1] * t, z[2] + b[2] * t};
  }
}

Vec<double> ClosedFormTrajectory::velocity(double t) const {
  auto z = (*this)(t);
  auto v = ns.N * z;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += ns.b[i];
  return v;
}

std::optional<Vec<double>> ClosedFormTrajectory::limit(int dir, double tol) const {
  const int n = ns.dim();
  std::vector<int> R, Z;
  for (int i = 0; i < n; ++i) (ns.N(i, i) != 0 ? R : Z).push_back(i);
  Vec<double> out = z0;
  const double scale = std::max({1.0, max_abs(z0), max_abs(ns.b)});
  if (!R.empty()) {
    Matrix<double> NR(R.size(), R.size());
    Vec<double> bR;
    for (std::size_t i = 0; i < R.size(); ++i) {
      for (std::size_t j = 0; j < R.size(); ++j) NR(i, j) = ns.N(R[i], R[j]);
      bR.push_back(-ns.b[R[i]]);
    }
    auto star = solve(NR, bR, 1e-14);
    if (!star) return std::nullopt;
    for (std::size_t i = 0; i < R.size(); ++i) {
      const int k = R[i];
      if (ns.N(k, k) * dir > 0 && std::fabs(z0[k] - (*star)[i]) > tol * scale) return std::nullopt;
      out[k] = (*star)[i];
    }
  }
  for (int k : Z) {
    double vel = ns.b[k];
    for (int j = 0; j < n; ++j) vel += ns.N(k, j) * z0[j];
    if (std::fabs(vel) > tol * scale) return std::nullopt;
  }
  return out;
}

template <class T>
bool polynomial_stratum(const NormalizedSystem<T>& ns) {
  Matrix<T> p = ns.N;
  for (int k = 1; k < ns.dim(); ++k) p = p * ns.N;
  if constexpr (ST<T>::exact)
    return p.is_zero();
  else
    return max_abs(p) <= 1e-12;
}

template <class T>
std::vector<Polynomial<T>> polynomial_velocity(const NormalizedSystem<T>& ns, const Vec<T>& z0) {
  if (!polynomial_stratum(ns)) throw validation_error("polynomial trajectories need a nilpotent normal form");
  const int n = ns.dim();
  Vec<T> w = ns.N * z0;
  for (int i = 0; i < n; ++i) w[i] += ns.b[i];
  std::vector<std::vector<T>> coeff(n);
  T fact = ST<T>::one();
  for (int k = 0; k < n; ++k) {
    if (k > 0) fact *= num<T>(k);
    for (int i = 0; i < n; ++i) coeff[i].push_back(w[i] / fact);
    w = ns.N * w;
  }
  std::vector<Polynomial<T>> out;
  for (auto& c : coeff) out.emplace_back(std::move(c));
  return out;
}

namespace {

template <class T>
struct PathBuilder {
  const NormalizedSystem<T>& ns;
  std::vector<ControlPiece<T>> pieces;
  Vec<T> z;
  ConcatenatedPath<T> out;

  explicit PathBuilder(const NormalizedSystem<T>& n) : ns(n), z(n.dim(), ST<T>::zero()) {}

  bool is_equilibrium(const Vec<T>& p) const {
    auto r = ns.N * p;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += ns.b[i];
    if constexpr (ST<T>::exact)
      return is_zero_vec(r);
    else
      return max_abs(r) <= 1e-9 * std::max({1.0, max_abs(p), max_abs(ns.b)});
  }

  void segment(const Vec<T>& to, const T& duration) {
    if (ST<T>::sign(duration) <= 0) throw validation_error("non-positive leg duration");
    ControlPiece<T> piece{duration, {}};
    bool moves = false;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const T vel = (to[i] - z[i]) / duration;
      moves = moves || !ST<T>::is_zero(vel);
      piece.poly.push_back(Polynomial<T>::constant(vel));
    }
    if (moves) pieces.push_back(std::move(piece));
    z = to;
  }

  void polynomial_leg(const T& tau) {
    auto vel = polynomial_velocity(ns, z);
    const bool back = ST<T>::sign(tau) < 0;
    const T d = back ? T(-tau) : tau;
    ControlPiece<T> piece{d, {}};
    for (std::size_t i = 0; i < z.size(); ++i) {
      Polynomial<T> q = back ? Polynomial<T>(-vel[i].scaled(T(-1))) : vel[i];
      z[i] += q.integral()(d);
      piece.poly.push_back(std::move(q));
    }
    pieces.push_back(std::move(piece));
  }

  void switch_here() {
    if (!is_equilibrium(z)) throw validation_error("switch requested at a non-equilibrium point");
    out.switch_points.push_back(z);
  }
};

}  // namespace

template <class T>
ConcatenatedPath<T> concatenate(const NormalizedSystem<T>& ns, const ConcatenationPlan<T>& plan) {
  PathBuilder<T> pb(ns);
  const bool poly = polynomial_stratum(ns);
  if constexpr (ST<T>::exact) {
    if (!poly) throw validation_error("exact concatenation needs a nilpotent normal form; use numeric mode");
  }
  const double h = plan.step;
  if (h <= 0) throw validation_error("sampling step must be positive");
  for (const auto& leg : plan.legs) {
    switch (leg.kind) {
      case LegKind::Flow: {
        if (ST<T>::is_zero(leg.duration)) throw validation_error("flow leg of zero duration");
        if (poly) {
          pb.polynomial_leg(leg.duration);
        } else if constexpr (!ST<T>::exact) {
          const auto tr = trajectory(ns, pb.z);
          const int n = std::max(1, static_cast<int>(std::ceil(std::fabs(leg.duration) / h - 1e-9)));
          for (int k = 1; k <= n; ++k) pb.segment(tr(leg.duration * k / n), std::fabs(leg.duration) / n);
          pb.out.sampled = true;
        }
        break;
      }
      case LegKind::Approach: {
        if (pb.is_equilibrium(pb.z)) break;
        if constexpr (ST<T>::exact) {
          throw validation_error("asymptotic leg requested where the trajectory does not approach an equilibrium");
        } else {
          const auto tr = trajectory(ns, pb.z);
          const auto lim = tr.limit(leg.direction);
          if (!lim) throw validation_error("asymptotic leg requested where the trajectory does not approach an equilibrium");
          const double scale = std::max(1.0, max_abs(*lim));
          double tau = 0;
          while (std::fabs(tau) < plan.horizon) {
            tau += leg.direction * h;
            pb.segment(tr(tau), h);
            if (norm2(axpy(pb.z, -1.0, *lim)) <= plan.tail_tol * scale) break;
          }
          const double gap = norm2(axpy(pb.z, -1.0, *lim));
          pb.out.tail_bound = std::max(pb.out.tail_bound, gap);
          pb.segment(*lim, h);
          pb.out.sampled = true;
        }
        break;
      }
      case LegKind::Depart: {
        pb.switch_here();
        if constexpr (ST<T>::exact) {
          throw validation_error("departing legs exist only for exponential strata; use numeric mode");
        } else {
          const auto tr = trajectory(ns, leg.point);
          const auto lim = tr.limit(leg.direction);
          if (!lim || norm2(axpy(*lim, -1.0, pb.z)) > 1e-9 * std::max(1.0, max_abs(pb.z)))
            throw validation_error("departing curve does not emanate from the current equilibrium");
          const double scale = std::max(1.0, max_abs(pb.z));
          double ts = 0;
          while (std::fabs(ts) < plan.horizon && norm2(axpy(tr(ts), -1.0, pb.z)) > plan.tail_tol * scale)
            ts += leg.direction * h;
          if ((leg.duration - ts) * leg.direction > 0)
            throw validation_error("departing leg ends before it leaves the equilibrium");
          pb.out.tail_bound = std::max(pb.out.tail_bound, norm2(axpy(tr(ts), -1.0, pb.z)));
          pb.segment(tr(ts), h);
          const double span = std::fabs(leg.duration - ts);
          const int n = std::max(1, static_cast<int>(std::ceil(span / h - 1e-9)));
          for (int k = 1; k <= n; ++k) pb.segment(tr(ts + (leg.duration - ts) * k / n), span / n);
          pb.out.sampled = true;
        }
        break;
      }
      case LegKind::Along: {
        pb.switch_here();
        if (!pb.is_equilibrium(leg.point)) throw validation_error("target of a leg along equilibria is not an equilibrium");
        if constexpr (ST<T>::exact) {
          pb.segment(leg.point, ST<T>::one());
        } else {
          const double len = norm2(axpy(leg.point, -1.0, pb.z));
          if (len > 0) pb.segment(leg.point, len);
        }
        break;
      }
    }
  }
  if (pb.pieces.empty()) throw validation_error("concatenation plan produced an empty path");
  auto& out = pb.out;
  out.length = to_double(PolyControl<T>(ns.dim(), pb.pieces).total());
  out.z_control = PolyControl<T>(ns.dim(), pb.pieces).rescaled(ST<T>::one());
  std::vector<ControlPiece<T>> xs;
  for (const auto& piece : out.z_control.pieces()) {
    ControlPiece<T> q{piece.duration, {}};
    for (int i = 0; i < ns.dim(); ++i) {
      Polynomial<T> acc;
      for (int j = 0; j < ns.dim(); ++j)
        if (!ST<T>::is_zero(ns.P(i, j))) acc = acc + piece.poly[j] * ns.P(i, j);
      q.poly.push_back(std::move(acc));
    }
    xs.push_back(std::move(q));
  }
  out.control = PolyControl<T>(ns.dim(), std::move(xs));
  return out;
}

namespace {

template <class T>
T plan_scalar(const json& v, const char* what) {
  Rational q;
  if (v.is_string() && !ST<T>::exact) {
    // float plans also take decimals
    const auto text = v.get<std::string>();
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == text.size() && used > 0 && text.find('/') == std::string::npos) return T(x);
    q = parse_rational(text);
  } else if (v.is_string()) {
    q = parse_rational(v.get<std::string>());
  } else if (v.is_number_integer()) {
    q = Rational(v.get<long>());
  } else if (v.is_number() && !ST<T>::exact) {
    return T(v.get<double>());
  } else {
    throw validation_error(std::string("plan ") + what + " must be a \"p/q\" string or an integer");
  }
  if constexpr (ST<T>::exact)
    return q;
  else
    return q.get_d();
}

template <class T>
Vec<T> plan_point(const json& v, int dim, const char* what) {
  if (!v.is_array() || static_cast<int>(v.size()) != dim)
    throw validation_error(std::string("plan ") + what + " must be an array of " + std::to_string(dim) + " numbers");
  Vec<T> p;
  for (const auto& x : v) p.push_back(plan_scalar<T>(x, what));
  return p;
}

int plan_direction(const json& v) {
  if (!v.is_number_integer() || (v.get<int>() != 1 && v.get<int>() != -1))
    throw validation_error("plan direction must be 1 or -1");
  return v.get<int>();
}

}  // namespace

template <class T>
ConcatenationPlan<T> plan_from_json(const json& j, int dim) {
  if (!j.is_object() || !j.contains("legs") || !j["legs"].is_array())
    throw validation_error("plan file must be an object with a \"legs\" array");
  ConcatenationPlan<T> plan;
  for (const auto& leg : j["legs"]) {
    if (leg.contains("flow")) {
      plan.legs.push_back(PlanLeg<T>::flow(plan_scalar<T>(leg["flow"], "flow duration")));
    } else if (leg.contains("approach")) {
      plan.legs.push_back(PlanLeg<T>::approach(plan_direction(leg["approach"])));
    } else if (leg.contains("depart")) {
      if (!leg.contains("direction") || !leg.contains("until"))
        throw validation_error("departing leg needs \"direction\" and \"until\"");
      plan.legs.push_back(PlanLeg<T>::depart(plan_point<T>(leg["depart"], dim, "departure point"),
                                             plan_direction(leg["direction"]), plan_scalar<T>(leg["until"], "until")));
    } else if (leg.contains("along")) {
      plan.legs.push_back(PlanLeg<T>::along(plan_point<T>(leg["along"], dim, "target")));
    } else {
      throw validation_error("plan leg must be one of flow, approach, depart, along");
    }
  }
  if (j.contains("step")) plan.step = j["step"].get<double>();
  if (j.contains("horizon")) plan.horizon = j["horizon"].get<double>();
  if (j.contains("tail_tol")) plan.tail_tol = j["tail_tol"].get<double>();
  return plan;
}

template ConcatenationPlan<Rational> plan_from_json(const json&, int);
template ConcatenationPlan<double> plan_from_json(const json&, int);

template <class T>
LiftedPath<T> lift(const ConcatenatedPath<T>& path, AlgebraPtr alg) {
  if (alg->rank() != path.control.rank())
    throw validation_error("frame of rank " + std::to_string(path.control.rank()) + " does not match algebra of rank " +
                           std::to_string(alg->rank()));
  LiftedPath<T> lp;
  lp.alg = alg;
  lp.control = path.control;
  lp.times = path.control.breakpoints();
  lp.tail_bound = path.tail_bound;
  auto g = GroupElement<T>::zero(alg);
  lp.points.push_back(g);
  for (const auto& piece : path.control.pieces()) {
    g = group_product(g, endpoint(PolyControl<T>(alg->rank(), {piece}), alg));
    lp.points.push_back(g);
  }
  return lp;
}

template AffineSystem<Rational> system_of(const DualCovector<Rational>&, const CaseTag&);
template AffineSystem<double> system_of(const DualCovector<double>&, const CaseTag&);
template StratumLabel classify(const AffineSystem<Rational>&, double);
template StratumLabel classify(const AffineSystem<double>&, double);
template struct NormalizedSystem<Rational>;
template struct NormalizedSystem<double>;
template NormalizedSystem<Rational> normalize(const AffineSystem<Rational>&, const StratumLabel&, double);
template NormalizedSystem<double> normalize(const AffineSystem<double>&, const StratumLabel&, double);
template struct EquilibriumSet<Rational>;
template struct EquilibriumSet<double>;
template EquilibriumSet<Rational> equilibria(const NormalizedSystem<Rational>&);
template EquilibriumSet<double> equilibria(const NormalizedSystem<double>&);
template bool polynomial_stratum(const NormalizedSystem<Rational>&);
template bool polynomial_stratum(const NormalizedSystem<double>&);
template std::vector<Polynomial<Rational>> polynomial_velocity(const NormalizedSystem<Rational>&, const Vec<Rational>&);
template std::vector<Polynomial<double>> polynomial_velocity(const NormalizedSystem<double>&, const Vec<double>&);
template ConcatenatedPath<Rational> concatenate(const NormalizedSystem<Rational>&, const ConcatenationPlan<Rational>&);
template ConcatenatedPath<double> concatenate(const NormalizedSystem<double>&, const ConcatenationPlan<double>&);
template LiftedPath<Rational> lift(const ConcatenatedPath<Rational>&, AlgebraPtr);
template LiftedPath<double> lift(const ConcatenatedPath<double>&, AlgebraPtr);
template json matrix_to_json(const Matrix<Rational>&);
template json matrix_to_json(const Matrix<double>&);
template json vec_to_json(const Vec<Rational>&);
template json vec_to_json(const Vec<double>&);

}  // namespace carnot
