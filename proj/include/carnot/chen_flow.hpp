#pragma once

#include <cstddef>
#include <vector>

#include "carnot/free_lie.hpp"
#include "carnot/polynomial.hpp"

namespace carnot {

template <class T>
struct ControlPiece {
  T duration;
  std::vector<Polynomial<T>> poly;  // one per component, in local time s in [0, duration]
};

/// Piecewise-polynomial control u : [0, total] -> R^r.
template <class T>
class PolyControl {
 public:
  PolyControl() = default;
  PolyControl(int rank, std::vector<ControlPiece<T>> pieces) : rank_(rank), pieces_(std::move(pieces)) {
    for (const auto& p : pieces_) {
      if (ScalarTraits<T>::sign(p.duration) <= 0) throw validation_error("control piece durations must be positive");
      if (static_cast<int>(p.poly.size()) != rank_)
        throw validation_error("control piece has " + std::to_string(p.poly.size()) + " components, expected " +
                               std::to_string(rank_));
    }
  }
  /// Constant velocity `v` for `duration`.
  static PolyControl constant(const Vec<T>& v, const T& duration) {
    std::vector<Polynomial<T>> poly;
    for (const auto& x : v) poly.push_back(Polynomial<T>::constant(x));
    return PolyControl(static_cast<int>(v.size()), {ControlPiece<T>{duration, std::move(poly)}});
  }

  int rank() const { return rank_; }
  const std::vector<ControlPiece<T>>& pieces() const { return pieces_; }
  T total() const {
    T s = ScalarTraits<T>::zero();
    for (const auto& p : pieces_) s += p.duration;
    return s;
  }
  std::vector<T> breakpoints() const {
    std::vector<T> b{ScalarTraits<T>::zero()};
    for (const auto& p : pieces_) b.push_back(b.back() + p.duration);
    return b;
  }
  int max_degree() const {
    int d = -1;
    for (const auto& p : pieces_)
      for (const auto& q : p.poly) d = std::max(d, q.degree());
    return d;
  }
  /// Piece index containing t (right-continuous; the end point belongs to the last piece) and local time.
  std::pair<std::size_t, T> locate(const T& t) const {
    if (pieces_.empty()) throw validation_error("empty control");
    T start = ScalarTraits<T>::zero();
    if (ScalarTraits<T>::sign(t) < 0) throw validation_error("time outside the control domain");
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      const T end = start + pieces_[k].duration;
      if (t < end || k + 1 == pieces_.size()) {
        if (t > end) throw validation_error("time outside the control domain");
        return {k, t - start};
      }
      start = end;
    }
    return {pieces_.size() - 1, pieces_.back().duration};
  }
  Vec<T> operator()(const T& t) const {
    const auto [k, s] = locate(t);
    Vec<T> out;
    for (const auto& q : pieces_[k].poly) out.push_back(q(s));
    return out;
  }

  /// Time reversal with sign flip: the control that retraces the path backwards.
  PolyControl reversed() const {
    std::vector<ControlPiece<T>> out;
    for (auto it = pieces_.rbegin(); it != pieces_.rend(); ++it) {
      ControlPiece<T> p{it->duration, {}};
      // local time sigma maps to s = d - sigma
      for (const auto& q : it->poly) p.poly.push_back(-q.scaled(T(-1)).shifted(-it->duration));
      out.push_back(std::move(p));
    }
    return PolyControl(rank_, std::move(out));
  }
  PolyControl then(const PolyControl& o) const {
    if (o.rank_ != rank_) throw validation_error("concatenating controls of different rank");
    auto pieces = pieces_;
    pieces.insert(pieces.end(), o.pieces_.begin(), o.pieces_.end());
    return PolyControl(rank_, std::move(pieces));
  }
  /// Same path traversed over total duration `new_total` (velocity rescaled).
  PolyControl rescaled(const T& new_total) const {
    const T c = total() / new_total;  // new time tau = t / c
    std::vector<ControlPiece<T>> out;
    for (const auto& p : pieces_) {
      ControlPiece<T> q{p.duration / c, {}};
      for (const auto& x : p.poly) q.poly.push_back(x.scaled(c) * c);
      out.push_back(std::move(q));
    }
    return PolyControl(rank_, std::move(out));
  }
  template <class U>
  PolyControl<U> cast() const {
    std::vector<ControlPiece<U>> out;
    for (const auto& p : pieces_) {
      ControlPiece<U> q;
      if constexpr (std::is_same_v<U, double>)
        q.duration = to_double(p.duration);
      else
        q.duration = U(p.duration);
      for (const auto& x : p.poly) q.poly.push_back(x.template cast<U>());
      out.push_back(std::move(q));
    }
    return PolyControl<U>(rank_, std::move(out));
  }

 private:
  int rank_ = 0;
  std::vector<ControlPiece<T>> pieces_;
};

/// Primitive w(t) = integral of u from 0 to t, with the same pieces as the control.
template <class T>
class Primitive {
 public:
  Primitive() = default;
  /// Pieces hold w(t_k + s) as polynomials in local time s.
  Primitive(int rank, std::vector<ControlPiece<T>> pieces) : rank_(rank), pieces_(std::move(pieces)) {}
  static Primitive of(const PolyControl<T>& u) {
    std::vector<ControlPiece<T>> out;
    Vec<T> base(u.rank(), ScalarTraits<T>::zero());
    for (const auto& p : u.pieces()) {
      ControlPiece<T> q{p.duration, {}};
      for (int i = 0; i < u.rank(); ++i) {
        auto w = p.poly[i].integral() + Polynomial<T>::constant(base[i]);
        base[i] = w(p.duration);
        q.poly.push_back(std::move(w));
      }
      out.push_back(std::move(q));
    }
    return Primitive(u.rank(), std::move(out));
  }
  int rank() const { return rank_; }
  const std::vector<ControlPiece<T>>& pieces() const { return pieces_; }
  PolyControl<T> control() const {
    std::vector<ControlPiece<T>> out;
    for (const auto& p : pieces_) {
      ControlPiece<T> q{p.duration, {}};
      for (const auto& w : p.poly) q.poly.push_back(w.derivative());
      out.push_back(std::move(q));
    }
    return PolyControl<T>(rank_, std::move(out));
  }
  Vec<T> operator()(const T& t) const { return PolyControl<T>(rank_, pieces_)(t); }
  T total() const { return PolyControl<T>(rank_, pieces_).total(); }
  /// Largest jump of w across a breakpoint (zero for a continuous primitive).
  double max_jump() const {
    double worst = 0;
    for (std::size_t k = 0; k + 1 < pieces_.size(); ++k)
      for (int i = 0; i < rank_; ++i) {
        const T a = pieces_[k].poly[i](pieces_[k].duration), b = pieces_[k + 1].poly[i](T(0));
        worst = std::max(worst, std::fabs(to_double(T(a - b))));
      }
    return worst;
  }

 private:
  int rank_ = 0;
  std::vector<ControlPiece<T>> pieces_;
};

/// Truncated tensor series: coefficient per word of length 0..level over r letters.
/// Words of length k are indexed in base r (first letter most significant).
template <class T>
class TensorSeries {
 public:
  TensorSeries() = default;
  TensorSeries(AlgebraPtr alg) : alg_(std::move(alg)) {
    std::size_t w = 1;
    for (int k = 0; k <= alg_->step(); ++k) {
      lv_.emplace_back(w, ScalarTraits<T>::zero());
      w *= alg_->rank();
    }
  }
  static TensorSeries one(AlgebraPtr alg) {
    TensorSeries s(std::move(alg));
    s.lv_[0][0] = ScalarTraits<T>::one();
    return s;
  }
  const AlgebraPtr& algebra() const { return alg_; }
  int level() const { return alg_->step(); }
  int rank() const { return alg_->rank(); }
  Vec<T>& operator[](int k) { return lv_[k]; }
  const Vec<T>& operator[](int k) const { return lv_[k]; }
  /// Coefficient of a word given as letters 1..r.
  const T& coeff(const std::vector<int>& word) const {
    std::size_t idx = 0;
    for (int a : word) idx = idx * rank() + (a - 1);
    return lv_[word.size()][idx];
  }
  const T& coeff(std::string_view word) const {
    std::vector<int> w;
    for (char c : word) w.push_back(c - '0');
    return coeff(w);
  }

  friend TensorSeries operator*(const TensorSeries& a, const TensorSeries& b) {
    if (a.alg_ != b.alg_) throw validation_error("tensor series over different algebras");
    TensorSeries c(a.alg_);
    const int L = a.level();
    std::vector<std::size_t> width{1};
    for (int k = 1; k <= L; ++k) width.push_back(width.back() * a.rank());
    for (int i = 0; i <= L; ++i)
      for (int j = 0; i + j <= L; ++j) {
        const auto& x = a.lv_[i];
        const auto& y = b.lv_[j];
        auto& z = c.lv_[i + j];
        for (std::size_t p = 0; p < x.size(); ++p) {
          if (ScalarTraits<T>::is_zero(x[p])) continue;
          for (std::size_t q = 0; q < y.size(); ++q) {
            if (ScalarTraits<T>::is_zero(y[q])) continue;
            z[p * width[j] + q] += x[p] * y[q];
          }
        }
      }
    return c;
  }
  TensorSeries& operator+=(const TensorSeries& o) {
    for (std::size_t k = 0; k < lv_.size(); ++k)
      for (std::size_t i = 0; i < lv_[k].size(); ++i) lv_[k][i] += o.lv_[k][i];
    return *this;
  }
  TensorSeries& operator*=(const T& s) {
    for (auto& l : lv_)
      for (auto& x : l) x *= s;
    return *this;
  }
  friend bool operator==(const TensorSeries& a, const TensorSeries& b) { return a.alg_ == b.alg_ && a.lv_ == b.lv_; }

 private:
  AlgebraPtr alg_;
  std::vector<Vec<T>> lv_;
};

template <class T>
using GroupElement = LieVector<T>;

/// Signature of u restricted to [t0, t1]: coefficient of word i1..ik is the iterated
/// integral of u_i1(t1') ... u_ik(tk') over t0 < t1' < ... < tk' < t1.
template <class T>
TensorSeries<T> chen_signature(const PolyControl<T>& u, AlgebraPtr alg, const T& t0, const T& t1);
template <class T>
TensorSeries<T> chen_signature(const PolyControl<T>& u, AlgebraPtr alg) {
  return chen_signature(u, std::move(alg), T(0), u.total());
}

/// Truncated logarithm of a group-like series, in exponential coordinates of the first kind.
template <class T>
GroupElement<T> log_to_group(const TensorSeries<T>& s);
/// Truncated exponential of a Lie element.
template <class T>
TensorSeries<T> exp_series(const LieVector<T>& x);

template <class T>
GroupElement<T> group_product(const GroupElement<T>& g, const GroupElement<T>& h) {
  g.same(h);
  return log_to_group(exp_series(g) * exp_series(h));
}
template <class T>
GroupElement<T> group_inverse(const GroupElement<T>& g) {
  return -g;
}

/// gamma_u(total) starting from the identity.
template <class T>
GroupElement<T> endpoint(const PolyControl<T>& u, AlgebraPtr alg) {
  return log_to_group(chen_signature(u, std::move(alg)));
}

/// Polynomial with matrix coefficients.
template <class T>
struct MatPoly {
  std::vector<Matrix<T>> c;
  Matrix<T> operator()(const T& s) const {
    Matrix<T> acc = c.back();
    for (std::size_t k = c.size() - 1; k-- > 0;) {
      acc *= s;
      acc += c[k];
    }
    return acc;
  }
};

/// The adjoint flow A(t) = Ad(gamma_u(t)), solving A' = A ad X_u(t), A(0) = Id.
/// On piece k with local time s, A = at_break[k] * piece[k](s).
template <class T>
struct AdjointFlow {
  AlgebraPtr alg;
  PolyControl<T> u;
  std::vector<Matrix<T>> at_break;
  std::vector<MatPoly<T>> piece;

  Matrix<T> operator()(const T& t) const {
    const auto [k, s] = u.locate(t);
    return at_break[k] * piece[k](s);
  }
};

template <class T>
AdjointFlow<T> adjoint_flow(const PolyControl<T>& u, AlgebraPtr alg);
template <class T>
Matrix<T> adjoint_flow(const PolyControl<T>& u, AlgebraPtr alg, const T& t) {
  return adjoint_flow(u, std::move(alg))(t);
}

/// Control file {pieces:[{duration:"p/q", poly:[[c0,c1,...] per component]}]}.
PolyControl<Rational> control_from_json(const json& j);
json control_to_json(const PolyControl<Rational>& u);
json group_to_json(const GroupElement<Rational>& g);

}  // namespace carnot

#include "carnot/chen_flow_impl.hpp"
