#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "carnot/scalar.hpp"

namespace carnot {

/// Univariate polynomial c[0] + c[1] x + ... with coefficients in T.
/// Trailing zero coefficients are trimmed, so the zero polynomial has no coefficients.
template <class T>
class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<T> coeffs) : c_(std::move(coeffs)) { trim(); }
  static Polynomial constant(const T& v) { return Polynomial(std::vector<T>{v}); }
  static Polynomial monomial(const T& v, std::size_t power) {
    std::vector<T> c(power + 1, ScalarTraits<T>::zero());
    c[power] = v;
    return Polynomial(std::move(c));
  }

  const std::vector<T>& coeffs() const { return c_; }
  bool is_zero() const { return c_.empty(); }
  /// Degree, with -1 for the zero polynomial.
  int degree() const { return static_cast<int>(c_.size()) - 1; }
  T coeff(std::size_t k) const { return k < c_.size() ? c_[k] : ScalarTraits<T>::zero(); }

  T operator()(const T& x) const {
    T acc = ScalarTraits<T>::zero();
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * x + c_[k];
    return acc;
  }

  Polynomial& operator+=(const Polynomial& o) {
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), ScalarTraits<T>::zero());
    for (std::size_t k = 0; k < o.c_.size(); ++k) c_[k] += o.c_[k];
    trim();
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), ScalarTraits<T>::zero());
    for (std::size_t k = 0; k < o.c_.size(); ++k) c_[k] -= o.c_[k];
    trim();
    return *this;
  }
  Polynomial& operator*=(const T& s) {
    for (auto& x : c_) x *= s;
    trim();
    return *this;
  }
  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, const T& s) { return a *= s; }
  friend Polynomial operator*(const T& s, Polynomial a) { return a *= s; }
  friend Polynomial operator-(Polynomial a) { return a *= T(-1); }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.is_zero() || b.is_zero()) return {};
    std::vector<T> c(a.c_.size() + b.c_.size() - 1, ScalarTraits<T>::zero());
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    return Polynomial(std::move(c));
  }
  friend bool operator==(const Polynomial& a, const Polynomial& b) { return a.c_ == b.c_; }

  /// Antiderivative vanishing at 0.
  Polynomial integral() const {
    if (is_zero()) return {};
    std::vector<T> c(c_.size() + 1, ScalarTraits<T>::zero());
    for (std::size_t k = 0; k < c_.size(); ++k) c[k + 1] = c_[k] / T(static_cast<long>(k + 1));
    return Polynomial(std::move(c));
  }
  Polynomial derivative() const {
    if (c_.size() <= 1) return {};
    std::vector<T> c(c_.size() - 1);
    for (std::size_t k = 1; k < c_.size(); ++k) c[k - 1] = c_[k] * T(static_cast<long>(k));
    return Polynomial(std::move(c));
  }
  /// p(x + a), expanded by Horner on the shifted variable.
  Polynomial shifted(const T& a) const {
    Polynomial acc;
    const Polynomial lin(std::vector<T>{a, ScalarTraits<T>::one()});
    for (std::size_t k = c_.size(); k-- > 0;) acc = acc * lin + constant(c_[k]);
    return acc;
  }
  /// p(s x).
  Polynomial scaled(const T& s) const {
    std::vector<T> c = c_;
    T pw = ScalarTraits<T>::one();
    for (auto& x : c) {
      x *= pw;
      pw *= s;
    }
    return Polynomial(std::move(c));
  }
  template <class U>
  Polynomial<U> cast() const {
    std::vector<U> c;
    c.reserve(c_.size());
    for (const auto& x : c_) {
      if constexpr (std::is_same_v<U, double>)
        c.push_back(to_double(x));
      else
        c.push_back(U(x));
    }
    return Polynomial<U>(std::move(c));
  }

 private:
  void trim() {
    while (!c_.empty() && ScalarTraits<T>::is_zero(c_.back())) c_.pop_back();
  }
  std::vector<T> c_;
};

}  // namespace carnot
