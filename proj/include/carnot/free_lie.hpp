#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carnot/matrix.hpp"
#include "carnot/scalar.hpp"
#include "json.hpp"

namespace carnot {

using json = nlohmann::json;

/// Binary bracket tree over generator letters 1..r.
///
/// Text form: a word is a sequence of items, an item is a digit or a
/// parenthesised word, and x1 x2 ... xk stands for [x1,[x2,...[x(k-1),xk]]].
/// So "(12)(112)" is [[X1,X2],[X1,[X1,X2]]].
class BracketWord {
 public:
  BracketWord() = default;
  static BracketWord leaf(int letter);
  static BracketWord node(BracketWord left, BracketWord right);
  /// Throws a validation error on bad syntax or a letter above max_letter (0 = unchecked).
  static BracketWord parse(std::string_view text, int max_letter = 0);

  bool is_leaf() const { return !left_; }
  int letter() const { return letter_; }
  const BracketWord& left() const { return *left_; }
  const BracketWord& right() const { return *right_; }
  int degree() const { return degree_; }
  int max_letter() const;
  std::string text() const;

  friend bool operator==(const BracketWord& a, const BracketWord& b);

 private:
  int letter_ = 0;
  int degree_ = 0;
  std::shared_ptr<const BracketWord> left_, right_;
};

struct AlgebraOptions {
  std::size_t max_dim = 64;
};

/// Witt's necklace count: dimension of layer k of the free Lie algebra on r letters.
std::size_t witt_dimension(int rank, int k);

/// Layer dimensions of free(rank, step) obtained by independent basis selection in
/// the tensor algebra (no Witt formula). Works beyond the algebra capacity limit.
std::vector<std::size_t> free_layer_dimensions(int rank, int step);

/// Right-nested words chosen as the basis of layer k of the free Lie algebra, sorted by text.
std::vector<std::string> free_layer_words(int rank, int k);

class GradedAlgebra;
using AlgebraPtr = std::shared_ptr<const GradedAlgebra>;

/// Stratified nilpotent Lie algebra with exact structure constants.
/// Immutable once built.
class GradedAlgebra {
 public:
  using Sparse = std::vector<std::pair<std::size_t, Rational>>;

  static AlgebraPtr free(int rank, int step, AlgebraOptions opts = {});
  /// Quotient (or any stratified) algebra from a JSON description; validates antisymmetry,
  /// Jacobi, grading, generation and label consistency.
  static AlgebraPtr from_json(const json& desc, AlgebraOptions opts = {});
  json to_json() const;

  int rank() const { return rank_; }
  int step() const { return step_; }
  bool is_free() const { return is_free_; }
  std::size_t dim() const { return labels_.size(); }
  const std::vector<std::size_t>& layer_dims() const { return layer_dims_; }
  /// First basis index of layer k (1-based layer).
  std::size_t layer_offset(int k) const { return offsets_[k - 1]; }
  int layer_of(std::size_t idx) const { return layer_of_[idx]; }
  const std::string& label(std::size_t idx) const { return labels_[idx]; }
  const std::vector<std::string>& labels() const { return labels_; }
  const BracketWord& word(std::size_t idx) const { return words_[idx]; }
  std::optional<std::size_t> index_of(std::string_view label) const;

  /// [X_a, X_b] as a sparse combination of basis vectors.
  const Sparse& structure(std::size_t a, std::size_t b) const { return table_[a * dim() + b]; }
  /// Matrix of ad X_a (column j holds [X_a, X_j]).
  const Matrix<Rational>& ad_exact(std::size_t a) const { return ad_q_[a]; }
  const Matrix<double>& ad_float(std::size_t a) const { return ad_d_[a]; }
  template <class T>
  const Matrix<T>& ad(std::size_t a) const {
    if constexpr (ScalarTraits<T>::exact)
      return ad_q_[a];
    else
      return ad_d_[a];
  }

  template <class T>
  Vec<T> bracket(const Vec<T>& x, const Vec<T>& y) const {
    const std::size_t n = dim();
    Vec<T> out(n, ScalarTraits<T>::zero());
    for (std::size_t a = 0; a < n; ++a) {
      if (ScalarTraits<T>::is_zero(x[a])) continue;
      for (std::size_t b = 0; b < n; ++b) {
        if (ScalarTraits<T>::is_zero(y[b])) continue;
        const T xy = x[a] * y[b];
        for (const auto& [c, k] : structure(a, b)) out[c] += xy * ScalarTraits<T>::from_rational(k);
      }
    }
    return out;
  }

  Vec<Rational> unit(std::size_t idx) const;
  /// Coordinates of a bracket word (any tree, basis or not).
  Vec<Rational> evaluate(const BracketWord& w) const;
  Vec<Rational> evaluate(std::string_view text) const;

  /// The free algebra of the same rank and step (this algebra when free-built).
  const GradedAlgebra& cover() const { return cover_ ? *cover_ : *this; }
  bool is_own_cover() const { return !cover_; }
  /// Homomorphism cover -> this (dim x cover.dim).
  const Matrix<Rational>& projection() const { return proj_; }
  /// Linear section this -> cover obtained by reading labels in the cover (cover.dim x dim).
  const Matrix<Rational>& section() const { return sect_; }

  // Tensor-algebra embedding, available on free-built algebras only.
  bool has_tensor_embedding() const { return !tensor_basis_.empty(); }
  /// Tensor expansion of basis element idx as a dense vector over words of its length.
  const Vec<Rational>& tensor_of(std::size_t idx) const { return tensor_basis_[idx]; }
  /// Basis coordinates (within layer k) of a Lie element given by its degree-k tensor part.
  /// Returns nullopt when the tensor is not in the span (exact scalars only).
  template <class T>
  std::optional<Vec<T>> tensor_to_layer(int k, const Vec<T>& tensor) const;

 private:
  GradedAlgebra() = default;
  void finish(const AlgebraOptions& opts);
  void validate_quotient() const;

  int rank_ = 0, step_ = 0;
  bool is_free_ = false;
  std::vector<std::string> labels_;
  std::vector<BracketWord> words_;
  std::vector<std::size_t> layer_dims_, offsets_;
  std::vector<int> layer_of_;
  std::vector<Sparse> table_;
  std::vector<Matrix<Rational>> ad_q_;
  std::vector<Matrix<double>> ad_d_;
  AlgebraPtr cover_;
  Matrix<Rational> proj_, sect_;
  std::vector<Vec<Rational>> tensor_basis_;
  // per layer: pivot tensor columns and the inverse of the pivot block
  std::vector<std::vector<std::size_t>> pivots_;
  std::vector<Matrix<Rational>> pivot_inv_q_;
  std::vector<Matrix<double>> pivot_inv_d_;
};

template <class T>
std::optional<Vec<T>> GradedAlgebra::tensor_to_layer(int k, const Vec<T>& tensor) const {
  const auto& piv = pivots_[k - 1];
  const std::size_t nk = layer_dims_[k - 1], off = offsets_[k - 1];
  Vec<T> coords(nk, ScalarTraits<T>::zero());
  const Matrix<T>* inv;
  if constexpr (ScalarTraits<T>::exact)
    inv = &pivot_inv_q_[k - 1];
  else
    inv = &pivot_inv_d_[k - 1];
  for (std::size_t p = 0; p < nk; ++p) {
    const T& tp = tensor[piv[p]];
    if (ScalarTraits<T>::is_zero(tp)) continue;
    for (std::size_t c = 0; c < nk; ++c) coords[c] += tp * (*inv)(p, c);
  }
  if constexpr (ScalarTraits<T>::exact) {
    Vec<T> back(tensor.size(), ScalarTraits<T>::zero());
    for (std::size_t c = 0; c < nk; ++c) {
      if (ScalarTraits<T>::is_zero(coords[c])) continue;
      const auto& tb = tensor_basis_[off + c];
      for (std::size_t w = 0; w < tb.size(); ++w)
        if (!ScalarTraits<T>::is_zero(tb[w])) back[w] += coords[c] * tb[w];
    }
    if (back != tensor) return std::nullopt;
  }
  return coords;
}

/// Element of g with exact or floating coordinates over the basis.
template <class T>
class LieVector {
 public:
  LieVector() = default;
  LieVector(AlgebraPtr alg, Vec<T> coords) : alg_(std::move(alg)), c_(std::move(coords)) {
    if (c_.size() != alg_->dim()) throw validation_error("coordinate vector length differs from algebra dimension");
  }
  static LieVector zero(AlgebraPtr alg) {
    const auto n = alg->dim();
    return LieVector(std::move(alg), Vec<T>(n, ScalarTraits<T>::zero()));
  }
  static LieVector basis(AlgebraPtr alg, std::size_t idx) {
    auto v = zero(alg);
    v.c_[idx] = ScalarTraits<T>::one();
    return v;
  }
  static LieVector word(AlgebraPtr alg, std::string_view text) {
    const auto q = alg->evaluate(text);
    Vec<T> c;
    for (const auto& x : q) c.push_back(ScalarTraits<T>::from_rational(x));
    return LieVector(std::move(alg), std::move(c));
  }

  const AlgebraPtr& algebra() const { return alg_; }
  const Vec<T>& coords() const { return c_; }
  Vec<T>& coords() { return c_; }
  const T& operator[](std::size_t i) const { return c_[i]; }
  bool is_zero() const { return is_zero_vec(c_); }

  /// Component in layer k (other coordinates zeroed).
  LieVector layer(int k) const {
    auto v = zero(alg_);
    for (std::size_t i = 0; i < c_.size(); ++i)
      if (alg_->layer_of(i) == k) v.c_[i] = c_[i];
    return v;
  }

  LieVector& operator+=(const LieVector& o) {
    same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  LieVector& operator-=(const LieVector& o) {
    same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  LieVector& operator*=(const T& s) {
    for (auto& x : c_) x *= s;
    return *this;
  }
  friend LieVector operator+(LieVector a, const LieVector& b) { return a += b; }
  friend LieVector operator-(LieVector a, const LieVector& b) { return a -= b; }
  friend LieVector operator-(LieVector a) { return a *= T(-1); }
  friend LieVector operator*(const T& s, LieVector a) { return a *= s; }
  friend bool operator==(const LieVector& a, const LieVector& b) { return a.alg_ == b.alg_ && a.c_ == b.c_; }

  void same(const LieVector& o) const {
    if (alg_ != o.alg_) throw validation_error("operands belong to different algebras");
  }

 private:
  AlgebraPtr alg_;
  Vec<T> c_;
};

template <class T>
LieVector<T> bracket(const LieVector<T>& a, const LieVector<T>& b) {
  a.same(b);
  return LieVector<T>(a.algebra(), a.algebra()->bracket(a.coords(), b.coords()));
}

/// Element of g*, coordinates lambda_J = <lambda, X_J> over the basis.
template <class T>
class DualCovector {
 public:
  DualCovector() = default;
  DualCovector(AlgebraPtr alg, Vec<T> coords) : alg_(std::move(alg)), c_(std::move(coords)) {
    if (c_.size() != alg_->dim()) throw validation_error("covector length differs from algebra dimension");
  }
  static DualCovector zero(AlgebraPtr alg) {
    const auto n = alg->dim();
    return DualCovector(std::move(alg), Vec<T>(n, ScalarTraits<T>::zero()));
  }
  static DualCovector dual_of(AlgebraPtr alg, std::string_view label) {
    auto idx = alg->index_of(label);
    if (!idx) throw validation_error("'" + std::string(label) + "' is not a basis word");
    auto l = zero(alg);
    l.c_[*idx] = ScalarTraits<T>::one();
    return l;
  }

  const AlgebraPtr& algebra() const { return alg_; }
  const Vec<T>& coords() const { return c_; }
  Vec<T>& coords() { return c_; }
  const T& operator[](std::size_t i) const { return c_[i]; }
  bool is_zero() const { return is_zero_vec(c_); }

  T pair(const LieVector<T>& v) const {
    if (v.algebra() != alg_) throw validation_error("pairing across different algebras");
    return dot(c_, v.coords());
  }
  /// lambda_J for an arbitrary bracket word J.
  T value(std::string_view word) const {
    const auto e = alg_->evaluate(word);
    T s = ScalarTraits<T>::zero();
    for (std::size_t i = 0; i < e.size(); ++i)
      if (!ScalarTraits<Rational>::is_zero(e[i])) s += c_[i] * ScalarTraits<T>::from_rational(e[i]);
    return s;
  }
  bool vanishes_on_layer(int k) const {
    for (std::size_t i = 0; i < c_.size(); ++i)
      if (alg_->layer_of(i) == k && !ScalarTraits<T>::is_zero(c_[i])) return false;
    return true;
  }
  /// Throws unless the projection to layer k is zero.
  void require_zero_layer(int k) const {
    if (!vanishes_on_layer(k))
      throw validation_error("covector has a nonzero g" + std::to_string(k) + "* component; zero it before this operation");
  }
  double quadratic_norm() const { return norm2(c_); }

  DualCovector& operator*=(const T& s) {
    for (auto& x : c_) x *= s;
    return *this;
  }
  friend DualCovector operator*(const T& s, DualCovector a) { return a *= s; }
  friend DualCovector operator+(DualCovector a, const DualCovector& b) {
    if (a.alg_ != b.alg_) throw validation_error("operands belong to different algebras");
    for (std::size_t i = 0; i < a.c_.size(); ++i) a.c_[i] += b.c_[i];
    return a;
  }
  friend bool operator==(const DualCovector& a, const DualCovector& b) { return a.alg_ == b.alg_ && a.c_ == b.c_; }

 private:
  AlgebraPtr alg_;
  Vec<T> c_;
};

/// {basis label: "p/q"} map; zero entries omitted.
json coords_to_json(const GradedAlgebra& alg, const Vec<Rational>& coords);
json coords_to_json(const GradedAlgebra& alg, const Vec<double>& coords);

/// Covector from {word: "p/q"}. Keys may be any bracket word; each key fixes the
/// value of lambda on that word. Unconstrained basis coordinates are set to zero.
DualCovector<Rational> covector_from_json(AlgebraPtr alg, const json& j);
/// Group/Lie element from {basis label: "p/q"}.
LieVector<Rational> vector_from_json(AlgebraPtr alg, const json& j);

}  // namespace carnot
