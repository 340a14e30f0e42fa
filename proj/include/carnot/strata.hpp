#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "carnot/singularity.hpp"

namespace carnot {

enum class CaseKind { R2S3, R2S4, R3S3 };

/// Which of the three low-dimensional families an algebra belongs to.
struct CaseTag {
  CaseKind kind = CaseKind::R2S3;
  bool free = true;

  int rank() const { return kind == CaseKind::R3S3 ? 3 : 2; }
  int step() const { return kind == CaseKind::R2S4 ? 4 : 3; }
  /// "r2s3", "r2s4", "r3s3", with a "-free" suffix only for r3s3.
  std::string name() const;
  static CaseTag of(const GradedAlgebra& alg);
  static CaseTag parse(std::string_view name);
};

/// The linear system x' = M x + v whose integral curves carry the singular primitives.
template <class T>
struct AffineSystem {
  CaseTag tag;
  Matrix<T> M;
  Vec<T> v;
  DualCovector<T> lambda;
};

template <class T>
AffineSystem<T> system_of(const DualCovector<T>& lambda, const CaseTag& tag);
template <class T>
AffineSystem<T> system_of(const DualCovector<T>& lambda) {
  return system_of(lambda, CaseTag::of(*lambda.algebra()));
}

template <class U, class T>
DualCovector<U> covector_cast(const DualCovector<T>& l) {
  Vec<U> c;
  for (const auto& x : l.coords()) {
    if constexpr (std::is_same_v<U, double>)
      c.push_back(to_double(x));
    else
      c.push_back(U(x));
  }
  return DualCovector<U>(l.algebra(), std::move(c));
}

struct StratumLabel {
  CaseTag tag;
  int major = 0;             // Lambda index; 0 for the unstratified rank-2 step-3 line
  std::optional<int> minor;  // smallest Xi index containing the covector
  std::vector<int> xi;       // every Xi containing the covector
  bool near_boundary = false;

  std::string text() const;  // e.g. "L3/X7"
  json to_json() const;
  friend bool operator==(const StratumLabel& a, const StratumLabel& b) {
    return a.tag.kind == b.tag.kind && a.major == b.major && a.xi == b.xi;
  }
};

/// Exact sign/rank/discriminant decisions for rationals; doubles treat
/// quantities within tol (relative) as zero and set near_boundary.
template <class T>
StratumLabel classify(const AffineSystem<T>& a, double tol = 1e-9);
template <class T>
StratumLabel classify(const DualCovector<T>& lambda, const CaseTag& tag, double tol = 1e-9) {
  return classify(system_of(lambda, tag), tol);
}

/// Classification of many covectors, run concurrently, results in input order.
std::vector<StratumLabel> classify_batch(const std::vector<DualCovector<Rational>>& lambdas, const CaseTag& tag);

/// z' = N z + b with x = P z and time rescaled: M = c P N P^{-1}, b = P^{-1} v / c.
template <class T>
struct NormalizedSystem {
  StratumLabel label;
  Matrix<T> M;
  Vec<T> v;
  Matrix<T> N, P, Pinv;
  Vec<T> b;
  T time_scale{};
  std::vector<T> params;  // (a, b) for the real diagonal rank-3 forms, a for the complex one

  int dim() const { return static_cast<int>(b.size()); }
  /// Coordinates of the rotated generator X_i(lambda) = sum_j P_ji X_j.
  Vec<T> frame(int i) const { return P.col(i); }
  /// max |c P N P^{-1} - M|
  double defect() const;
  json to_json() const;
};

/// True when every number in the normal form of this stratum is rational.
bool exactly_normalizable(const AffineSystem<Rational>& a, const StratumLabel& label);

/// Normal form for the classified stratum. Rational input throws a validation
/// error when the normal form needs irrational numbers (see exactly_normalizable).
template <class T>
NormalizedSystem<T> normalize(const AffineSystem<T>& a, const StratumLabel& label, double tol = 1e-9);
NormalizedSystem<double> normalize_numeric(const AffineSystem<Rational>& a, const StratumLabel& label,
                                           double tol = 1e-9);

template <class T>
struct EquilibriumSet {
  enum class Kind { None, Point, Line, Plane, Space };
  Kind kind = Kind::None;
  Vec<T> point;
  std::vector<Vec<T>> directions;

  bool contains(const Vec<T>& z, double tol = 1e-12) const;
  json to_json() const;
};

/// Solutions of N z + b = 0 in normal coordinates.
template <class T>
EquilibriumSet<T> equilibria(const NormalizedSystem<T>& ns);

/// Integral curve of z' = N z + b through z0, by the closed forms of each stratum.
struct ClosedFormTrajectory {
  NormalizedSystem<double> ns;
  Vec<double> z0;

  Vec<double> operator()(double tau) const;
  Vec<double> velocity(double tau) const;
  /// Limit as tau -> dir * infinity when it exists.
  std::optional<Vec<double>> limit(int dir, double tol = 1e-9) const;
};

ClosedFormTrajectory trajectory(const NormalizedSystem<double>& ns, Vec<double> z0);

/// True when N is nilpotent, so integral curves are polynomial in time.
template <class T>
bool polynomial_stratum(const NormalizedSystem<T>& ns);

/// Velocity z'(s) of the integral curve through z0 as polynomials in s (nilpotent N only).
template <class T>
std::vector<Polynomial<T>> polynomial_velocity(const NormalizedSystem<T>& ns, const Vec<T>& z0);

enum class LegKind { Flow, Approach, Depart, Along };

template <class T>
struct PlanLeg {
  LegKind kind = LegKind::Flow;
  T duration{};       // Flow: signed time; Depart: time reached on the departing curve
  int direction = 1;  // Approach: limit taken at direction*inf; Depart: the equilibrium is that limit
  Vec<T> point;       // Depart: the departing curve at time 0; Along: target equilibrium

  static PlanLeg flow(T tau) { return {LegKind::Flow, tau, 1, {}}; }
  static PlanLeg approach(int dir) { return {LegKind::Approach, T{}, dir, {}}; }
  static PlanLeg depart(Vec<T> q, int dir, T until) { return {LegKind::Depart, until, dir, std::move(q)}; }
  static PlanLeg along(Vec<T> target) { return {LegKind::Along, T{}, 1, std::move(target)}; }
};

template <class T>
struct ConcatenationPlan {
  std::vector<PlanLeg<T>> legs;  // starting at the origin
  double step = 1.0 / 64;        // sampling step in normal time (non-polynomial strata)
  double horizon = 40;           // truncation of asymptotic legs
  double tail_tol = 1e-12;       // asymptotic legs stop once this close to the limit
};

/// {"legs": [{"flow": "p/q"} | {"approach": +-1} | {"depart": [z...], "direction": +-1, "until": "p/q"}
///           | {"along": [z...]}], "step", "horizon", "tail_tol"}
template <class T>
ConcatenationPlan<T> plan_from_json(const json& j, int dim);

template <class T>
struct ConcatenatedPath {
  PolyControl<T> z_control;  // dz/dt in normal coordinates, t in [0,1]
  PolyControl<T> control;    // P dz/dt: the horizontal control in the original generators
  std::vector<Vec<T>> switch_points;
  double tail_bound = 0;  // largest distance dropped when truncating asymptotic legs
  bool sampled = false;   // piecewise-linear surrogate rather than the exact curve
  double length = 0;      // parameter length before rescaling to [0,1]

  Primitive<T> primitive() const { return Primitive<T>::of(z_control); }
};

/// Exact piecewise-polynomial path for nilpotent strata; otherwise a piecewise-linear
/// sample of the closed forms (double only). Rescaled affinely to [0,1].
template <class T>
ConcatenatedPath<T> concatenate(const NormalizedSystem<T>& ns, const ConcatenationPlan<T>& plan);

template <class T>
struct LiftedPath {
  AlgebraPtr alg;
  PolyControl<T> control;
  std::vector<T> times;                 // breakpoints of the control
  std::vector<GroupElement<T>> points;  // curve at each breakpoint, starting at the identity
  double tail_bound = 0;
};

template <class T>
LiftedPath<T> lift(const ConcatenatedPath<T>& path, AlgebraPtr alg);

/// One bookkeeping row: codim in g* of the covector family, dimension of the swept set.
struct CodimRow {
  int lambda = 0;
  std::optional<int> xi;
  int constraints = 0;
  int reach_dim = 0;
  std::string reach;
  int bound() const { return constraints - reach_dim; }
};

struct CodimTable {
  CaseTag tag;
  std::vector<CodimRow> rows;
  std::vector<std::optional<int>> stratum_bound;  // computed, index 0 is Lambda_1
  std::vector<std::optional<int>> expected;       // stored reference values
  int overall = 0;
  int expected_overall = 0;
  std::vector<std::string> discrepancies;

  bool matches() const { return discrepancies.empty(); }
  json to_json() const;
  std::string text() const;
};

CodimTable codim_report(const CaseTag& tag);

/// Rank-3 step-3 algebras with a one-dimensional second layer split as H x R.
struct ProductDecomposition {
  bool applies = false;
  Vec<Rational> central;  // generator of the bracket kernel in g1
  bool engel = false;     // H is the Engel algebra rather than free of rank 2 step 3
  Vec<Rational> engel_direction;  // Y in g1 with [Y,[X,Y]] = 0 (Engel case)
  std::string abn;
  int codim = 0;
};
ProductDecomposition product_decomposition(const GradedAlgebra& alg);

struct CatalogEntry {
  std::string id;
  std::string description;
  AlgebraPtr alg;
  PolyControl<Rational> control;
  DualCovector<Rational> lambda;
  StratumLabel stratum;
  std::size_t max_image_rank = 0;
};

std::vector<CatalogEntry> catalog_examples();

template <class T>
json matrix_to_json(const Matrix<T>& m);
template <class T>
json vec_to_json(const Vec<T>& v);

}  // namespace carnot
