#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <vector>

#include "carnot/singularity.hpp"

namespace carnot {

/// Coefficients of the rank-2 step-5 quadratic system, read off a covector on free(2,5)
/// that vanishes on g1 and g2.
struct QuadraticParams {
  double l212 = 0, l112 = 0;
  double l2112 = 0, l2212 = 0, l1112 = 0;
  double l11212 = 0, l21212 = 0, l22212 = 0;  // block of the first component
  double l11112 = 0, l21112 = 0, l22112 = 0;  // block of the second component (with a minus sign)
  double c212 = 0, c112 = 0;                  // lambda_(12)(212), lambda_(12)(112)
  DualCovector<Rational> lambda;

  static QuadraticParams from_covector(const DualCovector<Rational>& l);
  /// {word: "p/q"}; entries inconsistent with the bracket relations are rejected.
  static QuadraticParams from_json(const json& j);
  json to_json() const;
};

/// Point (z1, z2, theta) of the Heisenberg group in exponential coordinates of the second kind.
using HeisenbergState = std::array<double, 3>;

/// Horizontal velocity (v1, v2) at p.
std::array<double, 2> horizontal_velocity(const HeisenbergState& p, const QuadraticParams& a);
/// d/dt (z1, z2, theta) = (v1, v2, z1 v2).
HeisenbergState rhs(const HeisenbergState& p, const QuadraticParams& a);
/// Rows dv1/d(z1,z2,theta) and dv2/d(z1,z2,theta).
std::array<std::array<double, 3>, 2> velocity_jacobian(const HeisenbergState& p, const QuadraticParams& a);

struct QuadraticTrajectory {
  std::vector<double> t;
  std::vector<HeisenbergState> p;
  double dt = 0;
  bool blew_up = false;  // stopped early: the state left the ball of radius `bound`

  void write_csv(std::ostream& os) const;
};

struct IntegrateOptions {
  double bound = 1e8;
};

/// Classical fourth-order Runge-Kutta on the Heisenberg form; the last step is shortened to land on t1.
QuadraticTrajectory integrate(const QuadraticParams& a, const HeisenbergState& p0, double t1, double dt,
                              IntegrateOptions opts = {});

/// The planar integro-differential form: Runge-Kutta on z with the memory term
/// int z1 dz2 carried as a running quadrature of the stored samples.
QuadraticTrajectory integrate_integro(const QuadraticParams& a, std::array<double, 2> z0, double t1, double dt,
                                      IntegrateOptions opts = {});

/// Many parameter sets at once; results in input order.
std::vector<QuadraticTrajectory> integrate_batch(const std::vector<QuadraticParams>& as, const HeisenbergState& p0,
                                                 double t1, double dt);

/// sup_t |theta(t) - int_0^t z1 z2' d tau|, the integral by per-step cubic Hermite quadrature.
double theta_drift(const QuadraticTrajectory& tr, const QuadraticParams& a);

/// Richardson order from the final states of runs at dt, dt/2, dt/4.
struct OrderEstimate {
  double order = 0;
  double ratio = 0;  // |y_dt - y_dt/2| / |y_dt/2 - y_dt/4|
};
OrderEstimate richardson_order(const QuadraticParams& a, const HeisenbergState& p0, double t1, double dt);

/// Polygon through the sampled z, as a piecewise-constant control on [0, t1].
PolyControl<double> polygon_control(const QuadraticTrajectory& tr);

struct CertifyRun {
  double dt = 0;
  double residual = 0;
};

struct CertifyReport {
  std::vector<CertifyRun> runs;  // dt halved each time
  std::optional<double> order_estimate;
  bool blew_up = false;

  json to_json() const;
};

struct CertifyOptions {
  int levels = 3;
  int grid = 257;
  std::optional<DualCovector<Rational>> lambda;  // overrides the covector rebuilt from the parameters
};

/// Integrates from the origin (the primitive starts at 0 and theta = int z1 dz2),
/// lifts polygonal surrogates into free(2,5) and evaluates the kernel residual
/// against lambda, halving dt at each level.
CertifyReport certify(const QuadraticParams& a, double t1, double dt, const CertifyOptions& opts = {});

/// Exploratory, not a certificate: damped Gauss-Newton on (v1, v2) = 0 from `start`.
struct EquilibriumSearch {
  HeisenbergState point{};
  double residual = 0;
  int iterations = 0;
  bool converged = false;
  bool certified = false;  // always false

  json to_json() const;
};
EquilibriumSearch find_equilibrium(const QuadraticParams& a, const HeisenbergState& start, int max_iter = 100,
                                   double tol = 1e-12);

}  // namespace carnot
