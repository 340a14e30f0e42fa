#include "carnot/quadratic_r2s5.hpp"

#include <cmath>
#include <cstdio>

#include "carnot/parallel.hpp"

namespace carnot {

namespace {

struct Field {
  const char* word;
  double QuadraticParams::*slot;
};

const Field kFields[] = {
    {"212", &QuadraticParams::l212},          {"112", &QuadraticParams::l112},
    {"2112", &QuadraticParams::l2112},        {"2212", &QuadraticParams::l2212},
    {"1112", &QuadraticParams::l1112},        {"11212", &QuadraticParams::l11212},
    {"21212", &QuadraticParams::l21212},      {"22212", &QuadraticParams::l22212},
    {"11112", &QuadraticParams::l11112},      {"21112", &QuadraticParams::l21112},
    {"22112", &QuadraticParams::l22112},      {"(12)(212)", &QuadraticParams::c212},
    {"(12)(112)", &QuadraticParams::c112},
};

AlgebraPtr free25() {
  static const AlgebraPtr g = GradedAlgebra::free(2, 5);
  return g;
}

double inf_norm(const HeisenbergState& p) { return std::max({std::abs(p[0]), std::abs(p[1]), std::abs(p[2])}); }

bool escaped(const HeisenbergState& p, double bound) {
  for (double x : p)
    if (!std::isfinite(x)) return true;
  return inf_norm(p) > bound;
}

HeisenbergState axpy3(const HeisenbergState& p, double h, const HeisenbergState& k) {
  return {p[0] + h * k[0], p[1] + h * k[1], p[2] + h * k[2]};
}

// Number of steps and the time of step k; the last step may be shorter.
std::size_t step_count(double t1, double dt) {
  if (!(dt > 0)) throw validation_error("dt must be positive");
  if (!(t1 >= 0)) throw validation_error("t1 must be nonnegative");
  return static_cast<std::size_t>(std::ceil(t1 / dt - 1e-9));
}

double time_at(std::size_t k, std::size_t n, double t1, double dt) { return k == n ? t1 : static_cast<double>(k) * dt; }

// f = z1 z2' and its time derivative along the flow.
std::pair<double, double> memory_integrand(const HeisenbergState& p, const QuadraticParams& a) {
  const auto v = horizontal_velocity(p, a);
  const auto jac = velocity_jacobian(p, a);
  const HeisenbergState pd{v[0], v[1], p[0] * v[1]};
  const double v2dot = jac[1][0] * pd[0] + jac[1][1] * pd[1] + jac[1][2] * pd[2];
  return {p[0] * v[1], v[0] * v[1] + p[0] * v2dot};
}

}  // namespace

QuadraticParams QuadraticParams::from_covector(const DualCovector<Rational>& l) {
  if (l.algebra()->rank() != 2 || l.algebra()->step() < 5 || !l.algebra()->is_free())
    throw validation_error("quadratic system parameters need a covector on free(2,5)");
  l.require_zero_layer(1);
  l.require_zero_layer(2);
  QuadraticParams a;
  for (const auto& f : kFields) a.*f.slot = to_double(l.value(f.word));
  a.lambda = l;
  return a;
}

QuadraticParams QuadraticParams::from_json(const json& j) { return from_covector(covector_from_json(free25(), j)); }

json QuadraticParams::to_json() const {
  json j = json::object();
  for (const auto& f : kFields) j[f.word] = format_rational(lambda.value(f.word));
  return j;
}

std::array<double, 2> horizontal_velocity(const HeisenbergState& p, const QuadraticParams& a) {
  const double z1 = p[0], z2 = p[1], th = p[2];
  const double v1 = a.l212 + a.l2112 * z1 + a.l2212 * z2 +
                    0.5 * (a.l11212 * z1 * z1 + 2 * a.l21212 * z1 * z2 + a.l22212 * z2 * z2) + a.c212 * th;
  const double v2 = -a.l112 - a.l1112 * z1 - a.l2112 * z2 -
                    0.5 * (a.l11112 * z1 * z1 + 2 * a.l21112 * z1 * z2 + a.l22112 * z2 * z2) - a.c112 * th;
  return {v1, v2};
}

HeisenbergState rhs(const HeisenbergState& p, const QuadraticParams& a) {
  const auto v = horizontal_velocity(p, a);
  return {v[0], v[1], p[0] * v[1]};
}

std::array<std::array<double, 3>, 2> velocity_jacobian(const HeisenbergState& p, const QuadraticParams& a) {
  const double z1 = p[0], z2 = p[1];
  return {{{a.l2112 + a.l11212 * z1 + a.l21212 * z2, a.l2212 + a.l21212 * z1 + a.l22212 * z2, a.c212},
           {-a.l1112 - a.l11112 * z1 - a.l21112 * z2, -a.l2112 - a.l21112 * z1 - a.l22112 * z2, -a.c112}}};
}

void QuadraticTrajectory::write_csv(std::ostream& os) const {
  os << "t,z1,z2,theta\n";
  char buf[128];
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", t[k], p[k][0], p[k][1], p[k][2]);
    os << buf;
  }
}

QuadraticTrajectory integrate(const QuadraticParams& a, const HeisenbergState& p0, double t1, double dt,
                              IntegrateOptions opts) {
  const auto n = step_count(t1, dt);
  QuadraticTrajectory tr;
  tr.dt = dt;
  tr.t.push_back(0);
  tr.p.push_back(p0);
  HeisenbergState p = p0;
  for (std::size_t k = 0; k < n; ++k) {
    const double h = time_at(k + 1, n, t1, dt) - time_at(k, n, t1, dt);
    const auto k1 = rhs(p, a);
    const auto k2 = rhs(axpy3(p, h / 2, k1), a);
    const auto k3 = rhs(axpy3(p, h / 2, k2), a);
    const auto k4 = rhs(axpy3(p, h, k3), a);
    for (int i = 0; i < 3; ++i) p[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    if (escaped(p, opts.bound)) {
      tr.blew_up = true;
      break;
    }
    tr.t.push_back(time_at(k + 1, n, t1, dt));
    tr.p.push_back(p);
  }
  return tr;
}

QuadraticTrajectory integrate_integro(const QuadraticParams& a, std::array<double, 2> z0, double t1, double dt,
                                      IntegrateOptions opts) {
  const auto n = step_count(t1, dt);
  QuadraticTrajectory tr;
  tr.dt = dt;
  HeisenbergState p{z0[0], z0[1], 0};
  tr.t.push_back(0);
  tr.p.push_back(p);
  for (std::size_t k = 0; k < n; ++k) {
    const double h = time_at(k + 1, n, t1, dt) - time_at(k, n, t1, dt);
    const double theta = p[2];
    const double f0 = memory_integrand(p, a).first;
    // z' = v(z, theta_n + int_{t_n}^{t} z1 dz2), the memory integral by the trapezoid rule
    auto stage = [&](double s, double z1, double z2) {
      HeisenbergState q{z1, z2, theta};
      auto v = horizontal_velocity(q, a);
      for (int it = 0; it < 2; ++it) {
        q[2] = theta + s / 2 * (f0 + z1 * v[1]);
        v = horizontal_velocity(q, a);
      }
      return v;
    };
    const auto k1 = horizontal_velocity(p, a);
    const auto k2 = stage(h / 2, p[0] + h / 2 * k1[0], p[1] + h / 2 * k1[1]);
    const auto k3 = stage(h / 2, p[0] + h / 2 * k2[0], p[1] + h / 2 * k2[1]);
    const auto k4 = stage(h, p[0] + h * k3[0], p[1] + h * k3[1]);
    HeisenbergState q = p;
    for (int i = 0; i < 2; ++i) q[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    // memory update over the accepted step: cubic Hermite rule on the stored samples
    const auto [fa, da] = memory_integrand(p, a);
    q[2] = theta + h * fa;
    for (int it = 0; it < 3; ++it) {
      const auto [fb, db] = memory_integrand(q, a);
      q[2] = theta + h / 2 * (fa + fb) + h * h / 12 * (da - db);
    }
    p = q;
    if (escaped(p, opts.bound)) {
      tr.blew_up = true;
      break;
    }
    tr.t.push_back(time_at(k + 1, n, t1, dt));
    tr.p.push_back(p);
  }
  return tr;
}

std::vector<QuadraticTrajectory> integrate_batch(const std::vector<QuadraticParams>& as, const HeisenbergState& p0,
                                                 double t1, double dt) {
  return parallel_map(as, [&](const QuadraticParams& a) { return integrate(a, p0, t1, dt); });
}

double theta_drift(const QuadraticTrajectory& tr, const QuadraticParams& a) {
  double q = tr.p.front()[2], worst = 0;
  for (std::size_t k = 1; k < tr.p.size(); ++k) {
    const double h = tr.t[k] - tr.t[k - 1];
    const auto [fa, da] = memory_integrand(tr.p[k - 1], a);
    const auto [fb, db] = memory_integrand(tr.p[k], a);
    q += h / 2 * (fa + fb) + h * h / 12 * (da - db);
    worst = std::max(worst, std::abs(tr.p[k][2] - q));
  }
  return worst;
}

OrderEstimate richardson_order(const QuadraticParams& a, const HeisenbergState& p0, double t1, double dt) {
  HeisenbergState y[3];
  for (int l = 0; l < 3; ++l) {
    const auto tr = integrate(a, p0, t1, dt / std::ldexp(1.0, l));
    if (tr.blew_up) throw Error(ErrorKind::BlowUp, "integration blew up during the order study");
    y[l] = tr.p.back();
  }
  auto dist = [](const HeisenbergState& u, const HeisenbergState& w) {
    return inf_norm({u[0] - w[0], u[1] - w[1], u[2] - w[2]});
  };
  OrderEstimate e;
  e.ratio = dist(y[0], y[1]) / dist(y[1], y[2]);
  e.order = std::log2(e.ratio);
  return e;
}

PolyControl<double> polygon_control(const QuadraticTrajectory& tr) {
  std::vector<ControlPiece<double>> pieces;
  for (std::size_t k = 1; k < tr.p.size(); ++k) {
    const double h = tr.t[k] - tr.t[k - 1];
    if (!(h > 0)) continue;
    pieces.push_back({h,
                      {Polynomial<double>::constant((tr.p[k][0] - tr.p[k - 1][0]) / h),
                       Polynomial<double>::constant((tr.p[k][1] - tr.p[k - 1][1]) / h)}});
  }
  if (pieces.empty()) throw validation_error("trajectory has no steps");
  return PolyControl<double>(2, std::move(pieces));
}

json CertifyReport::to_json() const {
  json j;
  j["dt"] = runs.empty() ? json(nullptr) : json(runs.front().dt);
  j["residual"] = runs.empty() ? json(nullptr) : json(runs.front().residual);
  j["order_estimate"] = order_estimate ? json(*order_estimate) : json(nullptr);
  j["refinement"] = json::array();
  for (const auto& r : runs) j["refinement"].push_back({{"dt", r.dt}, {"residual", r.residual}});
  j["blew_up"] = blew_up;
  return j;
}

CertifyReport certify(const QuadraticParams& a, double t1, double dt, const CertifyOptions& opts) {
  if (opts.levels < 1) throw validation_error("certify needs at least one refinement level");
  const auto& lq = opts.lambda ? *opts.lambda : a.lambda;
  if (lq.algebra() != free25()) throw validation_error("certify needs a covector on free(2,5)");
  Vec<double> coords;
  for (const auto& x : lq.coords()) coords.push_back(to_double(x));
  const DualCovector<double> ld(lq.algebra(), std::move(coords));
  CertifyReport rep;
  for (int l = 0; l < opts.levels; ++l) {
    const double h = dt / std::ldexp(1.0, l);
    const auto tr = integrate(a, {0, 0, 0}, t1, h);
    if (tr.blew_up) {
      rep.blew_up = true;
      break;
    }
    rep.runs.push_back({h, kernel_residual(polygon_control(tr), ld, opts.grid).value});
  }
  if (rep.runs.size() >= 2) {
    const double r0 = rep.runs[rep.runs.size() - 2].residual, r1 = rep.runs.back().residual;
    if (r0 > 0 && r1 > 0) rep.order_estimate = std::log2(r0 / r1);
  }
  return rep;
}

json EquilibriumSearch::to_json() const {
  return {{"point", {point[0], point[1], point[2]}},
          {"residual", residual},
          {"iterations", iterations},
          {"converged", converged},
          {"certified", certified}};
}

EquilibriumSearch find_equilibrium(const QuadraticParams& a, const HeisenbergState& start, int max_iter, double tol) {
  EquilibriumSearch s;
  s.point = start;
  auto norm = [&](const HeisenbergState& p) {
    const auto v = horizontal_velocity(p, a);
    return std::hypot(v[0], v[1]);
  };
  s.residual = norm(s.point);
  for (; s.iterations < max_iter && s.residual > tol; ++s.iterations) {
    const auto v = horizontal_velocity(s.point, a);
    const auto j = velocity_jacobian(s.point, a);
    // minimum-norm Newton step: -J^T (J J^T)^-1 v
    const double g00 = j[0][0] * j[0][0] + j[0][1] * j[0][1] + j[0][2] * j[0][2];
    const double g01 = j[0][0] * j[1][0] + j[0][1] * j[1][1] + j[0][2] * j[1][2];
    const double g11 = j[1][0] * j[1][0] + j[1][1] * j[1][1] + j[1][2] * j[1][2];
    const double det = g00 * g11 - g01 * g01;
    if (std::abs(det) < 1e-300) break;
    const double y0 = (g11 * v[0] - g01 * v[1]) / det, y1 = (g00 * v[1] - g01 * v[0]) / det;
    HeisenbergState step{};
    for (int i = 0; i < 3; ++i) step[i] = -(j[0][i] * y0 + j[1][i] * y1);
    double damp = 1;
    HeisenbergState trial = axpy3(s.point, damp, step);
    while (norm(trial) >= s.residual && damp > 1e-8) {
      damp /= 2;
      trial = axpy3(s.point, damp, step);
    }
    if (norm(trial) >= s.residual) break;
    s.point = trial;
    s.residual = norm(trial);
  }
  s.converged = s.residual <= tol;
  return s;
}

}  // namespace carnot
