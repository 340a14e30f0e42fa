// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "carnot/chen_flow.hpp"
#include "carnot/free_lie.hpp"
#include "carnot/quadratic_r2s5.hpp"
#include "carnot/singularity.hpp"
#include "carnot/strata.hpp"
#include "oracles/dynkin.hpp"
#include "oracles/lyndon.hpp"
#include "oracles/normal_forms.hpp"
#include "oracles/r2s5.hpp"
#include "unit/test_util.hpp"

using namespace carnot;
using testutil::q;

namespace {

const CaseTag kR2S3{CaseKind::R2S3, true};
const CaseTag kR2S4{CaseKind::R2S4, true};
const CaseTag kR3S3{CaseKind::R3S3, true};

// Collects failed checks of one criterion with a short reason each.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream note;

  void require(bool ok, const std::string& what) {
    if (!ok && failures.size() < 8) failures.push_back(what);
    else if (!ok) failures.back() = "...";
  }
};

int failed = 0;

void criterion(int n, double limit_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.failures.push_back(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) c.failures.push_back("took " + std::to_string(secs) + " s, limit " + std::to_string(limit_s));
  const bool ok = c.failures.empty();
  if (!ok) ++failed;
  std::printf("criterion %d: %s (%.2f s) %s\n", n, ok ? "PASS" : "FAIL", secs, c.note.str().c_str());
  for (const auto& f : c.failures) std::printf("    %s\n", f.c_str());
  std::fflush(stdout);
}

bool annihilates(const DualCovector<Rational>& l, const PolyControl<Rational>& u) {
  auto img = image_of_differential(u, l.algebra());
  for (const auto& v : img.basis)
    if (dot(l.coords(), v) != 0) return false;
  return true;
}

std::string where(const CaseTag& tag, int major, int k = -1) {
  std::string s = tag.name() + " L" + std::to_string(major);
  if (k >= 0) s += " sample " + std::to_string(k);
  return s;
}

// 1: layer dimensions, antisymmetry, Jacobi
void algebra_axioms(Check& c) {
  for (auto [r, s] : std::vector<std::pair<int, int>>{{2, 3}, {2, 4}, {2, 5}, {3, 3}}) {
    auto g = GradedAlgebra::free(r, s);
    const std::string name = "free(" + std::to_string(r) + "," + std::to_string(s) + ")";
    c.require(g->layer_dims() == oracle::lyndon_counts(r, s), name + " layer dims");
    const std::size_t n = g->dim();
    std::vector<Vec<Rational>> e;
    for (std::size_t i = 0; i < n; ++i) e.push_back(g->unit(i));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        auto a = g->bracket(e[i], e[j]);
        auto b = g->bracket(e[j], e[i]);
        for (std::size_t k = 0; k < n; ++k) a[k] += b[k];
        c.require(is_zero_vec(a), name + " antisymmetry " + g->label(i) + "," + g->label(j));
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto ij = g->bracket(e[i], e[j]);
        for (std::size_t k = j + 1; k < n; ++k) {
          auto x = g->bracket(e[i], g->bracket(e[j], e[k]));
          auto y = g->bracket(e[j], g->bracket(e[k], e[i]));
          auto z = g->bracket(e[k], ij);
          for (std::size_t m = 0; m < n; ++m) x[m] += y[m] + z[m];
          c.require(is_zero_vec(x), name + " Jacobi " + g->label(i) + "," + g->label(j) + "," + g->label(k));
        }
      }
  }
  c.note << "free(2,3) (2,4) (2,5) (3,3)";
}

// 2: group laws and BCH
void group_laws(Check& c) {
  std::mt19937 rng(20);
  auto g = GradedAlgebra::free(3, 3);
  auto random_element = [&] {
    Vec<Rational> x;
    for (std::size_t i = 0; i < g->dim(); ++i) x.push_back(testutil::rq(rng, -4, 4, 3));
    return LieVector<Rational>(g, x);
  };
  for (int t = 0; t < 100; ++t) {
    auto a = random_element(), b = random_element(), d = random_element();
    c.require(group_product(group_product(a, b), d) == group_product(a, group_product(b, d)),
              "associativity, triple " + std::to_string(t));
    c.require(group_product(a, group_inverse(a)).is_zero(), "right inverse, triple " + std::to_string(t));
    c.require(group_product(group_inverse(a), a).is_zero(), "left inverse, triple " + std::to_string(t));
    c.require(group_product(a, LieVector<Rational>::zero(g)) == a, "identity, triple " + std::to_string(t));
  }
  auto x1 = LieVector<Rational>::basis(g, 0), x2 = LieVector<Rational>::basis(g, 1);
  c.require(group_product(x1, x2).coords() == oracle::dynkin_bch(*g, x1.coords(), x2.coords()), "BCH(X1, X2)");
  for (int t = 0; t < 10; ++t) {
    auto a = random_element(), b = random_element();
    c.require(group_product(a, b).coords() == oracle::dynkin_bch(*g, a.coords(), b.coords()),
              "BCH random pair " + std::to_string(t));
  }
  c.note << "100 triples in free(3,3)";
}

// Two-piece controls: generic, collinear pieces, or both pieces constant.
PolyControl<Rational> two_piece(std::mt19937& rng, int kind) {
  if (kind == 0) return testutil::random_control(rng, 2, 2, 1);
  if (kind == 2) return testutil::random_control(rng, 2, 2, 0);
  Vec<Rational> dir{testutil::rq(rng), testutil::rq(rng)};
  if (dir[0] == 0 && dir[1] == 0) dir[0] = 1;
  std::vector<ControlPiece<Rational>> ps;
  for (int k = 0; k < 2; ++k) {
    ControlPiece<Rational> p{q(std::uniform_int_distribution<int>(1, 3)(rng), 4), {}};
    const Rational a = testutil::rq(rng), b = testutil::rq(rng);
    for (int i = 0; i < 2; ++i) p.poly.emplace_back(std::vector<Rational>{a * dir[i], b * dir[i]});
    ps.push_back(std::move(p));
  }
  return PolyControl<Rational>(2, std::move(ps));
}

// 3: rank deficiency, annihilator and kernel criterion agree
void singular_equivalence(Check& c) {
  std::mt19937 rng(30);
  int singular = 0, total = 0;
  for (int step : {3, 4}) {
    auto g = GradedAlgebra::free(2, step);
    for (int t = 0; t < 50; ++t, ++total) {
      const auto u = two_piece(rng, t % 3);
      const auto img = image_of_differential(u, g);
      const auto ann = annihilator(img);
      const bool deficient = img.rank < g->dim();
      bool residual_zero = false;
      bool goh = true;
      for (const auto& l : ann) {
        residual_zero = residual_zero || kernel_residual(u, l, 11).identically_zero;
        goh = goh && l.vanishes_on_layer(2);
      }
      const std::string id = "free(2," + std::to_string(step) + ") control " + std::to_string(t);
      c.require(deficient == !ann.empty(), id + ": rank deficiency vs annihilator");
      c.require(!ann.empty() == residual_zero, id + ": annihilator vs kernel residual");
      c.require(ann.size() == g->dim() - img.rank, id + ": annihilator dimension");
      if (deficient) {
        ++singular;
        c.require(goh, id + ": Goh condition");
      }
    }
  }
  c.note << singular << " of " << total << " controls singular";
}

// 4: line primitives in rank 2 step 3
void line_primitives(Check& c) {
  std::mt19937 rng(40);
  auto g = GradedAlgebra::free(2, 3);
  int done = 0;
  while (done < 20) {
    const Rational a = testutil::rq(rng), b = testutil::rq(rng);
    if (a == 0 && b == 0) continue;
    auto l = covector_from_json(g, json{{"212", format_rational(a)}, {"112", format_rational(b)}});
    auto sys = system_of(l, kR2S3);
    auto ns = normalize(sys, classify(sys));
    ConcatenationPlan<Rational> plan;
    plan.legs = {PlanLeg<Rational>::flow(q(1))};
    auto path = concatenate(ns, plan);
    auto lp = lift(path, g);
    c.require(lp.points.back() == endpoint(path.control, g), "lift endpoint, sample " + std::to_string(done));
    auto ann = annihilator(image_of_differential(path.control, g));
    // l must lie in the span of the returned annihilator basis
    Matrix<Rational> m(ann.size() + 1, g->dim());
    for (std::size_t i = 0; i < ann.size(); ++i)
      for (std::size_t j = 0; j < g->dim(); ++j) m(i, j) = ann[i][j];
    for (std::size_t j = 0; j < g->dim(); ++j) m(ann.size(), j) = l[j];
    c.require(!ann.empty() && rank(m) == ann.size(), "annihilator contains lambda, sample " + std::to_string(done));
    c.require(annihilates(l, path.control), "lambda annihilates the image, sample " + std::to_string(done));
    ++done;
  }
  const auto t = codim_report(kR2S3);
  c.require(t.overall >= 3, "codimension below 3");
  c.note << "20 covectors, codimension >= " << t.overall;
}

// 5: classification and certification of every stratum
void strata_round_trip(Check& c) {
  std::mt19937 rng(50);
  double worst_order = INFINITY;
  int exact = 0, sampled = 0;
  for (const auto& tag : {kR2S4, kR3S3}) {
    for (int major = 1; major <= oracle::strata_count(tag); ++major) {
      for (int k = 0; k < 5; ++k) {
        // at most one zero in b, so the flow from the origin moves
        const unsigned mask = k == 0 ? 0u : 1u << (k % tag.rank());
        auto s = oracle::normal_sample(tag, major, rng, mask);
        auto sys = system_of(s.lambda, tag);
        auto lab = classify(sys);
        c.require(lab.major == major, where(tag, major, k) + ": classified as " + lab.text());
        if (lab.major != major) continue;
        if (oracle::polynomial_major(tag, major)) {
          auto ns = normalize(sys, lab);
          ConcatenationPlan<Rational> plan;
          plan.legs = {PlanLeg<Rational>::flow(q(1)), PlanLeg<Rational>::flow(q(-1, 3))};
          auto path = concatenate(ns, plan);
          c.require(!path.sampled && annihilates(s.lambda, path.control) &&
                        kernel_residual(path.control, s.lambda, 11).identically_zero,
                    where(tag, major, k) + ": exact certification");
          ++exact;
          continue;
        }
        // exponential stratum: piecewise-linear surrogate at h = 2^-4 .. 2^-8
        auto ld = covector_cast<double>(s.lambda);
        auto ns = normalize(system_of(ld, tag), lab);
        double rate = 1;
        for (int i = 0; i < ns.dim(); ++i)
          for (int j = 0; j < ns.dim(); ++j) rate = std::max(rate, std::fabs(ns.N(i, j)));
        rate = std::exp2(std::ceil(std::log2(rate)));
        std::vector<double> res;
        for (int e = 4; e <= 8; ++e) {
          ConcatenationPlan<double> plan;
          plan.legs = {PlanLeg<double>::flow(1.0 / rate)};
          plan.step = std::ldexp(1.0, -e);
          res.push_back(kernel_residual(concatenate(ns, plan).control, ld, 257).value);
        }
        ++sampled;
        if (res.back() <= 1e-13) continue;  // certified up to rounding at every step
        bool decreasing = true;
        double order = INFINITY;
        for (std::size_t i = 1; i < res.size(); ++i) {
          decreasing = decreasing && res[i] < res[i - 1];
          order = std::min(order, std::log2(res[i - 1] / res[i]));
        }
        // least-squares slope of log2 residual against log2 h
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < res.size(); ++i) {
          const double x = -4.0 - static_cast<double>(i), y = std::log2(res[i]);
          sx += x, sy += y, sxx += x * x, sxy += x * y;
        }
        const double m = static_cast<double>(res.size());
        const double fit = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        worst_order = std::min(worst_order, order);
        char buf[96];
        std::snprintf(buf, sizeof buf, ": measured order %.4f (per halving, min), %.4f (fit)", order, fit);
        c.require(decreasing, where(tag, major, k) + ": residual not decreasing");
        c.require(order >= 1, where(tag, major, k) + buf);
      }
    }
  }
  c.note << exact << " exact, " << sampled << " sampled, worst measured order " << worst_order;
}

// 6: catalog fixtures
void catalog(Check& c) {
  auto cat = catalog_examples();
  c.require(cat.size() == 4, "catalog size");
  for (const auto& e : cat) {
    const auto img = image_of_differential(e.control, e.alg);
    c.require(annihilates(e.lambda, e.control), e.id + ": lambda does not annihilate the image");
    c.require(kernel_residual(e.control, e.lambda, 11).identically_zero, e.id + ": kernel residual");
    if (e.id == "ex2") {
      const std::size_t ru = img.rank - e.alg->layer_dims()[0];
      c.require(ru <= 9 && ru < 11, "ex2: rank(R_u) = " + std::to_string(ru));
      c.require(e.lambda.value("123") == 1 && e.lambda.value("231") == -1 && e.lambda.vanishes_on_layer(2),
                "ex2: covector");
      c.note << "ex2 rank(R_u) = " << ru << "; ";
    }
    if (e.id == "gole-karidi") {
      const auto lab = classify(e.lambda, kR2S4);
      c.require(lab.major == 3, "gole-karidi classified as " + lab.text());
      auto ns = normalize(system_of(e.lambda, kR2S4), lab);
      ConcatenationPlan<Rational> plan;
      plan.legs = {PlanLeg<Rational>::flow(q(1))};
      auto path = concatenate(ns, plan);
      c.require(annihilates(e.lambda, path.control) && kernel_residual(path.control, e.lambda, 11).identically_zero,
                "gole-karidi: concatenation does not certify");
    }
  }
  const std::vector<std::string> ids{"ex2", "ex3-lipschitz", "ex3-spiral", "gole-karidi"};
  for (std::size_t i = 0; i < ids.size() && i < cat.size(); ++i) c.require(cat[i].id == ids[i], "catalog id " + ids[i]);
  c.note << "4 entries";
}

// 7: codimension tables
void codim_tables(Check& c) {
  const auto r24 = codim_report(kR2S4);
  c.require(r24.matches(), "R2S4 discrepancies");
  for (std::size_t k = 0; k < r24.stratum_bound.size(); ++k)
    c.require(r24.stratum_bound[k] && *r24.stratum_bound[k] >= 3, "R2S4 L" + std::to_string(k + 1) + " below 3");
  c.require(r24.overall >= 3, "R2S4 overall");
  const auto r33 = codim_report(CaseTag{CaseKind::R3S3, false});
  const std::vector<std::optional<int>> want{2, 2, 2, 2, 2, 3, 3, 1, 2};
  c.require(r33.matches() && r33.stratum_bound == want, "R3S3 table");
  const auto rf = codim_report(kR3S3);
  const std::vector<std::optional<int>> wantf{3, 4, 3, 4, 3, 4, 5, std::nullopt, 11};
  c.require(rf.matches() && rf.stratum_bound.size() == wantf.size(), "free R3S3 table");
  for (std::size_t k = 0; k < wantf.size() && k < rf.stratum_bound.size(); ++k)
    if (wantf[k]) c.require(rf.stratum_bound[k] == wantf[k], "free R3S3 L" + std::to_string(k + 1));
  c.require(rf.overall == 3, "free R3S3 overall");
  c.note << "overall R2S4 " << r24.overall << ", R3S3 " << r33.overall << ", free R3S3 " << rf.overall;
}

// 8: quadratic system in rank 2 step 5
void quadratic(Check& c) {
  std::mt19937 rng(80);
  double worst_cert = INFINITY, lo = INFINITY, hi = -INFINITY;
  for (int k = 0; k < 10; ++k) {
    const auto a = oracle::random_r2s5(rng);
    const std::string id = "set " + std::to_string(k);
    const double T = 1;
    for (double dt : {0.1, 0.05, 0.025}) {
      const auto tr = integrate(a, {0, 0, 0}, T, dt);
      c.require(!tr.blew_up, id + ": blow-up");
      c.require(theta_drift(tr, a) <= 10 * std::pow(dt, 4) * T, id + ": theta drift at dt " + std::to_string(dt));
    }
    const auto e = richardson_order(a, {0, 0, 0}, T, 0.05);
    lo = std::min(lo, e.order);
    hi = std::max(hi, e.order);
    c.require(std::fabs(e.order - 4) <= 0.3, id + ": Richardson order " + std::to_string(e.order));
    CertifyOptions o;
    o.levels = 4;
    const auto rep = certify(a, T, 1.0 / 16, o);
    bool decreasing = true;
    for (std::size_t i = 1; i < rep.runs.size(); ++i) decreasing = decreasing && rep.runs[i].residual < rep.runs[i - 1].residual;
    c.require(decreasing, id + ": certify residual not decreasing");
    c.require(rep.order_estimate && *rep.order_estimate >= 1, id + ": certify order");
    if (rep.order_estimate) worst_cert = std::min(worst_cert, *rep.order_estimate);
  }
  c.note << "Richardson order in [" << lo << ", " << hi << "], certify order >= " << worst_cert;
}

}  // namespace

int main() {
  criterion(1, 5, algebra_axioms);
  criterion(2, 10, group_laws);
  criterion(3, 60, singular_equivalence);
  criterion(4, 60, line_primitives);
  criterion(5, 300, strata_round_trip);
  criterion(6, 60, catalog);
  criterion(7, 60, codim_tables);
  criterion(8, 120, quadratic);
  std::printf("%d of 8 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
