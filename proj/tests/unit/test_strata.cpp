#include <cmath>
#include <random>

#include "carnot/strata.hpp"
#include "doctest.h"
#include "oracles/normal_forms.hpp"
#include "unit/test_util.hpp"

using namespace carnot;
using testutil::q;

namespace {

const CaseTag kR2S3{CaseKind::R2S3, true};
const CaseTag kR2S4{CaseKind::R2S4, true};
const CaseTag kR3S3{CaseKind::R3S3, true};

std::vector<CaseTag> all_cases() { return {kR2S3, kR2S4, kR3S3}; }

double dist(const Vec<double>& a, const Vec<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

double sup(const Vec<double>& a) {
  double d = 0;
  for (double x : a) d = std::max(d, std::fabs(x));
  return d;
}

bool annihilates(const DualCovector<Rational>& l, const PolyControl<Rational>& u) {
  auto img = image_of_differential(u, l.algebra());
  for (const auto& v : img.basis)
    if (dot(l.coords(), v) != 0) return false;
  return true;
}

template <class T>
Vec<T> residual_of(const NormalizedSystem<T>& ns, const Vec<T>& z) {
  auto r = ns.N * z;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += ns.b[i];
  return r;
}

}  // namespace

TEST_CASE("affine systems read off covectors") {
  auto g24 = GradedAlgebra::free(2, 4);
  auto a = system_of(DualCovector<Rational>::dual_of(g24, "2112"), kR2S4);
  CHECK(a.M == Matrix<Rational>{{q(1), q(0)}, {q(0), q(-1)}});
  CHECK(a.v == Vec<Rational>{0, 0});
  auto b = system_of(covector_from_json(g24, json{{"2212", "-1"}, {"1112", "-1"}}), kR2S4);
  CHECK(b.M == Matrix<Rational>{{q(0), q(-1)}, {q(1), q(0)}});

  auto g33 = GradedAlgebra::free(3, 3);
  auto c = system_of(covector_from_json(g33, json{{"123", "2"}, {"231", "1"}, {"312", "-3"}}), kR3S3);
  CHECK(c.M == Matrix<Rational>{{q(2), q(0), q(0)}, {q(0), q(1), q(0)}, {q(0), q(0), q(-3)}});

  auto g23 = GradedAlgebra::free(2, 3);
  auto d = system_of(covector_from_json(g23, json{{"212", "3"}, {"112", "1/2"}}), kR2S3);
  CHECK(d.M.is_zero());
  CHECK(d.v == Vec<Rational>{q(3), q(-1, 2)});

  // trace zero in every case
  std::mt19937 rng(5);
  for (int k = 0; k < 20; ++k) {
    auto s = oracle::normal_sample(kR3S3, 1 + k % 9, rng);
    auto sys = system_of(s.lambda, kR3S3);
    CHECK(sys.M(0, 0) + sys.M(1, 1) + sys.M(2, 2) == 0);
    CHECK(sys.M == s.M);
    CHECK(sys.v == s.v);
  }
}

TEST_CASE("preconditions of the affine system") {
  auto g24 = GradedAlgebra::free(2, 4);
  CHECK_THROWS_AS(system_of(DualCovector<Rational>::dual_of(g24, "12"), kR2S4), Error);
  CHECK_THROWS_AS(system_of(DualCovector<Rational>::dual_of(g24, "1"), kR2S4), Error);
  CHECK_THROWS_AS(system_of(DualCovector<Rational>::dual_of(g24, "2112"), kR3S3), Error);
  auto g33 = GradedAlgebra::free(3, 3);
  CHECK_NOTHROW(system_of(DualCovector<Rational>::dual_of(g33, "12"), kR3S3));
  CHECK_THROWS_AS(system_of(DualCovector<Rational>::dual_of(g33, "3"), kR3S3), Error);
  CHECK_THROWS_AS(CaseTag::of(*GradedAlgebra::free(2, 5)), Error);
  CHECK(CaseTag::of(*g33).name() == "r3s3-free");
  CHECK(CaseTag::parse("r2s4").kind == CaseKind::R2S4);
  CHECK_THROWS_AS(CaseTag::parse("r4s2"), Error);
}

TEST_CASE("classification of the displayed examples") {
  auto g24 = GradedAlgebra::free(2, 4);
  CHECK(classify(DualCovector<Rational>::dual_of(g24, "2112"), kR2S4).major == 1);
  CHECK(classify(covector_from_json(g24, json{{"2212", "-1"}, {"1112", "-1"}}), kR2S4).major == 2);
  CHECK(classify(DualCovector<Rational>::dual_of(g24, "2212"), kR2S4).major == 3);
  CHECK(classify(DualCovector<Rational>::dual_of(g24, "212"), kR2S4).major == 4);
  auto g33 = GradedAlgebra::free(3, 3);
  auto l = covector_from_json(g33, json{{"123", "2"}, {"231", "1"}, {"312", "-3"}});
  auto lab = classify(l, kR3S3);
  CHECK(lab.major == 1);
  CHECK(lab.xi == std::vector<int>{2, 3});
  CHECK(lab.minor == 2);
  CHECK(lab.text() == "L1/X2");
  CHECK(classify(DualCovector<Rational>::zero(g33), kR3S3).major == 9);
  CHECK(classify(DualCovector<Rational>::dual_of(GradedAlgebra::free(2, 3), "212"), kR2S3).text() == "line");
}

TEST_CASE("normal forms of the displayed examples") {
  auto g24 = GradedAlgebra::free(2, 4);
  auto a = system_of(DualCovector<Rational>::dual_of(g24, "2112"), kR2S4);
  auto na = normalize(a, classify(a));
  CHECK(na.N == a.M);
  CHECK(na.P == Matrix<Rational>::identity(2));
  CHECK(na.time_scale == 1);

  auto b = system_of(covector_from_json(g24, json{{"2212", "-2"}, {"1112", "-2"}}), kR2S4);
  CHECK(b.M == Matrix<Rational>{{q(0), q(-2)}, {q(2), q(0)}});
  auto nb = normalize(b, classify(b));
  CHECK(nb.N == Matrix<Rational>{{q(0), q(-1)}, {q(1), q(0)}});
  CHECK(nb.time_scale == 2);
  CHECK(nb.Pinv * b.M * nb.P == nb.N * Rational(2));

  auto g33 = GradedAlgebra::free(3, 3);
  Matrix<Rational> J{{q(0), q(1), q(0)}, {q(0), q(0), q(1)}, {q(0), q(0), q(0)}};
  auto P = oracle::random_invertible(3, *std::make_unique<std::mt19937>(3));
  Matrix<Rational> M = P * J * *inverse(P);
  auto c = system_of(oracle::covector_of(kR3S3, M, {q(0), q(0), q(0)}), kR3S3);
  auto lc = classify(c);
  CHECK(lc.major == 7);
  auto nc = normalize(c, lc);
  CHECK(nc.N == J);
  CHECK(nc.defect() == 0);
}

TEST_CASE("sampled normal forms classify, normalize and refine") {
  std::mt19937 rng(11);
  for (const auto& tag : all_cases()) {
    const int lo = oracle::first_stratum(tag);
    for (int major = lo; major < lo + oracle::strata_count(tag); ++major) {
      for (int k = 0; k < 8; ++k) {
        const unsigned mask = k < 2 ? 0u : static_cast<unsigned>(rng() % 8);
        auto s = oracle::normal_sample(tag, major, rng, mask);
        CAPTURE(tag.name());
        CAPTURE(major);
        CAPTURE(mask);
        auto sys = system_of(s.lambda, tag);
        auto lab = classify(sys);
        REQUIRE(lab.major == major);
        CHECK_FALSE(lab.near_boundary);
        REQUIRE(exactly_normalizable(sys, lab));
        auto ns = normalize(sys, lab);
        CHECK(ns.defect() == 0);
        CHECK(ns.Pinv * sys.M * ns.P == ns.N * ns.time_scale);
        auto cb = ns.b;
        for (auto& x : cb) x *= ns.time_scale;
        CHECK(ns.P * cb == sys.v);
        if (tag.kind == CaseKind::R2S4) CHECK(ns.N == s.N);
        const auto& ref_b = oracle::xi_choice_free(tag, major) ? s.b : ns.b;
        CHECK(lab.xi == oracle::expected_xi(tag, major, oracle::zero_pattern(ref_b)));
        if (!lab.xi.empty()) CHECK(lab.minor == lab.xi.front());
        // positive rescaling keeps the label
        CHECK(classify(Rational(7, 3) * s.lambda, tag) == lab);
        // float classification agrees
        auto fl = classify(covector_cast<double>(s.lambda), tag);
        CHECK(fl == lab);
        auto nf = normalize_numeric(sys, lab);
        CHECK(nf.defect() <= 1e-9);
      }
    }
  }
}

TEST_CASE("rank-3 normal matrices match their parameters") {
  std::mt19937 rng(4);
  for (int major : {1, 2, 3}) {
    auto s = oracle::normal_sample(kR3S3, major, rng);
    auto sys = system_of(s.lambda, kR3S3);
    auto ns = normalize(sys, classify(sys));
    // same spectrum as the manufactured form, possibly after rescaling time
    Matrix<Rational> a = ns.N * ns.time_scale, b = s.N * s.c;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(abs(a(i, j)) == abs(b(i, j)));
    CHECK(a(0, 0) == b(0, 0));
    CHECK(a(2, 2) == b(2, 2));
  }
}

TEST_CASE("irrational spectra are refined through invariant subspaces") {
  std::mt19937 rng(21);
  struct Case {
    CaseTag tag;
    Matrix<Rational> block;  // rational canonical block
    int major;
  };
  const Rational z(0), o(1);
  std::vector<Case> cases = {
      {kR2S4, {{q(1), q(1)}, {q(1), q(-1)}}, 1},
      {kR2S4, {{z, q(-2)}, {o, z}}, 2},
      {kR3S3, {{z, -o, z}, {o, q(3), z}, {z, z, q(-3)}}, 1},
      {kR3S3, {{z, q(-3), z}, {o, q(2), z}, {z, z, q(-2)}}, 3},
      {kR3S3, {{z, q(2), z}, {o, z, z}, {z, z, z}}, 5},
      {kR3S3, {{z, q(-2), z}, {o, z, z}, {z, z, z}}, 6},
  };
  for (const auto& c : cases) {
    const int r = c.tag.rank();
    for (int k = 0; k < 12; ++k) {
      auto P = oracle::random_invertible(r, rng);
      Matrix<Rational> M = P * c.block * *inverse(P);
      // drift inside a rational invariant subspace, or generic
      Vec<Rational> w(r, Rational(0));
      const int kind = k % 4;
      for (int i = 0; i < r; ++i) {
        if (kind == 0) w[i] = testutil::rq(rng);
        if (kind == 1 && i < 2) w[i] = testutil::rq(rng);
        if (kind == 2 && i == r - 1) w[i] = testutil::rq(rng);
      }
      Vec<Rational> v = P * w;
      auto l = oracle::covector_of(c.tag, M, v);
      auto sys = system_of(l, c.tag);
      auto lab = classify(sys);
      CAPTURE(c.major);
      CAPTURE(kind);
      REQUIRE(lab.major == c.major);
      CHECK_FALSE(exactly_normalizable(sys, lab));
      CHECK_THROWS_AS(normalize(sys, lab), Error);
      auto nf = normalize_numeric(sys, lab);
      CHECK(nf.defect() <= 1e-9);
      std::vector<bool> zero;
      for (double x : nf.b) zero.push_back(std::fabs(x) <= 1e-9 * std::max(1.0, sup(nf.b)));
      CHECK(lab.xi == oracle::expected_xi(c.tag, c.major, zero));
      CHECK(classify(covector_cast<double>(l), c.tag).xi == lab.xi);
    }
  }
}

TEST_CASE("boundary covectors in float mode") {
  auto g24 = GradedAlgebra::free(2, 4);
  auto l = covector_from_json(g24, json{{"2212", "1"}, {"1112", "0"}});
  auto d = covector_cast<double>(l);
  d.coords()[*g24->index_of("1112")] = 1e-13;
  auto lab = classify(d, kR2S4);
  CHECK(lab.major == 3);
  CHECK(lab.near_boundary);
  d.coords()[*g24->index_of("1112")] = 1e-3;
  CHECK(classify(d, kR2S4).major == 2);
  CHECK_FALSE(classify(d, kR2S4).near_boundary);
}

TEST_CASE("closed-form trajectories solve the ODE") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> tau(-1.5, 1.5), zz(-1, 1);
  for (const auto& tag : all_cases()) {
    const int lo = oracle::first_stratum(tag);
    for (int major = lo; major < lo + oracle::strata_count(tag); ++major) {
      for (int k = 0; k < 3; ++k) {
        auto s = oracle::normal_sample(tag, major, rng, k == 2 ? 1u : 0u);
        auto sys = system_of(s.lambda, tag);
        auto ns = normalize(system_of(covector_cast<double>(s.lambda), tag), classify(sys));
        Vec<double> z0(tag.rank());
        for (auto& x : z0) x = zz(rng);
        auto tr = trajectory(ns, z0);
        CHECK(dist(tr(0), z0) <= 1e-14);
        double worst = 0, worst_fd = 0;
        for (int j = 0; j < 100; ++j) {
          const double t = tau(rng);
          const auto ref = oracle::flow_by_expm(ns.N, ns.b, z0, t);
          worst = std::max(worst, dist(tr(t), ref) / std::max(1.0, sup(ref)));
          const double h = 1e-5;
          Vec<double> fd(z0.size());
          const auto p = tr(t + h), m = tr(t - h);
          for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = (p[i] - m[i]) / (2 * h);
          worst_fd = std::max(worst_fd, dist(fd, tr.velocity(t)) / std::max(1.0, sup(fd)));
        }
        CAPTURE(tag.name());
        CAPTURE(major);
        CHECK(worst <= 1e-10);
        CHECK(worst_fd <= 1e-7);
      }
    }
  }
}

TEST_CASE("displayed trajectories") {
  auto g24 = GradedAlgebra::free(2, 4);
  // Lambda_1 with b = (1,1)
  auto l1 = oracle::covector_of(kR2S4, {{q(1), q(0)}, {q(0), q(-1)}}, {q(1), q(1)});
  auto s1 = system_of(covector_cast<double>(l1), kR2S4);
  auto n1 = normalize(s1, classify(s1));
  auto t1 = trajectory(n1, {0, 0});
  for (double t : {0.3, 1.0, 2.5}) CHECK(dist(t1(t), {std::exp(t) - 1, 1 - std::exp(-t)}) <= 1e-12);
  // Lambda_2 from the origin: circle through 0 about (-b2, b1)
  auto l2 = oracle::covector_of(kR2S4, {{q(0), q(-1)}, {q(1), q(0)}}, {q(2), q(-1)});
  auto s2 = system_of(covector_cast<double>(l2), kR2S4);
  auto n2 = normalize(s2, classify(s2));
  auto t2 = trajectory(n2, {0, 0});
  const Vec<double> centre{-n2.b[1], n2.b[0]};
  for (double t : {0.4, 1.7, 3.0}) {
    auto p = t2(t);
    CHECK(std::hypot(p[0] - centre[0], p[1] - centre[1]) == doctest::Approx(std::hypot(centre[0], centre[1])));
  }
  CHECK(dist(t2(2 * std::numbers::pi), {0, 0}) <= 1e-12);
  // Lambda_3 parabola
  auto l3 = oracle::covector_of(kR2S4, {{q(0), q(1)}, {q(0), q(0)}}, {q(3), q(2)});
  auto s3 = system_of(covector_cast<double>(l3), kR2S4);
  auto n3 = normalize(s3, classify(s3));
  CHECK(n3.b == Vec<double>{3, 2});
  auto t3 = trajectory(n3, {0, 0});
  for (double t : {0.5, 2.0}) CHECK(dist(t3(t), {2 * t * t / 2 + 3 * t, 2 * t}) <= 1e-12);
}

TEST_CASE("equilibrium sets") {
  auto eq = [](const CaseTag& tag, const Matrix<Rational>& M, const Vec<Rational>& v) {
    auto sys = system_of(oracle::covector_of(tag, M, v), tag);
    auto ns = normalize(sys, classify(sys));
    return std::make_pair(ns, equilibria(ns));
  };
  using K = EquilibriumSet<Rational>::Kind;
  {
    auto [ns, e] = eq(kR2S4, {{q(1), q(0)}, {q(0), q(-1)}}, {q(2), q(3)});
    CHECK(e.kind == K::Point);
    CHECK(e.point == Vec<Rational>{-2, 3});
  }
  {
    auto [ns, e] = eq(kR2S4, {{q(0), q(1)}, {q(0), q(0)}}, {q(5), q(0)});
    CHECK(e.kind == K::Line);
    CHECK(e.point == Vec<Rational>{0, -5});
    CHECK(e.contains({q(7), q(-5)}));
    CHECK_FALSE(e.contains({q(7), q(5)}));
  }
  {
    auto [ns, e] = eq(kR2S4, {{q(0), q(1)}, {q(0), q(0)}}, {q(5), q(1)});
    CHECK(e.kind == K::None);
  }
  {
    auto [ns, e] = eq(kR3S3, {{q(0), q(1), q(0)}, {q(0), q(0), q(0)}, {q(0), q(0), q(0)}}, {q(0), q(0), q(0)});
    CHECK(e.kind == K::Plane);
    for (const auto& d : e.directions) CHECK(is_zero_vec(ns.N * d));
  }
  std::mt19937 rng(2);
  for (int major = 1; major <= 9; ++major) {
    auto s = oracle::normal_sample(kR3S3, major, rng, 4u);
    auto sys = system_of(s.lambda, kR3S3);
    auto ns = normalize(sys, classify(sys));
    auto e = equilibria(ns);
    if (e.kind == K::None) continue;
    CHECK(is_zero_vec(residual_of(ns, e.point)));
    CHECK(e.directions.size() == nullspace(ns.N).size());
  }
}

TEST_CASE("limits of closed forms") {
  auto l = oracle::covector_of(kR2S4, {{q(1), q(0)}, {q(0), q(-1)}}, {q(0), q(2)});
  auto s = system_of(covector_cast<double>(l), kR2S4);
  auto ns = normalize(s, classify(s));
  auto tr = trajectory(ns, {0, 0});
  auto lim = tr.limit(1);
  REQUIRE(lim);
  CHECK(dist(*lim, {0, 2}) <= 1e-15);
  CHECK_FALSE(tr.limit(-1));
  CHECK_FALSE(trajectory(ns, {1, 0}).limit(1));
  auto back = trajectory(ns, {1, 2}).limit(-1);
  REQUIRE(back);
  CHECK(dist(*back, {0, 2}) <= 1e-15);
}

TEST_CASE("exact concatenations certify polynomial strata") {
  std::mt19937 rng(17);
  for (const auto& tag : all_cases()) {
    const int lo = oracle::first_stratum(tag);
    for (int major = lo; major < lo + oracle::strata_count(tag); ++major) {
      if (!oracle::polynomial_major(tag, major)) continue;
      for (int k = 0; k < 3; ++k) {
        auto s = oracle::normal_sample(tag, major, rng, k == 1 ? 1u : 0u);
        auto sys = system_of(s.lambda, tag);
        auto ns = normalize(sys, classify(sys));
        ConcatenationPlan<Rational> plan;
        plan.legs = {PlanLeg<Rational>::flow(q(1)), PlanLeg<Rational>::flow(q(-1, 3))};
        auto path = concatenate(ns, plan);
        CHECK(path.control.total() == 1);
        CHECK_FALSE(path.sampled);
        CAPTURE(tag.name());
        CAPTURE(major);
        CHECK(annihilates(s.lambda, path.control));
        CHECK(kernel_residual(path.control, s.lambda, 5).identically_zero);
        auto lp = lift(path, s.lambda.algebra());
        CHECK(lp.points.front().is_zero());
        CHECK(lp.points.back() == endpoint(path.control, s.lambda.algebra()));
      }
    }
  }
}

TEST_CASE("trees through planes of equilibria") {
  auto g33 = GradedAlgebra::free(3, 3);
  auto l = DualCovector<Rational>::dual_of(g33, "223");
  auto sys = system_of(l, kR3S3);
  auto lab = classify(sys);
  CHECK(lab.text() == "L8/X22");
  auto ns = normalize(sys, lab);
  ConcatenationPlan<Rational> plan;
  plan.legs = {PlanLeg<Rational>::along({q(1), q(0), q(0)}), PlanLeg<Rational>::along({q(1), q(0), q(2)}),
               PlanLeg<Rational>::along({q(-1), q(0), q(1)}), PlanLeg<Rational>::along({q(0), q(0), q(0)})};
  auto path = concatenate(ns, plan);
  CHECK(path.switch_points.size() == 4);
  for (const auto& p : path.switch_points) CHECK(is_zero_vec(residual_of(ns, p)));
  CHECK(annihilates(l, path.control));
  // off the plane the switch is refused
  plan.legs = {PlanLeg<Rational>::along({q(1), q(1), q(0)})};
  CHECK_THROWS_WITH_AS(concatenate(ns, plan), doctest::Contains("not an equilibrium"), Error);
}

TEST_CASE("switching away from equilibria is refused") {
  auto l = oracle::covector_of(kR2S4, {{q(0), q(1)}, {q(0), q(0)}}, {q(1), q(1)});
  auto sys = system_of(l, kR2S4);
  auto ns = normalize(sys, classify(sys));
  ConcatenationPlan<Rational> plan;
  plan.legs = {PlanLeg<Rational>::flow(q(1)), PlanLeg<Rational>::along({q(0), q(0)})};
  CHECK_THROWS_WITH_AS(concatenate(ns, plan), doctest::Contains("switch requested at a non-equilibrium point"), Error);
  plan.legs = {PlanLeg<Rational>::approach(1)};
  CHECK_THROWS_AS(concatenate(ns, plan), Error);
  auto nd = normalize(system_of(covector_cast<double>(l), kR2S4), classify(sys));
  ConcatenationPlan<double> pd;
  pd.legs = {PlanLeg<double>::approach(1)};
  CHECK_THROWS_WITH_AS(concatenate(nd, pd), doctest::Contains("does not approach"), Error);
}

TEST_CASE("axis-and-line path through the saddle equilibrium") {
  // Lambda_1 with b_1 = 0: up the z2-axis to (0, b2), then out along z2 = b2
  auto l = oracle::covector_of(kR2S4, {{q(1), q(0)}, {q(0), q(-1)}}, {q(0), q(3, 2)});
  auto sys = system_of(l, kR2S4);
  auto lab = classify(sys);
  CHECK(lab.xi == std::vector<int>{2});
  auto ns = normalize(system_of(covector_cast<double>(l), kR2S4), lab);
  ConcatenationPlan<double> plan;
  plan.legs = {PlanLeg<double>::approach(1), PlanLeg<double>::depart({1, 1.5}, -1, 0.25)};
  auto path = concatenate(ns, plan);
  CHECK(path.sampled);
  REQUIRE(path.switch_points.size() == 1);
  CHECK(dist(path.switch_points[0], {0, 1.5}) <= 1e-12);
  CHECK(sup(residual_of(ns, path.switch_points[0])) <= 1e-12);
  CHECK(path.tail_bound <= 1e-11);
  // the primitive lies on the axis, then on the horizontal line
  auto prim = path.primitive();
  for (const auto& piece : prim.pieces()) {
    const double x0 = piece.poly[0](0), y0 = piece.poly[1](0);
    CHECK((std::fabs(x0) <= 1e-12 || std::fabs(y0 - 1.5) <= 1e-12));
  }
  auto end = prim(prim.total());
  CHECK(dist(end, {std::exp(0.25), 1.5}) <= 1e-10);
  auto kr = kernel_residual(path.control, covector_cast<double>(l), 257);
  CHECK(kr.value <= 1e-2);
}

TEST_CASE("tree path through two planes") {
  // Lambda_5 with b_1 = b_3 = 0: approach (0, b2, 0), slide along the line of
  // equilibria, leave along the unstable direction
  auto l = oracle::covector_of(kR3S3, {{q(1), q(0), q(0)}, {q(0), q(-1), q(0)}, {q(0), q(0), q(0)}}, {q(0), q(2), q(0)});
  auto sys = system_of(l, kR3S3);
  auto lab = classify(sys);
  CHECK(lab.xi == std::vector<int>{9});
  auto ns = normalize(system_of(covector_cast<double>(l), kR3S3), lab);
  ConcatenationPlan<double> plan;
  plan.legs = {PlanLeg<double>::approach(1), PlanLeg<double>::along({0, 2, 1}),
               PlanLeg<double>::depart({1, 2, 1}, -1, 0.5)};
  auto path = concatenate(ns, plan);
  REQUIRE(path.switch_points.size() == 2);
  for (const auto& p : path.switch_points) CHECK(sup(residual_of(ns, p)) <= 1e-12);
  auto prim = path.primitive();
  CHECK(dist(prim(prim.total()), {std::exp(0.5), 2, 1}) <= 1e-10);
}

TEST_CASE("sampled exponential strata converge as the step is halved") {
  std::mt19937 rng(29);
  std::vector<std::pair<CaseTag, int>> strata = {{kR2S4, 1}, {kR2S4, 2}, {kR3S3, 1}, {kR3S3, 2},
                                                  {kR3S3, 3}, {kR3S3, 4}, {kR3S3, 5}, {kR3S3, 6}};
  for (const auto& [tag, major] : strata) {
    auto s = oracle::normal_sample(tag, major, rng);
    auto sys = system_of(s.lambda, tag);
    auto ld = covector_cast<double>(s.lambda);
    auto ns = normalize(system_of(ld, tag), classify(sys));
    // about one unit of the fastest rate, a power of two so the steps nest
    double rate = 1;
    for (int i = 0; i < ns.dim(); ++i)
      for (int j = 0; j < ns.dim(); ++j) rate = std::max(rate, std::fabs(ns.N(i, j)));
    rate = std::exp2(std::ceil(std::log2(rate)));
    std::vector<double> res;
    for (int e = 4; e <= 8; ++e) {
      ConcatenationPlan<double> plan;
      plan.legs = {PlanLeg<double>::flow(1.0 / rate)};
      plan.step = std::ldexp(1.0, -e);
      auto path = concatenate(ns, plan);
      res.push_back(kernel_residual(path.control, ld, 257).value);
    }
    CAPTURE(tag.name());
    CAPTURE(major);
    // the chord kinks at the vertices make the residual first order: each halving
    // divides it by about 2 (rank 2: the kink is invisible to the Pfaffian, so 4)
    for (std::size_t i = 1; i < res.size(); ++i)
      if (res[i] > 1e-10) CHECK(res[i - 1] / res[i] >= 1.9);
  }
}

TEST_CASE("line primitives in rank 2 step 3") {
  std::mt19937 rng(31);
  auto g = GradedAlgebra::free(2, 3);
  for (int k = 0; k < 10; ++k) {
    const Rational a = testutil::rq(rng), b = testutil::rq(rng);
    if (a == 0 && b == 0) continue;
    auto l = covector_from_json(g, json{{"212", format_rational(a)}, {"112", format_rational(b)}});
    auto sys = system_of(l, kR2S3);
    auto ns = normalize(sys, classify(sys));
    ConcatenationPlan<Rational> plan;
    plan.legs = {PlanLeg<Rational>::flow(q(1))};
    auto lp = lift(concatenate(ns, plan), g);
    auto expect = LieVector<Rational>::zero(g);
    expect.coords()[0] = a;
    expect.coords()[1] = -b;
    CHECK(lp.points.back() == expect);
    CHECK(annihilates(l, lp.control));
  }
}

TEST_CASE("zero primitive lifts to the identity") {
  auto g = GradedAlgebra::free(3, 3);
  ConcatenatedPath<Rational> path;
  path.control = PolyControl<Rational>::constant({0, 0, 0}, 1);
  auto lp = lift(path, g);
  for (const auto& p : lp.points) CHECK(p.is_zero());
  CHECK_THROWS_AS(lift(path, GradedAlgebra::free(2, 3)), Error);
}

TEST_CASE("codimension tables") {
  auto r23 = codim_report(kR2S3);
  CHECK(r23.matches());
  CHECK(r23.overall == 3);
  auto r24 = codim_report(kR2S4);
  CHECK(r24.matches());
  for (const auto& b : r24.stratum_bound) CHECK(b == 3);
  CHECK(r24.overall == 3);
  auto r33 = codim_report(CaseTag{CaseKind::R3S3, false});
  CHECK(r33.matches());
  std::vector<std::optional<int>> want{2, 2, 2, 2, 2, 3, 3, 1, 2};
  CHECK(r33.stratum_bound == want);
  CHECK(r33.overall == 1);
  auto rf = codim_report(kR3S3);
  CHECK(rf.matches());
  std::vector<std::optional<int>> wantf{3, 4, 3, 4, 3, 4, 5, std::nullopt, 11};
  for (std::size_t k = 0; k < wantf.size(); ++k)
    if (wantf[k]) CHECK(rf.stratum_bound[k] == wantf[k]);
  CHECK(rf.overall == 3);
  CHECK(rf.to_json()["overall"] == 3);
  CHECK(rf.text().find("overall codimension >= 3") != std::string::npos);
  // every Lambda/Xi pair has a row
  for (int major = 1; major <= 9; ++major) {
    bool found = false;
    for (const auto& row : rf.rows) found = found || row.lambda == major;
    CHECK(found);
  }
}

TEST_CASE("one-dimensional second layer splits off a line") {
  json h = {{"rank", 3},
            {"step", 3},
            {"layers", {{"1", "2", "3"}, {"12"}, {"112", "212"}}},
            {"structure",
             {{{"i", "1"}, {"j", "2"}, {"out", {{"12", "1"}}}},
              {{"i", "1"}, {"j", "12"}, {"out", {{"112", "1"}}}},
              {{"i", "2"}, {"j", "12"}, {"out", {{"212", "1"}}}}}}};
  auto d = product_decomposition(*GradedAlgebra::from_json(h));
  CHECK(d.applies);
  CHECK_FALSE(d.engel);
  CHECK(d.central == Vec<Rational>{0, 0, 1});
  CHECK(d.codim == 3);
  CHECK(d.abn == "exp(span{X1,X2}) x R");

  json e = {{"rank", 3},
            {"step", 3},
            {"layers", {{"1", "2", "3"}, {"12"}, {"112"}}},
            {"structure", {{{"i", "1"}, {"j", "2"}, {"out", {{"12", "1"}}}}, {{"i", "1"}, {"j", "12"}, {"out", {{"112", "1"}}}}}}};
  auto de = product_decomposition(*GradedAlgebra::from_json(e));
  CHECK(de.applies);
  CHECK(de.engel);
  CHECK(de.engel_direction == Vec<Rational>{0, 1, 0});
  CHECK(de.abn == "exp(span{Y}) x R");

  json t = {{"rank", 3},
            {"step", 3},
            {"layers", {{"1", "2", "3"}, {"13"}, {"113", "313"}}},
            {"structure",
             {{{"i", "1"}, {"j", "3"}, {"out", {{"13", "1"}}}},
              {{"i", "2"}, {"j", "3"}, {"out", {{"13", "1"}}}},
              {{"i", "1"}, {"j", "13"}, {"out", {{"113", "1"}}}},
              {{"i", "2"}, {"j", "13"}, {"out", {{"113", "1"}}}},
              {{"i", "3"}, {"j", "13"}, {"out", {{"313", "1"}}}}}}};
  auto dt = product_decomposition(*GradedAlgebra::from_json(t));
  CHECK(dt.applies);
  CHECK(dt.central == Vec<Rational>{1, -1, 0});
  // the central direction really is central
  auto alg = GradedAlgebra::from_json(t);
  for (std::size_t i = 0; i < alg->dim(); ++i) {
    Vec<Rational> c(alg->dim(), Rational(0));
    c[0] = 1;
    c[1] = -1;
    CHECK(is_zero_vec(alg->bracket(c, alg->unit(i))));
  }
  CHECK_FALSE(product_decomposition(*GradedAlgebra::free(3, 3)).applies);
  CHECK_FALSE(product_decomposition(*GradedAlgebra::free(2, 3)).applies);
}

TEST_CASE("catalog fixtures") {
  auto cat = catalog_examples();
  REQUIRE(cat.size() == 4);
  for (const auto& e : cat) {
    CAPTURE(e.id);
    auto img = image_of_differential(e.control, e.alg);
    CHECK(img.rank <= e.max_image_rank);
    CHECK(img.rank < e.alg->dim());
    CHECK(annihilates(e.lambda, e.control));
    CHECK(kernel_residual(e.control, e.lambda, 11).identically_zero);
  }
  CHECK(cat[0].id == "ex2");
  CHECK(cat[0].stratum.major == 5);
  CHECK(cat[0].stratum.xi == std::vector<int>{9, 10});
  CHECK(cat[0].lambda.value("123") == 1);
  CHECK(cat[0].lambda.value("231") == -1);
  CHECK(cat[0].lambda.value("213") == 1);
  CHECK(image_of_differential(cat[0].control, cat[0].alg).rank - 3 <= 9);
  CHECK(cat[1].stratum.text() == "L8/X22");
  CHECK(cat[2].stratum.text() == "L8/X22");
  CHECK(cat[3].stratum.text() == "L3/X7");
  auto gk = system_of(cat[3].lambda, kR2S4);
  auto ns = normalize(gk, cat[3].stratum);
  CHECK(ns.P == Matrix<Rational>::identity(2));
  CHECK(ns.b == Vec<Rational>{0, 1});
  // the catalog parabola is the Lambda_3 flow from the origin
  ConcatenationPlan<Rational> plan;
  plan.legs = {PlanLeg<Rational>::flow(q(1))};
  auto path = concatenate(ns, plan);
  CHECK(path.control.pieces()[0].poly == cat[3].control.pieces()[0].poly);
}

TEST_CASE("batch classification keeps input order") {
  std::mt19937 rng(41);
  std::vector<DualCovector<Rational>> ls;
  std::vector<StratumLabel> seq;
  for (int k = 0; k < 40; ++k) {
    auto s = oracle::normal_sample(kR3S3, 1 + k % 9, rng, static_cast<unsigned>(k % 8));
    ls.push_back(s.lambda);
    seq.push_back(classify(s.lambda, kR3S3));
  }
  auto par = classify_batch(ls, kR3S3);
  REQUIRE(par.size() == seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(par[i] == seq[i]);
}

TEST_CASE("stratum reports serialize") {
  auto g24 = GradedAlgebra::free(2, 4);
  auto l = covector_from_json(g24, json{{"2212", "1"}, {"112", "-1"}});
  auto sys = system_of(l, kR2S4);
  auto lab = classify(sys);
  auto j = lab.to_json();
  CHECK(j["Lambda"] == 3);
  CHECK(j["Xi"] == 7);
  auto nj = normalize(sys, lab).to_json();
  CHECK(nj["b"] == json::array({"0", "1"}));
  CHECK(nj["N"] == json::array({json::array({"0", "1"}), json::array({"0", "0"})}));
  auto ej = equilibria(normalize(sys, lab)).to_json();
  CHECK(ej["kind"] == "none");
}
