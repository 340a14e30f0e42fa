#include <cmath>
#include <sstream>

#include "carnot/strata.hpp"

namespace carnot {

namespace {

struct RowSpec {
  int lambda;
  int xi;  // 0 when the stratum is not refined
  int constraints;
  int reach_dim;
  const char* reach;
};

// Covector constraints inside g3* (or g3* x g4*) against the dimension of the
// swept family of singular curves; Lambda_0 is the unstratified (2,3) line.
const std::vector<RowSpec> kR2S3 = {{0, 0, 4, 1, "lines exp(t v)"}};

const std::vector<RowSpec> kR2S4 = {
    {1, 1, 4, 1, "hyperbola branches through equilibria"}, {1, 2, 4, 1, "axis and horizontal line"},
    {1, 3, 4, 1, "axis and vertical line"},                {2, 4, 4, 0, "circles about the origin"},
    {2, 5, 4, 1, "circles through the origin"},            {2, 6, 4, 1, "circles through the origin"},
    {3, 7, 4, 1, "parabolas"},                             {3, 8, 4, 1, "lines of equilibria"},
    {3, 9, 5, 1, "lines of equilibria"},                   {4, 0, 4, 1, "parallel lines"},
};

const std::vector<RowSpec> kR3S3 = {
    {1, 1, 4, 1, "curves to the equilibrium point"},  {1, 2, 4, 2, "invariant plane"},
    {1, 3, 4, 2, "invariant plane"},                  {2, 0, 4, 2, "invariant plane"},
    {3, 4, 4, 1, "spirals to the equilibrium point"}, {3, 5, 4, 2, "spiral plane"},
    {3, 6, 4, 2, "spiral plane"},                     {4, 0, 4, 2, "Jordan plane"},
    {5, 7, 4, 1, "line of equilibria"},               {5, 8, 4, 1, "hyperbolas in a plane"},
    {5, 9, 4, 2, "tree in two planes"},               {5, 10, 4, 2, "tree in two planes"},
    {6, 11, 4, 1, "helices"},                         {6, 12, 4, 1, "circles"},
    {6, 13, 4, 1, "circles"},                         {6, 14, 5, 1, "circles about the axis"},
    {7, 15, 4, 1, "cubic curves"},                    {7, 16, 4, 1, "parabolas"},
    {7, 17, 4, 1, "parabolas"},                       {7, 18, 5, 1, "parabolas"},
    {8, 19, 4, 1, "parabolic cylinders"},             {8, 20, 4, 1, "parabolic cylinders"},
    {8, 21, 4, 1, "plane of equilibria"},             {8, 22, 6, 5, "Lipschitz curves in a plane"},
    {9, 0, 4, 2, "straight lines"},
};

const std::vector<RowSpec> kR3S3Free = {
    {1, 1, 4, 1, "curves to the equilibrium point"},  {1, 2, 5, 2, "invariant plane"},
    {1, 3, 6, 2, "invariant plane"},                  {2, 0, 6, 2, "invariant plane"},
    {3, 4, 4, 1, "spirals to the equilibrium point"}, {3, 5, 6, 2, "spiral plane"},
    {3, 6, 5, 2, "spiral plane"},                     {4, 0, 6, 2, "Jordan plane"},
    {5, 7, 5, 1, "line of equilibria"},               {5, 8, 6, 1, "hyperbolas in a plane"},
    {5, 9, 7, 4, "tree in two planes"},               {5, 10, 7, 4, "tree in two planes"},
    {6, 11, 5, 1, "helices"},                         {6, 12, 6, 1, "circles"},
    {6, 13, 6, 1, "circles"},                         {6, 14, 8, 1, "circles about the axis"},
    {7, 15, 6, 1, "cubic curves"},                    {7, 16, 7, 1, "parabolas"},
    {7, 17, 7, 1, "parabolas"},                       {7, 18, 9, 1, "parabolas"},
    {8, 19, 4, 1, "parabolic cylinders"},             {8, 20, 4, 1, "parabolic cylinders"},
    {8, 21, 4, 1, "plane of equilibria"},             {8, 22, 9, 5, "Lipschitz curves in a plane"},
    {9, 0, 12, 1, "exp(g1)"},
};

std::optional<int> opt(int x) { return x < 0 ? std::nullopt : std::optional<int>(x); }

}  // namespace

CodimTable codim_report(const CaseTag& tag) {
  CodimTable t;
  t.tag = tag;
  const std::vector<RowSpec>* rows = nullptr;
  std::vector<int> expected;
  switch (tag.kind) {
    case CaseKind::R2S3:
      rows = &kR2S3;
      expected = {3};
      t.expected_overall = 3;
      break;
    case CaseKind::R2S4:
      rows = &kR2S4;
      expected = {3, 3, 3, 3};
      t.expected_overall = 3;
      break;
    case CaseKind::R3S3:
      if (tag.free) {
        rows = &kR3S3Free;
        expected = {3, 4, 3, 4, 3, 4, 5, -1, 11};
        t.expected_overall = 3;
      } else {
        rows = &kR3S3;
        expected = {2, 2, 2, 2, 2, 3, 3, 1, 2};
        t.expected_overall = 1;
      }
      break;
  }
  for (int e : expected) t.expected.push_back(opt(e));
  t.stratum_bound.assign(expected.size(), std::nullopt);
  for (const auto& r : *rows) {
    CodimRow row{r.lambda, r.xi ? std::optional<int>(r.xi) : std::nullopt, r.constraints, r.reach_dim, r.reach};
    const std::size_t k = r.lambda == 0 ? 0 : r.lambda - 1;
    auto& b = t.stratum_bound[k];
    b = b ? std::min(*b, row.bound()) : row.bound();
    t.rows.push_back(std::move(row));
  }
  t.overall = *t.stratum_bound.front();
  for (const auto& b : t.stratum_bound) t.overall = std::min(t.overall, *b);
  for (std::size_t k = 0; k < expected.size(); ++k) {
    if (!t.expected[k]) continue;
    if (t.stratum_bound[k] != t.expected[k])
      t.discrepancies.push_back("L" + std::to_string(k + 1) + ": computed " + std::to_string(*t.stratum_bound[k]) +
                                ", expected " + std::to_string(*t.expected[k]));
  }
  if (t.overall != t.expected_overall)
    t.discrepancies.push_back("overall: computed " + std::to_string(t.overall) + ", expected " +
                              std::to_string(t.expected_overall));
  return t;
}

json CodimTable::to_json() const {
  json j;
  j["case"] = tag.name();
  j["rows"] = json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"Lambda", r.lambda},
                         {"Xi", r.xi ? json(*r.xi) : json(nullptr)},
                         {"constraints", r.constraints},
                         {"reach_dim", r.reach_dim},
                         {"reach", r.reach},
                         {"bound", r.bound()}});
  }
  j["strata"] = json::array();
  for (std::size_t k = 0; k < stratum_bound.size(); ++k) {
    j["strata"].push_back({{"Lambda", tag.kind == CaseKind::R2S3 ? 0 : static_cast<int>(k + 1)},
                           {"bound", stratum_bound[k] ? json(*stratum_bound[k]) : json(nullptr)},
                           {"expected", expected[k] ? json(*expected[k]) : json(nullptr)}});
  }
  j["overall"] = overall;
  j["expected_overall"] = expected_overall;
  j["matches"] = matches();
  j["discrepancies"] = discrepancies;
  return j;
}

std::string CodimTable::text() const {
  std::ostringstream os;
  os << "case " << tag.name() << "\n";
  os << "stratum  constraints  reach  bound  swept set\n";
  for (const auto& r : rows) {
    std::string lab = r.lambda == 0 ? "line" : "L" + std::to_string(r.lambda);
    if (r.xi) lab += "/X" + std::to_string(*r.xi);
    os << lab << std::string(lab.size() < 9 ? 9 - lab.size() : 1, ' ') << r.constraints << "            "
       << r.reach_dim << "      " << r.bound() << (r.bound() < 10 ? "      " : "     ") << r.reach << "\n";
  }
  os << "per stratum:";
  for (std::size_t k = 0; k < stratum_bound.size(); ++k) {
    os << " " << (stratum_bound[k] ? std::to_string(*stratum_bound[k]) : "-");
    if (expected[k] && expected[k] != stratum_bound[k]) os << "(expected " << *expected[k] << ")";
  }
  os << "\noverall codimension >= " << overall << (matches() ? "" : " MISMATCH") << "\n";
  for (const auto& d : discrepancies) os << "  " << d << "\n";
  return os.str();
}

ProductDecomposition product_decomposition(const GradedAlgebra& alg) {
  ProductDecomposition d;
  if (alg.rank() != 3 || alg.step() != 3 || alg.layer_dims()[1] != 1) return d;
  const std::size_t z = alg.layer_offset(2);
  Matrix<Rational> B(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) B(i, j) = alg.bracket(alg.unit(i), alg.unit(j))[z];
  auto ker = nullspace(B);
  if (ker.size() != 1) return d;
  d.applies = true;
  d.central = primitive_integer_vector(ker[0]);
  const std::size_t g3 = alg.layer_dims()[2];
  if (g3 == 2) {
    d.abn = "exp(span{X1,X2}) x R";
  } else {
    const std::size_t w = alg.layer_offset(3);
    Matrix<Rational> psi(1, 3);
    for (std::size_t i = 0; i < 3; ++i) psi(0, i) = alg.bracket(alg.unit(i), alg.unit(z))[w];
    for (const auto& y : nullspace(psi)) {
      if (rank(Matrix<Rational>::from_columns({d.central, y}, 3)) == 2) {
        d.engel_direction = primitive_integer_vector(y);
        break;
      }
    }
    if (d.engel_direction.empty()) throw Error(ErrorKind::Inconsistent, "no Engel direction outside the centre");
    d.engel = true;
    d.abn = "exp(span{Y}) x R";
  }
  d.codim = 3;
  return d;
}

namespace {

PolyControl<Rational> piecewise_constant(int rank, const std::vector<std::pair<Vec<Rational>, Rational>>& legs) {
  std::vector<ControlPiece<Rational>> pieces;
  for (const auto& [v, dur] : legs) {
    ControlPiece<Rational> p{dur, {}};
    for (const auto& x : v) p.poly.push_back(Polynomial<Rational>::constant(x));
    pieces.push_back(std::move(p));
  }
  return PolyControl<Rational>(rank, std::move(pieces));
}

/// Polygon through the given vertices, each edge traversed at constant speed over the given time.
PolyControl<Rational> polygon(int rank, const std::vector<Vec<Rational>>& pts, const std::vector<Rational>& times) {
  std::vector<std::pair<Vec<Rational>, Rational>> legs;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const Rational dt = times[k] - times[k - 1];
    Vec<Rational> v(rank);
    for (int i = 0; i < rank; ++i) v[i] = (pts[k][i] - pts[k - 1][i]) / dt;
    legs.emplace_back(std::move(v), dt);
  }
  return piecewise_constant(rank, legs);
}

Rational qr(long a, long b = 1) {
  Rational q(a, b);
  q.canonicalize();
  return q;
}

}  // namespace

std::vector<CatalogEntry> catalog_examples() {
  std::vector<CatalogEntry> out;
  const auto f33 = GradedAlgebra::free(3, 3);
  const CaseTag r3{CaseKind::R3S3, true};

  {
    CatalogEntry e;
    e.id = "ex2";
    e.description = "three coordinate-axis segments in free(3,3), each swept and retraced";
    e.alg = f33;
    std::vector<std::pair<Vec<Rational>, Rational>> legs;
    for (int a : {1, -1, 2, -2, 3, -3}) {
      Vec<Rational> v(3, Rational(0));
      v[std::abs(a) - 1] = a > 0 ? 1 : -1;
      legs.emplace_back(v, qr(1, 6));
    }
    e.control = piecewise_constant(3, legs);
    e.lambda = covector_from_json(f33, json{{"123", "1"}, {"231", "-1"}});
    e.stratum = classify(e.lambda, r3);
    e.max_image_rank = 12;
    out.push_back(std::move(e));
  }
  {
    CatalogEntry e;
    e.id = "ex3-lipschitz";
    e.description = "zigzag in the (w1,w3) plane of free(3,3) with w2 = 0";
    e.alg = f33;
    e.control = piecewise_constant(3, {{{qr(1), qr(0), qr(2)}, qr(1, 4)},
                                       {{qr(2), qr(0), qr(-1)}, qr(1, 4)},
                                       {{qr(-3), qr(0), qr(1, 2)}, qr(1, 4)},
                                       {{qr(1, 2), qr(0), qr(-3)}, qr(1, 4)}});
    e.lambda = DualCovector<Rational>::dual_of(f33, "223");
    e.stratum = classify(e.lambda, r3);
    e.max_image_rank = f33->dim() - 1;
    out.push_back(std::move(e));
  }
  {
    CatalogEntry e;
    e.id = "ex3-spiral";
    e.description = "polygonal surrogate of the spiral t (cos phi, 0, sin phi), phi = log(1 - log t)";
    e.alg = f33;
    std::vector<Vec<Rational>> pts{{qr(0), qr(0), qr(0)}};
    std::vector<Rational> times{qr(0)};
    for (int k = 10; k >= 0; --k) {
      const double t = std::ldexp(1.0, -k);
      const double phi = std::log(1 - std::log(t));
      pts.push_back({rationalize(t * std::cos(phi)), qr(0), rationalize(t * std::sin(phi))});
      times.push_back(qr(1, 1L << k));
    }
    e.control = polygon(3, pts, times);
    e.lambda = DualCovector<Rational>::dual_of(f33, "223");
    e.stratum = classify(e.lambda, r3);
    e.max_image_rank = f33->dim() - 1;
    out.push_back(std::move(e));
  }
  {
    CatalogEntry e;
    e.id = "gole-karidi";
    e.description = "parabola u = (t, 1) in free(2,4)";
    e.alg = GradedAlgebra::free(2, 4);
    e.control = PolyControl<Rational>(
        2, {ControlPiece<Rational>{qr(1), {Polynomial<Rational>({qr(0), qr(1)}), Polynomial<Rational>::constant(qr(1))}}});
    e.lambda = covector_from_json(e.alg, json{{"2212", "1"}, {"112", "-1"}});
    e.stratum = classify(e.lambda, CaseTag{CaseKind::R2S4, true});
    e.max_image_rank = e.alg->dim() - 1;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace carnot
